import collections
import json
import shutil
import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from ganmut.datapipe import (
    REMAP_TABLES,
    CommandDetector,
    Detection,
    IngestionError,
    LabelSchemeError,
    ManifestError,
    ManifestLoader,
    ManifestRecord,
    StaticDetector,
    WholeFrameDetector,
    build_manifest,
    detect_primary_face,
    load_batch,
    make_detector,
    read_manifest,
    remap_label,
    write_manifest,
)
from ganmut.emotion_space import EmotionLabel

FIXTURE = Path(__file__).parent / "fixtures" / "affwild_mini"
A = EmotionLabel


def save_png(path, size=(8, 8), value=128):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.full((size[1], size[0], 3), value, dtype=np.uint8)).save(path)
    return path


class TestRemap:
    def test_other_dropped(self):
        assert remap_label("aff_wild2", 7) is None
        assert remap_label("aff_wild2", -1) is None

    def test_identity_scheme(self):
        assert remap_label("canonical", 3) is A.HAPPINESS

    @pytest.mark.parametrize("scheme", sorted(REMAP_TABLES))
    def test_tables_cover_canonical_labels_once(self, scheme):
        kept = [v for v in REMAP_TABLES[scheme].values() if v is not None]
        assert collections.Counter(kept) == collections.Counter(EmotionLabel)

    def test_unknown_scheme(self):
        with pytest.raises(LabelSchemeError):
            remap_label("rafdb", 1)


class TestDetectors:
    def test_highest_confidence_wins(self, tmp_path):
        img = save_png(tmp_path / "f.png")
        client = StaticDetector({"f.png": [Detection((0, 0, 4, 4), 0.4), Detection((1, 1, 5, 5), 0.9)]})
        assert detect_primary_face(client, img).confidence == 0.9

    def test_threshold(self, tmp_path):
        img = save_png(tmp_path / "f.png")
        client = StaticDetector({"f.png": [Detection((0, 0, 4, 4), 0.3), Detection((0, 0, 2, 2), 0.39)]},
                                min_confidence=0.4)
        assert detect_primary_face(client, img) is None

    def test_whole_frame(self, tmp_path):
        img = save_png(tmp_path / "f.png", size=(10, 6))
        face = detect_primary_face(WholeFrameDetector(), img)
        assert face.bbox == (0, 0, 10, 6) and face.confidence == 1.0

    def test_bbox_clamped(self, tmp_path):
        img = save_png(tmp_path / "f.png", size=(10, 10))
        client = StaticDetector({"f.png": [Detection((-3, 5, 8, 20), 0.8)]})
        assert detect_primary_face(client, img).bbox == (0, 5, 5, 5)

    def test_undecodable(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not an image")
        with pytest.raises(IngestionError):
            WholeFrameDetector().detect(bad)

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 1), max_size=12), st.floats(0, 1))
    def test_sorted_and_thresholded(self, confidences, threshold):
        img = FIXTURE / "frames" / "vid01" / "00001.png"
        client = StaticDetector({img.name: [Detection((0, 0, 3, 3), c) for c in confidences]}, threshold)
        found = [d.confidence for d in client.detect(img)]
        assert found == sorted(found, reverse=True)
        assert all(c >= threshold for c in found)
        assert len(found) == sum(c >= threshold for c in confidences)

    def test_detection_json(self):
        det = Detection.from_json({"bbox": [1, 2, 3, 4], "confidence": 0.5,
                                   "landmarks": [[1, 1], [2, 2], [3, 3], [4, 4], [5, 5]]})
        assert det.bbox == (1, 2, 3, 4) and len(det.landmarks) == 5
        with pytest.raises(ValueError):
            Detection.from_json({"bbox": [1, 2, 3, 4], "confidence": 1.5})


@pytest.fixture
def detector_script(tmp_path):
    script = tmp_path / "fake_detector.py"
    script.write_text(
        "import json, sys\n"
        "name = sys.argv[-1].rsplit('/', 1)[-1]\n"
        "if name.startswith('fail'):\n"
        "    sys.exit(3)\n"
        "if name.startswith('none'):\n"
        "    sys.exit(0)\n"
        "for conf in (0.35, 0.8, 0.5):\n"
        "    print(json.dumps({'bbox': [1, 1, 4, 4], 'confidence': conf}))\n"
    )
    return f"{sys.executable} {script}"


class TestCommandDetector:
    def test_protocol(self, tmp_path, detector_script):
        img = save_png(tmp_path / "face.png")
        found = CommandDetector(detector_script, min_confidence=0.4).detect(img)
        assert [d.confidence for d in found] == [0.8, 0.5]

    def test_no_faces(self, tmp_path, detector_script):
        img = save_png(tmp_path / "none.png")
        assert CommandDetector(detector_script).detect(img) == []

    def test_failure(self, tmp_path, detector_script):
        img = save_png(tmp_path / "fail.png")
        with pytest.raises(IngestionError):
            CommandDetector(detector_script).detect(img)

    def test_factory(self, detector_script):
        assert isinstance(make_detector("cmd:" + detector_script, 0.4), CommandDetector)
        assert make_detector("whole-frame", 0.4).min_confidence == 0.4
        with pytest.raises(ValueError):
            make_detector("retinaface")


class TestBuildManifest:
    def test_fixture(self, tmp_path):
        out = tmp_path / "manifest.csv"
        stats = build_manifest(FIXTURE / "frames", FIXTURE / "annotations", WholeFrameDetector(), out)
        assert out.read_bytes() == (FIXTURE / "expected_manifest.csv").read_bytes()
        assert (stats.written, stats.dropped_label, stats.dropped_no_face) == (2, 1, 0)
        crop = Image.open(tmp_path / "crops" / "vid01" / "00001.png")
        assert crop.size == (10, 12)

    def test_empty_root(self, tmp_path):
        (tmp_path / "frames").mkdir()
        out = tmp_path / "m.csv"
        stats = build_manifest(tmp_path / "frames", tmp_path, WholeFrameDetector(), out)
        assert out.read_text() == "path,label\n"
        assert stats.written == 0 and stats.frames_seen == 0

    def test_mixed_accounting(self, tmp_path):
        frames = tmp_path / "frames"
        ann = tmp_path / "ann"
        ann.mkdir()
        for i in range(1, 6):
            save_png(frames / "v1" / f"{i:05d}.png")
        (frames / "v1" / "00006.png").write_bytes(b"corrupt")
        # labels: anger, no face (00002), other, sad, unannotated, happy (corrupt frame)
        (ann / "v1.txt").write_text("header\n1\n1\n7\n5\n-1\n4\n")
        save_png(frames / "v2" / "00001.png")  # no annotation file -> video skipped
        client = StaticDetector({f"{i:05d}.png": [Detection((0, 0, 8, 8), 0.9)] for i in (1, 3, 4, 5, 6)},
                                min_confidence=0.4)
        out = tmp_path / "out" / "m.csv"
        stats = build_manifest(frames, ann, client, out)
        assert stats.frames_seen == 6
        assert (stats.written, stats.dropped_label, stats.dropped_no_face, stats.decode_errors) == (2, 2, 1, 1)
        assert stats.videos_skipped == 1
        assert stats.frames_seen == stats.written + stats.dropped_label + stats.dropped_no_face + stats.decode_errors
        assert [(r.path, r.label) for r in read_manifest(out)] == [
            ("crops/v1/00001.png", A.ANGER), ("crops/v1/00004.png", A.SADNESS)]

    def test_row_order_independent_of_workers(self, tmp_path):
        frames, ann = tmp_path / "frames", tmp_path / "ann"
        ann.mkdir()
        for v in ("b", "a", "c"):
            for i in (1, 2):
                save_png(frames / v / f"{i:05d}.png", value=10 * i)
            (ann / f"{v}.txt").write_text("h\n0\n6\n")
        build_manifest(frames, ann, WholeFrameDetector(), tmp_path / "one" / "m.csv", workers=1)
        build_manifest(frames, ann, WholeFrameDetector(), tmp_path / "many" / "m.csv", workers=3)
        one = (tmp_path / "one" / "m.csv").read_text()
        assert one == (tmp_path / "many" / "m.csv").read_text()
        paths = [line.split(",")[0] for line in one.splitlines()[1:]]
        assert paths == sorted(paths) and len(paths) == 6

    def test_manifest_io(self, tmp_path):
        recs = [ManifestRecord("x/1.png", A.FEAR), ManifestRecord("x/2.png", A.NEUTRAL)]
        write_manifest(recs, tmp_path / "m.csv")
        assert read_manifest(tmp_path / "m.csv") == recs
        (tmp_path / "bad.csv").write_text("file,emotion\n")
        with pytest.raises(ManifestError):
            read_manifest(tmp_path / "bad.csv")
        (tmp_path / "bad2.csv").write_text("path,label\na.png,9\n")
        with pytest.raises(ManifestError):
            read_manifest(tmp_path / "bad2.csv")


class TestLoader:
    def test_same_record_same_pixels(self, synthetic_manifest):
        recs = read_manifest(synthetic_manifest)
        twice = [recs[3], recs[3]]
        x, y = load_batch(twice, 2, 16, augment=False, root=synthetic_manifest.parent)
        assert torch.equal(x[0], x[1]) and y.tolist() == [int(recs[3].label)] * 2

    def test_bounds(self, synthetic_manifest):
        loader = ManifestLoader(synthetic_manifest, 16, 16, augment=True, seed=1)
        for x, _ in loader:
            assert x.shape[1:] == (3, 16, 16)
            assert float(x.min()) >= -1.0 and float(x.max()) <= 1.0

    def test_resize(self, synthetic_manifest):
        x, _ = load_batch(synthetic_manifest, 4, 32)
        assert x.shape == (4, 3, 32, 32)

    def test_augmented_batch_reproducible(self, synthetic_manifest):
        a = load_batch(synthetic_manifest, 8, 16, augment=True, rng=np.random.default_rng(7))
        b = load_batch(synthetic_manifest, 8, 16, augment=True, rng=np.random.default_rng(7))
        plain = load_batch(synthetic_manifest, 8, 16, augment=False, rng=np.random.default_rng(7))
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])
        assert not torch.equal(a[0], plain[0])

    def test_loader_epochs_reproducible(self, synthetic_manifest):
        def digest(seed):
            loader = ManifestLoader(synthetic_manifest, 8, 16, augment=True, seed=seed)
            return [float(x.sum()) for _ in range(2) for x, _ in loader]
        assert digest(3) == digest(3)
        assert digest(3) != digest(4)

    def test_epoch_preserves_label_distribution(self, synthetic_manifest):
        loader = ManifestLoader(synthetic_manifest, 7, 16, seed=2)
        expected = collections.Counter(int(r.label) for r in read_manifest(synthetic_manifest))
        for _ in range(3):
            seen = collections.Counter(l for _, y in loader for l in y.tolist())
            assert seen == expected
        assert len(loader) == 9

    def test_unreadable_records(self, synthetic_manifest, tmp_path, caplog):
        recs = read_manifest(synthetic_manifest)[:3] + [ManifestRecord("missing.png", A.FEAR)]
        loader = ManifestLoader(recs, 2, 16, root=synthetic_manifest.parent)
        assert len(loader.labels) == 3
        assert "missing.png" in caplog.text
        with pytest.raises(ManifestError):
            ManifestLoader([ManifestRecord("missing.png", A.FEAR)], 2, 16, root=tmp_path)
        with pytest.raises(ManifestError):
            ManifestLoader([], 2, 16)
