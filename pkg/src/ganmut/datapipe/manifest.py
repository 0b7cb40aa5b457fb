"""Training manifests: CSV files of ``path,label`` rows.

Expected input layout::

    frames_root/<video>/<frame>.png|jpg      one directory per video
    annotations_root/<video>.txt             header line, then one label per frame

Frame ``n`` (the integer file stem, or the 1-based sorted position when the
stem is not numeric) takes its label from data row ``n``, i.e. line ``n + 1``.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from ..emotion_space import EmotionLabel
from .detectors import DetectorClient, IngestionError, detect_primary_face, open_image
from .labels import remap_label

log = logging.getLogger(__name__)

FRAME_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: EmotionLabel


@dataclass
class ManifestStats:
    frames_seen: int = 0
    written: int = 0
    dropped_label: int = 0
    dropped_no_face: int = 0
    decode_errors: int = 0
    videos_seen: int = 0
    videos_skipped: int = 0

    def merge(self, other: "ManifestStats") -> None:
        for key, value in asdict(other).items():
            setattr(self, key, getattr(self, key) + value)

    def summary(self) -> str:
        return (f"written={self.written} dropped_label={self.dropped_label} "
                f"dropped_no_face={self.dropped_no_face} decode_errors={self.decode_errors} "
                f"frames_seen={self.frames_seen} videos_skipped={self.videos_skipped}")


def read_annotations(path: Path) -> list[int]:
    lines = path.read_text(encoding="utf-8").splitlines()
    labels = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            labels.append(int(line.split(",")[0]))
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: not an integer label: {line!r}") from None
    return labels


def _frame_number(frame: Path, position: int) -> int:
    return int(frame.stem) if frame.stem.isdigit() else position


def _process_video(video_dir: Path, annotations_root: Path, client: DetectorClient, scheme: str,
                   crop_root: Path, base: Path):
    stats = ManifestStats()
    ann = annotations_root / f"{video_dir.name}.txt"
    if not ann.is_file():
        log.warning("no annotation file for video %s; skipped", video_dir.name)
        stats.videos_skipped = 1
        return stats, []
    stats.videos_seen = 1
    labels = read_annotations(ann)
    frames = sorted(p for p in video_dir.iterdir() if p.suffix.lower() in FRAME_EXTENSIONS)
    records = []
    for position, frame in enumerate(frames, start=1):
        stats.frames_seen += 1
        n = _frame_number(frame, position)
        label = remap_label(scheme, labels[n - 1]) if 1 <= n <= len(labels) else None
        if label is None:
            stats.dropped_label += 1
            continue
        try:
            face = detect_primary_face(client, frame)
            if face is None:
                stats.dropped_no_face += 1
                continue
            x, y, w, h = face.bbox
            crop = open_image(frame).crop((x, y, x + w, y + h))
        except IngestionError as exc:
            log.warning("%s", exc)
            stats.decode_errors += 1
            continue
        dest = crop_root / video_dir.name / f"{frame.stem}.png"
        dest.parent.mkdir(parents=True, exist_ok=True)
        crop.save(dest)
        records.append(ManifestRecord(Path(os.path.relpath(dest, base)).as_posix(), label))
        stats.written += 1
    return stats, records


def build_manifest(frames_root: str | Path, annotations_root: str | Path, client: DetectorClient,
                   out_path: str | Path, scheme: str = "aff_wild2", crop_dir: str | Path | None = None,
                   workers: int = 1) -> ManifestStats:
    """Crop the primary face of every labelled frame and index the crops.

    Crops go to ``crop_dir`` (default: ``crops/`` next to the manifest); CSV
    paths are relative to the manifest's directory and rows are sorted by path.
    """
    frames_root, annotations_root, out_path = Path(frames_root), Path(annotations_root), Path(out_path)
    base = out_path.parent
    crop_root = Path(crop_dir) if crop_dir is not None else base / "crops"
    videos = sorted(p for p in frames_root.iterdir() if p.is_dir()) if frames_root.is_dir() else []

    def work(video):
        return _process_video(video, annotations_root, client, scheme, crop_root, base)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, videos))
    else:
        results = [work(v) for v in videos]

    stats, records = ManifestStats(), []
    for s, r in results:
        stats.merge(s)
        records.extend(r)
    write_manifest(sorted(records, key=lambda r: r.path), out_path)
    return stats


def write_manifest(records, out_path: str | Path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label"])
        for rec in records:
            writer.writerow([rec.path, int(rec.label)])


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label"]:
            raise ManifestError(f"{path}: expected header 'path,label', got {header!r}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ManifestError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                label = EmotionLabel(int(row[1]))
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: bad label {row[1]!r}") from None
            records.append(ManifestRecord(row[0], label))
    return records
