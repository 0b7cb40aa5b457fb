"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error,
3 refusal to overwrite existing output (pass ``--force``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_EXISTS = 0, 1, 2, 3
METRICS = ("fed", "smoothness", "disc-f1")

log = logging.getLogger("ganmut")


class UsageError(Exception):
    pass


class OutputExists(Exception):
    pass


def _refuse_overwrite(path: Path, force: bool) -> None:
    if force:
        return
    if path.is_dir() and any(path.iterdir()):
        raise OutputExists(f"{path} exists and is not empty (use --force)")
    if path.is_file():
        raise OutputExists(f"{path} exists (use --force)")


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return value


def _non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} must be >= 1")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganmut", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("manifest", help="crop faces from extracted frames and write a training CSV")
    p.add_argument("--frames-dir", type=Path, required=True, help="one sub-directory of frames per video")
    p.add_argument("--annotations-dir", type=Path, required=True, help="<video>.txt label files")
    p.add_argument("--out", type=Path, required=True, help="manifest CSV to write")
    p.add_argument("--crop-dir", type=Path, help="default: crops/ next to --out")
    p.add_argument("--scheme", default="aff_wild2", help="source label scheme (aff_wild2, affectnet, canonical)")
    p.add_argument("--detector", default="whole-frame", help="'whole-frame' or 'cmd:<detector program>'")
    p.add_argument("--min-confidence", type=_unit_interval, default=0.0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("train", help="train generator, critic and emotion directions")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--steps", type=_non_negative_int, default=10000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-critic", type=int, default=5)
    p.add_argument("--lambda-cls", type=_non_negative, default=1.0)
    p.add_argument("--lambda-rec", type=_non_negative, default=10.0)
    p.add_argument("--lambda-gp", type=_non_negative, default=10.0)
    p.add_argument("--lambda-info-d", type=_non_negative, default=1.0)
    p.add_argument("--lambda-info-g", type=_non_negative, default=1.0)
    p.add_argument("--lambda-rho", type=_non_negative, default=1.0)
    p.add_argument("--lr-g", type=float, default=1e-4)
    p.add_argument("--lr-d", type=float, default=1e-4)
    p.add_argument("--lr-table", type=float, default=1e-4)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--residual-blocks", type=int, default=2)
    p.add_argument("--checkpoint-every", type=int, default=1000)
    p.add_argument("--augment", action="store_true", help="random rotation, translation and zoom")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("generate", help="render a tiled sheet of translated faces")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, nargs="+", required=True)
    p.add_argument("--mode", choices=("grid", "interpolate", "gamut"), default="grid")
    p.add_argument("--emotion", help="emotion name for --mode interpolate")
    p.add_argument("--gamut-size", type=int, default=9)
    p.add_argument("--out", type=Path, required=True, help="image file; metadata goes to <out>.json")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("evaluate", help="compute FED, smoothness and discriminator F1 reports")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--metrics", default=",".join(METRICS), help=f"comma list from {','.join(METRICS)}")
    p.add_argument("--classifier", help="reference classifier .pt or module:factory / file.py:factory")
    p.add_argument("--feature-layer", choices=("penultimate", "conv"), default=None)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-images", type=_positive_int, default=512)
    p.add_argument("--calibration-fraction", type=float, default=0.2)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("fit-classifier", help="train the small reference emotion classifier")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--epochs", type=_positive_int, default=10)
    p.add_argument("--batch-size", type=_positive_int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-layer", choices=("penultimate", "conv"), default="penultimate")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("synth", help="write the synthetic geometric expression dataset")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--n-images", type=_positive_int, default=600)
    p.add_argument("--image-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    return parser


def cmd_manifest(args) -> int:
    from .datapipe import build_manifest, make_detector
    from .datapipe.labels import REMAP_TABLES

    for flag, path in (("--frames-dir", args.frames_dir), ("--annotations-dir", args.annotations_dir)):
        if not path.is_dir():
            raise UsageError(f"{flag} {path} is not a directory")
    if args.scheme not in REMAP_TABLES:
        raise UsageError(f"unknown --scheme {args.scheme!r}; known: {', '.join(sorted(REMAP_TABLES))}")
    try:
        client = make_detector(args.detector, args.min_confidence)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _refuse_overwrite(args.out, args.force)

    stats = build_manifest(args.frames_dir, args.annotations_dir, client, args.out, scheme=args.scheme,
                           crop_dir=args.crop_dir, workers=args.workers)
    print(stats.summary())
    return EXIT_OK


def cmd_train(args) -> int:
    from .datapipe import ManifestLoader
    from .losses import LossWeights
    from .networks import ConfigError, ModelConfig
    from .trainer import TrainConfig, derive_seeds, train

    seeds = derive_seeds(args.seed)
    try:
        weights = LossWeights(args.lambda_cls, args.lambda_rec, args.lambda_gp, args.lambda_info_d,
                              args.lambda_info_g, args.lambda_rho)
        model_config = ModelConfig(image_size=args.image_size, base_channels=args.base_channels,
                                   num_residual_blocks=args.residual_blocks, seed=seeds["model"])
        train_config = TrainConfig(total_steps=args.steps, n_critic=args.n_critic, learning_rate_G=args.lr_g,
                                   learning_rate_D=args.lr_d, learning_rate_table=args.lr_table,
                                   weights=weights, batch_size=args.batch_size, seed=args.seed,
                                   checkpoint_every=args.checkpoint_every)
    except (ValueError, ConfigError) as exc:
        raise UsageError(str(exc)) from None
    if not args.manifest.is_file():
        raise UsageError(f"--manifest {args.manifest} not found")
    _refuse_overwrite(args.out_dir, args.force)

    torch.use_deterministic_algorithms(True)
    loader = ManifestLoader(args.manifest, args.batch_size, args.image_size, augment=args.augment,
                            seed=seeds["data"])
    args.out_dir.mkdir(parents=True, exist_ok=True)
    run = {"argv": sys.argv[1:], "seed": args.seed, "derived_seeds": seeds,
           "model_config": model_config.to_dict(), "train_config": train_config.to_dict()}
    (args.out_dir / "run.json").write_text(json.dumps(run, indent=2, default=str) + "\n", encoding="utf-8")
    state, trace = train(train_config, loader, model_config, out_dir=args.out_dir)
    print(f"trained {state.step} steps; checkpoints and trace.csv in {args.out_dir}")
    return EXIT_OK


def _load_images(paths, size: int) -> torch.Tensor:
    from .datapipe.detectors import IngestionError
    from .datapipe.loader import decode, to_tensor

    try:
        return to_tensor(np.stack([decode(p, size) for p in paths]))
    except IngestionError as exc:
        raise UsageError(str(exc)) from None


def cmd_generate(args) -> int:
    from .checkpoint import load_checkpoint
    from .emotion_space import EmotionLabel, EmotionSpaceError
    from .generate import make_sheet

    if args.mode == "interpolate":
        if not args.emotion:
            raise UsageError("--mode interpolate needs --emotion")
        try:
            emotion = EmotionLabel.parse(args.emotion)
        except EmotionSpaceError as exc:
            raise UsageError(str(exc)) from None
        if emotion is EmotionLabel.NEUTRAL:
            raise UsageError("neutral has no direction to interpolate along")
    else:
        emotion = None
    if args.gamut_size < 2:
        raise UsageError("--gamut-size must be >= 2")
    if not args.checkpoint.is_file():
        raise UsageError(f"--checkpoint {args.checkpoint} not found")
    meta_path = args.out.with_name(args.out.name + ".json")
    _refuse_overwrite(args.out, args.force)
    _refuse_overwrite(meta_path, args.force)

    state = load_checkpoint(args.checkpoint)
    images = _load_images(args.input, state.model_config.image_size)
    sheet, meta = make_sheet(state.G.eval(), state.table, images, args.mode, emotion, args.gamut_size)
    meta["inputs"] = [str(p) for p in args.input]
    meta["checkpoint"] = str(args.checkpoint)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(sheet).save(args.out)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {meta['rows']}x{meta['cols']} tiles to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .checkpoint import load_checkpoint
    from .datapipe import load_batch
    from .emotion_space import EmotionLabel, codes_to_xy, sample_conditions
    from .metrics import average_smoothness, discriminator_f1, fed_score, load_classifier, \
        smoothness_by_emotion, write_report

    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = sorted(set(metrics) - set(METRICS))
    if unknown or not metrics:
        raise UsageError(f"unknown metrics {unknown}; choose from {', '.join(METRICS)}")
    needs_classifier = {"fed", "smoothness"} & set(metrics)
    if needs_classifier and not args.classifier:
        raise UsageError(f"--classifier is required for {', '.join(sorted(needs_classifier))}")
    if not 0.0 < args.calibration_fraction < 1.0:
        raise UsageError("--calibration-fraction must lie in (0, 1)")
    for flag, path in (("--checkpoint", args.checkpoint), ("--manifest", args.manifest)):
        if not path.is_file():
            raise UsageError(f"{flag} {path} not found")
    names = {m: args.out_dir / f"{m.replace('-', '_')}.json" for m in metrics}
    for path in names.values():
        _refuse_overwrite(path, args.force)

    classifier = None
    if needs_classifier:
        try:
            classifier = load_classifier(args.classifier, args.feature_layer)
        except (ValueError, ImportError, AttributeError, TypeError, FileNotFoundError) as exc:
            raise UsageError(f"cannot load classifier: {exc}") from None
    feature_layer = getattr(classifier, "feature_layer", args.feature_layer)

    state = load_checkpoint(args.checkpoint)
    G, D, table = state.G.eval(), state.D.eval(), state.table
    rng = np.random.default_rng(args.seed)
    real, labels = load_batch(args.manifest, args.max_images, state.model_config.image_size, rng=rng)
    # generated set follows the real label distribution, paired with shuffled real inputs
    gen = torch.Generator().manual_seed(args.seed)
    target = labels[torch.randperm(len(labels), generator=gen)]
    with torch.no_grad():
        theta, rho = sample_conditions(table, target, gen)
        fake = G(real, codes_to_xy(theta, rho).to(real.dtype))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    base_config = {"feature_layer": feature_layer, "threshold": None, "seed": args.seed,
                   "checkpoint": str(args.checkpoint), "manifest": str(args.manifest),
                   "checkpoint_step": state.step}
    if "fed" in metrics:
        value = fed_score(classifier, real, fake)
        write_report(names["fed"], "fed", value, base_config, len(real), len(fake))
        print(f"fed={value:.6g}")
    if "smoothness" in metrics:
        neutral = real[labels == int(EmotionLabel.NEUTRAL)]
        source = "neutral"
        if len(neutral) == 0:
            log.warning("no neutral images in the sample; sweeping from all images")
            neutral, source = real, "all"
        per = smoothness_by_emotion(G, table, classifier, neutral)
        value = float(np.mean(list(per.values())))
        write_report(names["smoothness"], "smoothness", value, dict(base_config, input_images=source),
                     len(neutral), len(neutral) * 10 * len(per),
                     per_emotion={k.label_name: v for k, v in per.items()})
        print(f"smoothness={value:.6g}")
    if "disc-f1" in metrics:
        rep = discriminator_f1(D, real, fake, args.calibration_fraction, np.random.default_rng(args.seed))
        config = dict(base_config, threshold=rep["threshold"], calibration_fraction=args.calibration_fraction)
        extra = {k: v for k, v in rep.items() if k not in ("threshold", "n_real", "n_generated")}
        write_report(names["disc-f1"], "disc-f1", rep["f1_average"], config, rep["n_real"], rep["n_generated"],
                     **extra)
        print(f"disc-f1 average={rep['f1_average']:.4f} real={rep['f1_real']:.4f} fake={rep['f1_fake']:.4f}")
    return EXIT_OK


def cmd_fit_classifier(args) -> int:
    from .datapipe import ManifestLoader
    from .metrics import ReferenceClassifier

    if not args.manifest.is_file():
        raise UsageError(f"--manifest {args.manifest} not found")
    _refuse_overwrite(args.out, args.force)
    loader = ManifestLoader(args.manifest, args.batch_size, args.image_size, augment=True, seed=args.seed)
    clf = ReferenceClassifier(feature_layer=args.feature_layer, seed=args.seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(args.seed)
        history = clf.fit(loader, epochs=args.epochs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    clf.save(args.out)
    print(f"final loss {history[-1]:.4f}; saved {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .datapipe import make_synthetic_dataset
    from .networks import SUPPORTED_SIZES

    if args.image_size not in SUPPORTED_SIZES:
        raise UsageError(f"--image-size must be one of {SUPPORTED_SIZES}")
    _refuse_overwrite(args.out_dir, args.force)
    manifest = make_synthetic_dataset(args.out_dir, args.n_images, args.image_size, args.seed)
    print(f"wrote {args.n_images} images; manifest {manifest}")
    return EXIT_OK


COMMANDS = {
    "manifest": cmd_manifest,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "fit-classifier": cmd_fit_classifier,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ganmut {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OutputExists as exc:
        print(f"ganmut {args.command}: refusing to overwrite: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"ganmut {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
