"""Command-line driver for the radiograph triage toolkit.

Subcommands cover the full workflow: ``scan`` a dataset tree, ``train`` a
classifier, ``eval`` a checkpoint, ``compare`` evaluation reports,
``predict`` probabilities for individual images, render ``cam`` overlays,
and ``serve`` the review worklist over HTTP.

Every invocation reads settings from built-in defaults, then an optional
flat JSON config file (``--config``), then explicit command-line flags,
in that order.  Commands that produce files write them under a fresh run
directory named from the timestamp and a hash of the effective config,
and drop a ``config.json`` snapshot there so the run can be reproduced
with ``--config``.

Exit codes: 0 success, 2 input/path problems, 3 configuration problems,
4 runtime failures (diverged training, model errors, and the like).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cam import DEFAULT_ALPHA, DEFAULT_COLORMAP, localize
from .dataset import (
    Mode,
    PreprocessConfig,
    Split,
    export_manifest_csv,
    import_manifest_csv,
    load_image,
    preprocess,
    scan_dataset,
    summarize,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    InputFileError,
    RadtriageError,
)
from .metrics import DEFAULT_THRESHOLD, EvalLevel, EvalReport, compare_report, evaluate
from .modelzoo import BACKBONES, ModelConfig, build_model, load_checkpoint
from .training import CheckpointMetric, LossWeighting, TrainConfig, train

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

_SPLITS = ("train", "valid")
_LEVELS = ("image", "study")


@dataclass
class RunConfig:
    """Flat bundle of every tunable the subcommands share.

    All fields have defaults, so an empty config file (or none at all) is
    valid; JSON config keys and flag names map onto these fields 1:1.
    """

    root: str = "MURA-v1.1"
    split: str = "train"
    backbone: str = "densenet169"
    pretrained: bool = True
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-4
    seed: int = 0
    threshold: float = DEFAULT_THRESHOLD
    level: str = "study"
    target_size: int = 320
    augment: bool = True
    class_balanced: bool = False
    alpha: float = DEFAULT_ALPHA
    colormap: str = DEFAULT_COLORMAP
    out: str = "runs"
    port: int = 8000
    host: str = "127.0.0.1"
    db: str = "worklist.db"

    def __post_init__(self):
        if self.split not in _SPLITS:
            raise ConfigError(f"split must be one of {_SPLITS}, got {self.split!r}")
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.level not in _LEVELS:
            raise ConfigError(f"level must be one of {_LEVELS}, got {self.level!r}")
        if self.target_size < 32:
            raise ConfigError("target_size must be >= 32")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if not 1 <= self.port <= 65535:
            raise ConfigError("port must be in [1, 65535]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def load_run_config(
    config_path: str | None, overrides: dict, defaults: dict | None = None
) -> RunConfig:
    """Merge defaults <- command defaults <- config file <- explicit flags."""
    values: dict = dict(defaults or {})
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {str(path)!r} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {str(path)!r} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a flat JSON object")
        for key in loaded:
            if key not in _FIELD_NAMES:
                raise ConfigError(f"unknown config key {key!r}")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))


def config_digest(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


def make_run_dir(config: RunConfig) -> Path:
    """Create runs/<stamp>_<confighash>; suffix on collision."""
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(config.out) / f"run_{stamp}_{config_digest(config)}"
    candidate, n = base, 1
    while candidate.exists():
        n += 1
        candidate = base.with_name(f"{base.name}-{n}")
    candidate.mkdir(parents=True)
    (candidate / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    return candidate


def _overrides(args: argparse.Namespace) -> dict:
    return {
        name: getattr(args, name)
        for name in _FIELD_NAMES
        if getattr(args, name, None) is not None
    }


def _require_dir(path: str | Path) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset root {str(path)!r} does not exist")
    return path


def _load_model(checkpoint_path: str, backbone: str | None = None):
    ckpt = load_checkpoint(checkpoint_path, expected_backbone=backbone)
    return ckpt


# ---------------------------------------------------------------------------
# subcommands


def cmd_scan(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    root = _require_dir(config.root)
    manifest = scan_dataset(root, config.split)
    for line in manifest.diagnostics:
        print(f"warning: {line}", file=sys.stderr)
    print(summarize(manifest).as_table())
    print(f"{len(manifest.studies)} studies / {manifest.image_count} images")
    if args.export is not None:
        export_manifest_csv(manifest, args.export)
        print(f"manifest written to {args.export}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    root = _require_dir(config.root)
    train_manifest = scan_dataset(root, Split.TRAIN)
    valid_manifest = scan_dataset(root, Split.VALID)

    run_dir = make_run_dir(config)
    log_path = run_dir / "run.log"

    def log(record) -> None:
        line = (
            f"epoch {record.epoch:3d}  train_loss {record.train_loss:.4f}  "
            f"valid_loss {record.valid_loss:.4f}  valid_kappa {record.valid_kappa:.4f}  "
            f"lr {record.lr:.2e}  {record.seconds:.1f}s"
        )
        print(line)
        with open(log_path, "a") as fh:
            fh.write(line + "\n")

    model = build_model(ModelConfig(config.backbone, pretrained=config.pretrained))
    train_config = TrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        initial_lr=config.lr,
        seed=config.seed,
        loss_weighting=(
            LossWeighting.CLASS_BALANCED if config.class_balanced else LossWeighting.NONE
        ),
        checkpoint_metric=CheckpointMetric.KAPPA,
    )
    prep = PreprocessConfig(target_size=config.target_size, augment=config.augment)
    print(
        f"training {config.backbone} ({model.parameter_count:,} parameters) "
        f"on {train_manifest.image_count} images; run dir {run_dir}"
    )
    result = train(
        model,
        train_manifest,
        valid_manifest,
        train_config,
        preprocess=prep,
        out_dir=run_dir,
        log=log,
    )
    print(
        f"best epoch {result.best_epoch} "
        f"(valid kappa {result.best_metric_value:.4f}); "
        f"checkpoint {run_dir / 'best.ckpt'}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args), defaults={"split": "valid"})
    ckpt = _load_model(args.checkpoint)
    root = _require_dir(config.root)
    manifest = scan_dataset(root, config.split)
    level = EvalLevel.IMAGE if config.level == "image" else EvalLevel.STUDY
    report = evaluate(
        ckpt.model,
        manifest,
        level=level,
        threshold=config.threshold,
        config=ckpt.preprocess,
        batch_size=config.batch_size,
        model_id=ckpt.config.backbone,
    )
    report.parameter_count = ckpt.model.parameter_count
    run_dir = make_run_dir(config)
    report_path = run_dir / "report.json"
    report_path.write_text(report.to_json())
    overall = report.overall
    print(
        f"{ckpt.config.backbone} on {config.split} ({config.level} level): "
        f"kappa {overall.kappa:.4f}  accuracy {overall.accuracy:.4f}  "
        f"precision {overall.precision:.4f}  recall {overall.recall:.4f}  "
        f"f1 {overall.f1:.4f}"
    )
    print(f"report written to {report_path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    reports = []
    for path in args.reports:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"report {str(path)!r} does not exist")
        try:
            reports.append(EvalReport.from_json(path.read_text()))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputFileError(
                f"{str(path)!r} is not a valid evaluation report: {exc}"
            )
    display_names = {key: spec.display_name for key, spec in BACKBONES.items()}
    markdown, csv_text = compare_report(reports, display_names=display_names)
    run_dir = make_run_dir(config)
    (run_dir / "comparison.md").write_text(markdown)
    (run_dir / "comparison.csv").write_text(csv_text)
    print(markdown)
    print(f"tables written to {run_dir}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    ckpt = _load_model(args.checkpoint)
    tensors = []
    for image_path in args.images:
        if not Path(image_path).is_file():
            raise FileNotFoundError(f"image {image_path!r} does not exist")
        raw = load_image(image_path)
        tensors.append(preprocess(raw, ckpt.preprocess, mode=Mode.EVAL).data)
    probs = ckpt.model.predict(np.stack(tensors))
    for image_path, prob in zip(args.images, probs):
        verdict = "abnormal" if prob >= config.threshold else "normal"
        print(f"{image_path}\t{prob:.6f}\t{verdict}")
    return EXIT_OK


def cmd_cam(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _overrides(args))
    ckpt = _load_model(args.checkpoint)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for image_path in args.images:
        if not Path(image_path).is_file():
            raise FileNotFoundError(f"image {image_path!r} does not exist")
        raw = load_image(image_path)
        result = localize(
            ckpt.model,
            raw,
            threshold=config.threshold,
            config=ckpt.preprocess,
            alpha=config.alpha,
            colormap=config.colormap,
        )
        stem = Path(image_path).stem
        sidecar = out_dir / f"{stem}_cam.json"
        sidecar.write_text(result.sidecar_json())
        if result.overlay is not None:
            overlay_path = out_dir / f"{stem}_cam.png"
            result.overlay.save_png(overlay_path)
            print(
                f"{image_path}\t{result.probability:.6f}\toverlay {overlay_path}"
            )
        else:
            print(
                f"{image_path}\t{result.probability:.6f}\t"
                "below threshold, no overlay"
            )
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    # Imported lazily: the other subcommands work without the service stack.
    import uvicorn

    from .service import ServiceConfig, checkpoint_digest, create_app, score_manifest
    from .service.store import WorklistStore

    config = load_run_config(args.config, _overrides(args))
    ckpt = _load_model(args.checkpoint)
    manifest_path = Path(args.manifest)
    if manifest_path.is_dir():
        manifest = scan_dataset(manifest_path, config.split)
    elif manifest_path.is_file():
        manifest = import_manifest_csv(manifest_path)
    else:
        raise FileNotFoundError(
            f"manifest {str(manifest_path)!r} does not exist"
        )

    store = WorklistStore(Path(config.db))
    scored = score_manifest(
        ckpt.model,
        manifest,
        store,
        config=ckpt.preprocess,
        threshold=config.threshold,
        batch_size=config.batch_size,
    )
    store.close()
    print(f"scored {scored} studies into {config.db}")

    cache_dir = Path(args.cache_dir) if args.cache_dir else Path(config.out) / "overlay_cache"
    frontend_dir = Path(args.frontend) if args.frontend else None
    service_config = ServiceConfig(
        db_path=Path(config.db),
        cache_dir=cache_dir,
        scorer=ckpt.model,
        model_key=checkpoint_digest(args.checkpoint),
        threshold=config.threshold,
        alpha=config.alpha,
        colormap=config.colormap,
        preprocess=ckpt.preprocess,
        frontend_dir=frontend_dir,
    )
    app = create_app(service_config)
    print(f"serving worklist on http://{config.host}:{config.port}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file", default=None)
    parser.add_argument("--root", help="dataset root directory", default=None)
    parser.add_argument(
        "--split", choices=_SPLITS, default=None, help="dataset split to read"
    )
    parser.add_argument(
        "--backbone", choices=sorted(BACKBONES), default=None, help="CNN backbone"
    )
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None, help="initial learning rate")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument(
        "--threshold", type=float, default=None, help="abnormality decision threshold"
    )
    parser.add_argument("--out", default=None, help="output directory for run artifacts")
    parser.add_argument("--port", type=int, default=None, help="service port")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radtriage",
        description="Train, evaluate, and serve radiograph abnormality classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="summarize a dataset tree")
    _add_common(p)
    p.add_argument("--export", default=None, help="write the manifest CSV here")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("train", help="train a classifier")
    _add_common(p)
    p.add_argument(
        "--no-pretrained",
        dest="pretrained",
        action="store_const",
        const=False,
        default=None,
        help="start from random weights instead of ImageNet",
    )
    p.add_argument(
        "--target-size", dest="target_size", type=int, default=None,
        help="square input resolution",
    )
    p.add_argument(
        "--no-augment",
        dest="augment",
        action="store_const",
        const=False,
        default=None,
        help="disable training-time flips/rotations",
    )
    p.add_argument(
        "--class-balanced",
        dest="class_balanced",
        action="store_const",
        const=True,
        default=None,
        help="weight the loss by inverse class frequency",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _add_common(p)
    p.add_argument("checkpoint", help="checkpoint file from training")
    p.add_argument(
        "--level", choices=_LEVELS, default=None, help="evaluation granularity"
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="tabulate evaluation reports side by side")
    _add_common(p)
    p.add_argument("reports", nargs="+", help="evaluation report JSON files")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="print abnormality probabilities for images")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="+", help="radiograph image files")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cam", help="render activation overlays for images")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="+", help="radiograph image files")
    p.add_argument("--alpha", type=float, default=None, help="overlay opacity")
    p.set_defaults(func=cmd_cam)

    p = sub.add_parser("serve", help="score a manifest and serve the triage worklist")
    _add_common(p)
    p.add_argument("checkpoint")
    p.add_argument("manifest", help="dataset root directory or manifest CSV")
    p.add_argument("--db", default=None, help="worklist database file")
    p.add_argument("--host", default=None)
    p.add_argument("--cache-dir", dest="cache_dir", default=None)
    p.add_argument("--frontend", default=None, help="built web UI directory to mount at /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, CheckpointError, InputFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RadtriageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
