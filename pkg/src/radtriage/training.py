"""Training protocol: weighted binary cross-entropy, Adam at 1e-4 with
default moments, plateau-driven learning-rate decay by a factor of 10,
and best-checkpoint selection on validation kappa.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataset import (
    Manifest,
    Mode,
    PreprocessConfig,
    StudyLabel,
    batch_iterator,
)
from .errors import ConfigError, TrainingDivergedError
from .metrics import EvalLevel, aggregate_study, cohens_kappa, confusion
from .modelzoo import ModelHandle, save_checkpoint

LOSS_EPS = 1e-7


class LossWeighting(enum.Enum):
    NONE = "NONE"
    CLASS_BALANCED = "CLASS_BALANCED"


class CheckpointMetric(enum.Enum):
    KAPPA = "KAPPA"
    LOSS = "LOSS"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    initial_lr: float = 1e-4
    lr_decay_factor: float = 10.0
    plateau_patience: int = 1
    plateau_min_delta: float = 1e-4
    loss_weighting: LossWeighting = LossWeighting.NONE
    seed: int = 0
    checkpoint_metric: CheckpointMetric = CheckpointMetric.KAPPA

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError("initial_lr must be > 0")
        if self.lr_decay_factor <= 1:
            raise ConfigError("lr_decay_factor must be > 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be >= 1")
        if self.plateau_min_delta < 0:
            raise ConfigError("plateau_min_delta must be >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_kappa: float
    lr: float  # learning rate in effect during this epoch
    seconds: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "valid_loss": self.valid_loss,
            "valid_kappa": self.valid_kappa,
            "lr": self.lr,
            "seconds": self.seconds,
        }


@dataclass
class TrainingResult:
    history: list[EpochRecord]
    best_checkpoint: Path | None
    best_epoch: int
    best_metric_value: float
    wall_seconds: float
    final_train_accuracy: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "history": [r.to_dict() for r in self.history],
                "best_checkpoint": (
                    str(self.best_checkpoint) if self.best_checkpoint else None
                ),
                "best_epoch": self.best_epoch,
                "best_metric_value": self.best_metric_value,
                "wall_seconds": self.wall_seconds,
                "final_train_accuracy": self.final_train_accuracy,
                "extras": self.extras,
            },
            indent=2,
        )


def compute_loss(
    probabilities, labels, weights: tuple[float, float] = (1.0, 1.0)
) -> torch.Tensor:
    """Mean weighted binary cross-entropy on probabilities.

    `weights` is (abnormal_weight, normal_weight).  Probabilities are
    clamped to [eps, 1 - eps] before the logs, so perfect predictions
    give a loss of about eps rather than 0/inf.
    """
    if isinstance(probabilities, torch.Tensor):
        p = probabilities
    else:
        p = torch.as_tensor(probabilities, dtype=torch.get_default_dtype())
    y = torch.as_tensor(labels, dtype=p.dtype)
    if p.numel() == 0:
        raise ValueError("cannot compute loss on an empty batch")
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(y.shape)}")
    w_pos, w_neg = weights
    p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS)
    per_sample = -(w_pos * y * torch.log(p) + w_neg * (1.0 - y) * torch.log(1.0 - p))
    return per_sample.mean()


def class_weights(manifest: Manifest) -> tuple[float, float]:
    """Balanced (abnormal_weight, normal_weight) from image-level counts."""
    n_abnormal = sum(
        len(s.image_paths)
        for s in manifest.studies
        if s.label is StudyLabel.ABNORMAL
    )
    n_total = manifest.image_count
    if n_total == 0:
        raise ValueError("empty manifest")
    n_normal = n_total - n_abnormal
    return n_normal / n_total, n_abnormal / n_total


class PlateauScheduler:
    """Divide the lr by a fixed factor whenever validation loss fails to
    improve on the best value by at least min_delta for `patience`
    consecutive epochs.  The bad-epoch counter resets after each decay,
    so one plateau window never triggers two decays.
    """

    def __init__(self, config: TrainConfig):
        self.config = config
        self.lr = config.initial_lr
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, valid_loss: float) -> float:
        """Record this epoch's validation loss; return the lr for the next epoch."""
        if valid_loss < self.best - self.config.plateau_min_delta:
            self.best = valid_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.config.plateau_patience:
                self.lr = self.lr / self.config.lr_decay_factor
                self.bad_epochs = 0
        return self.lr


def lr_schedule_step(
    history: list[float], current_lr: float, config: TrainConfig
) -> float:
    """Functional form of the plateau rule.

    Replays the full validation-loss history (last entry = the epoch just
    finished) and returns `current_lr` divided by the decay factor when
    that final epoch completes a plateau window, unchanged otherwise.
    """
    if not history:
        raise ValueError("history must be non-empty")
    best = math.inf
    bad = 0
    fired_on_last = False
    for loss in history:
        fired_on_last = False
        if loss < best - config.plateau_min_delta:
            best = loss
            bad = 0
        else:
            bad += 1
            if bad >= config.plateau_patience:
                bad = 0
                fired_on_last = True
    return current_lr / config.lr_decay_factor if fired_on_last else current_lr


def _validate_pass(
    model: ModelHandle,
    manifest: Manifest,
    preprocess: PreprocessConfig,
    batch_size: int,
    weights: tuple[float, float],
    threshold: float = 0.5,
) -> tuple[float, float]:
    """Eval-mode pass: (validation loss, study-level kappa)."""
    module = model.module
    module.eval()
    losses: list[tuple[float, int]] = []
    per_study: dict[str, dict] = {}
    with torch.no_grad():
        for batch in batch_iterator(
            manifest, batch_size, shuffle=False, config=preprocess, mode=Mode.EVAL
        ):
            x = torch.from_numpy(batch.images)
            y = torch.from_numpy(batch.labels)
            probs = module(x)
            loss = compute_loss(probs, y, weights)
            losses.append((float(loss), len(batch.labels)))
            for sid, lab, p in zip(
                batch.study_ids, batch.labels, probs.cpu().numpy()
            ):
                entry = per_study.setdefault(sid, {"label": lab >= 0.5, "probs": []})
                entry["probs"].append(float(p))

    total = sum(n for _, n in losses)
    valid_loss = sum(l * n for l, n in losses) / total
    preds, labels = [], []
    for entry in per_study.values():
        _, pred = aggregate_study(entry["probs"], threshold)
        preds.append(int(pred))
        labels.append(int(entry["label"]))
    kappa = cohens_kappa(confusion(preds, labels))
    return valid_loss, kappa


def _train_accuracy(
    model: ModelHandle,
    manifest: Manifest,
    preprocess: PreprocessConfig,
    batch_size: int,
    threshold: float = 0.5,
) -> float:
    """Image-level accuracy of the current weights, augmentation off."""
    module = model.module
    module.eval()
    correct = total = 0
    with torch.no_grad():
        for batch in batch_iterator(
            manifest, batch_size, shuffle=False, config=preprocess, mode=Mode.EVAL
        ):
            probs = module(torch.from_numpy(batch.images)).cpu().numpy()
            preds = probs >= threshold
            correct += int((preds == (batch.labels >= 0.5)).sum())
            total += len(batch.labels)
    return correct / total


def train(
    model: ModelHandle,
    train_manifest: Manifest,
    valid_manifest: Manifest,
    config: TrainConfig,
    preprocess: PreprocessConfig | None = None,
    out_dir: str | Path | None = None,
    log=None,
) -> TrainingResult:
    """Run the full training protocol.

    Per epoch: one pass over the training manifest with Adam, an
    eval-mode validation pass, a plateau-scheduler step, and a checkpoint
    whenever the checkpoint metric improves.  Reproducible for a fixed
    seed and single-worker loading.  Raises TrainingDivergedError with
    epoch/batch/lr context if the loss goes non-finite.
    """
    if not train_manifest.studies or not valid_manifest.studies:
        raise ValueError("training and validation manifests must be non-empty")
    preprocess = preprocess or PreprocessConfig()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if config.loss_weighting is LossWeighting.CLASS_BALANCED:
        weights = class_weights(train_manifest)
    else:
        weights = (1.0, 1.0)

    module = model.module
    optimizer = torch.optim.Adam(
        module.parameters(), lr=config.initial_lr, betas=(0.9, 0.999), eps=1e-8
    )
    scheduler = PlateauScheduler(config)
    higher_is_better = config.checkpoint_metric is CheckpointMetric.KAPPA
    best_value = -math.inf if higher_is_better else math.inf
    best_epoch = 0
    best_path: Path | None = None
    history: list[EpochRecord] = []
    history_file = out_path / "history.jsonl" if out_path else None
    wall_start = time.monotonic()
    lr = config.initial_lr

    for epoch in range(1, config.epochs + 1):
        epoch_start = time.monotonic()
        module.train()
        running, seen = 0.0, 0
        for batch_index, batch in enumerate(
            batch_iterator(
                train_manifest,
                config.batch_size,
                shuffle=True,
                rng=rng,
                config=preprocess,
                mode=Mode.TRAIN,
            )
        ):
            if len(batch.labels) == 1:
                # a lone trailing sample breaks batch statistics; skip it
                continue
            x = torch.from_numpy(batch.images)
            y = torch.from_numpy(batch.labels)
            probs = module(x)
            loss = compute_loss(probs, y, weights)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_index, lr)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            running += float(loss.detach()) * len(batch.labels)
            seen += len(batch.labels)
        if seen == 0:
            raise ValueError(
                "training pass saw no usable batches; need at least two images"
            )
        train_loss = running / seen

        valid_loss, valid_kappa = _validate_pass(
            model, valid_manifest, preprocess, config.batch_size, weights
        )
        record = EpochRecord(
            epoch=epoch,
            train_loss=train_loss,
            valid_loss=valid_loss,
            valid_kappa=valid_kappa,
            lr=lr,
            seconds=time.monotonic() - epoch_start,
        )
        history.append(record)
        if history_file is not None:
            with open(history_file, "a") as fh:
                fh.write(json.dumps(record.to_dict()) + "\n")
        if log is not None:
            log(record)

        metric = valid_kappa if higher_is_better else valid_loss
        improved = metric > best_value if higher_is_better else metric < best_value
        if improved:
            best_value = metric
            best_epoch = epoch
            if out_path is not None:
                best_path = save_checkpoint(
                    model,
                    out_path / "best.ckpt",
                    epoch=epoch,
                    best_metric_name=config.checkpoint_metric.value.lower(),
                    best_metric_value=metric,
                    preprocess=preprocess,
                )

        lr = scheduler.step(valid_loss)
        for group in optimizer.param_groups:
            group["lr"] = lr

    result = TrainingResult(
        history=history,
        best_checkpoint=best_path,
        best_epoch=best_epoch,
        best_metric_value=best_value,
        wall_seconds=time.monotonic() - wall_start,
        final_train_accuracy=_train_accuracy(
            model, train_manifest, preprocess, config.batch_size
        ),
    )
    if out_path is not None:
        (out_path / "result.json").write_text(result.to_json())
    return result
