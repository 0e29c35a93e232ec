"""Evaluation metrics: confusion counts, accuracy/precision/recall/F1,
Cohen's kappa, study-level aggregation, and comparison report rendering.

ABNORMAL is the positive class throughout.  Degenerate denominators
follow total-failure semantics: precision/recall are 0 when undefined,
F1 is 0 when P + R = 0, and kappa is 0 when expected agreement is 1.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import (
    Batch,
    BodyPart,
    Manifest,
    Mode,
    PreprocessConfig,
    batch_iterator,
)

DEFAULT_THRESHOLD = 0.5


class EvalLevel(enum.Enum):
    IMAGE = "IMAGE"
    STUDY = "STUDY"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
        )


def confusion(
    predictions: Sequence[int], labels: Sequence[int]
) -> ConfusionMatrix:
    """Tally binary counts; 1 = abnormal (positive class)."""
    if len(predictions) != len(labels):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels"
        )
    if len(predictions) == 0:
        raise ValueError("cannot build a confusion matrix from empty inputs")
    preds = np.asarray(predictions).astype(bool)
    labs = np.asarray(labels).astype(bool)
    return ConfusionMatrix(
        tp=int(np.sum(preds & labs)),
        fp=int(np.sum(preds & ~labs)),
        tn=int(np.sum(~preds & ~labs)),
        fn=int(np.sum(~preds & labs)),
    )


@dataclass(frozen=True)
class MetricBundle:
    accuracy: float
    precision: float
    recall: float
    f1: float
    kappa: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "kappa": self.kappa,
        }


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metric_bundle(cm: ConfusionMatrix) -> tuple[float, float, float, float]:
    """(accuracy, precision, recall, f1) with 0-on-degenerate denominators."""
    if cm.total == 0:
        raise ValueError("confusion matrix is empty")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if (cm.tp + cm.fp) > 0 else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) > 0 else 0.0
    return accuracy, precision, recall, f1_score(precision, recall)


def cohens_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement between predictions and labels.

    kappa = (p_o - p_e) / (1 - p_e) with
    p_o = (tp + tn) / n and
    p_e = [(tp+fp)(tp+fn) + (tn+fn)(tn+fp)] / n^2.
    Returns 0 when p_e = 1.
    """
    n = cm.total
    if n == 0:
        raise ValueError("confusion matrix is empty")
    p_o = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fp) * (cm.tp + cm.fn) + (cm.tn + cm.fn) * (cm.tn + cm.fp)) / (
        n * n
    )
    if p_e == 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def full_bundle(cm: ConfusionMatrix) -> MetricBundle:
    acc, prec, rec, f1 = metric_bundle(cm)
    return MetricBundle(acc, prec, rec, f1, cohens_kappa(cm))


def aggregate_study(
    image_probabilities: Sequence[float], threshold: float = DEFAULT_THRESHOLD
) -> tuple[float, bool]:
    """Mean of view probabilities; abnormal iff mean >= threshold."""
    if len(image_probabilities) == 0:
        raise ValueError("cannot aggregate an empty probability list")
    probs = np.asarray(image_probabilities, dtype=np.float64)
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    mean = float(probs.mean())
    return mean, mean >= threshold


@dataclass
class EvalReport:
    """Metric suite for one model: overall and per body part."""

    model_id: str
    level: EvalLevel
    threshold: float
    overall: MetricBundle
    per_body_part: dict[str, MetricBundle]
    overall_cm: ConfusionMatrix
    per_body_part_cm: dict[str, ConfusionMatrix]
    parameter_count: int | None = None
    train_seconds: float | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "model_id": self.model_id,
                "level": self.level.value,
                "threshold": self.threshold,
                "overall": self.overall.to_dict(),
                "per_body_part": {
                    k: v.to_dict() for k, v in self.per_body_part.items()
                },
                "overall_cm": vars(self.overall_cm),
                "per_body_part_cm": {
                    k: vars(v) for k, v in self.per_body_part_cm.items()
                },
                "parameter_count": self.parameter_count,
                "train_seconds": self.train_seconds,
                "extras": self.extras,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            model_id=d["model_id"],
            level=EvalLevel(d["level"]),
            threshold=d["threshold"],
            overall=MetricBundle(**d["overall"]),
            per_body_part={
                k: MetricBundle(**v) for k, v in d["per_body_part"].items()
            },
            overall_cm=ConfusionMatrix(**d["overall_cm"]),
            per_body_part_cm={
                k: ConfusionMatrix(**v) for k, v in d["per_body_part_cm"].items()
            },
            parameter_count=d.get("parameter_count"),
            train_seconds=d.get("train_seconds"),
            extras=d.get("extras", {}),
        )


def score_images(
    scorer,
    manifest: Manifest,
    config: PreprocessConfig | None = None,
    batch_size: int = 16,
) -> list[dict]:
    """Run eval-mode inference over every image of a manifest.

    `scorer` is anything with score_batch(images, paths) -> probabilities.
    Returns one record per image: study_id, path, body_part, label (bool
    abnormal), probability.
    """
    config = config or PreprocessConfig()
    by_id = {s.study_id: s for s in manifest.studies}
    records: list[dict] = []
    for batch in batch_iterator(
        manifest, batch_size=batch_size, shuffle=False, config=config, mode=Mode.EVAL
    ):
        probs = np.asarray(scorer.score_batch(batch.images, batch.paths), dtype=np.float64)
        for sid, path, label, prob in zip(
            batch.study_ids, batch.paths, batch.labels, probs
        ):
            records.append(
                {
                    "study_id": sid,
                    "path": path,
                    "body_part": by_id[sid].body_part,
                    "abnormal": bool(label >= 0.5),
                    "probability": float(prob),
                }
            )
    return records


def evaluate(
    scorer,
    manifest: Manifest,
    level: EvalLevel = EvalLevel.STUDY,
    threshold: float = DEFAULT_THRESHOLD,
    config: PreprocessConfig | None = None,
    batch_size: int = 16,
    model_id: str = "model",
) -> EvalReport:
    """Score a manifest and derive the full metric suite.

    At STUDY level, per-image probabilities are averaged per study before
    thresholding; at IMAGE level every view is scored independently
    against its study's label.
    """
    records = score_images(scorer, manifest, config=config, batch_size=batch_size)
    if not records:
        raise ValueError("manifest has no images to evaluate")

    if level is EvalLevel.STUDY:
        grouped: dict[str, list[dict]] = {}
        for r in records:
            grouped.setdefault(r["study_id"], []).append(r)
        units = []
        for sid, rows in grouped.items():
            prob, pred = aggregate_study(
                [r["probability"] for r in rows], threshold
            )
            units.append(
                {
                    "body_part": rows[0]["body_part"],
                    "abnormal": rows[0]["abnormal"],
                    "prediction": pred,
                }
            )
    else:
        units = [
            {
                "body_part": r["body_part"],
                "abnormal": r["abnormal"],
                "prediction": r["probability"] >= threshold,
            }
            for r in records
        ]

    per_cm: dict[str, ConfusionMatrix] = {}
    for part in BodyPart:
        rows = [u for u in units if u["body_part"] is part]
        if not rows:
            continue
        per_cm[part.value] = confusion(
            [int(u["prediction"]) for u in rows],
            [int(u["abnormal"]) for u in rows],
        )
    overall_cm = ConfusionMatrix(0, 0, 0, 0)
    for cm in per_cm.values():
        overall_cm = overall_cm + cm

    return EvalReport(
        model_id=model_id,
        level=level,
        threshold=threshold,
        overall=full_bundle(overall_cm),
        per_body_part={k: full_bundle(v) for k, v in per_cm.items()},
        overall_cm=overall_cm,
        per_body_part_cm=per_cm,
    )


# Canonical row order for comparison tables: family-alphabetical with the
# plain VGG variants ahead of the batch-norm ones.
MODEL_TABLE_ORDER = [
    "densenet121",
    "densenet161",
    "densenet169",
    "densenet201",
    "inception_v3",
    "mobilenet_v2",
    "resnet34",
    "resnet50",
    "resnet101",
    "resnet152",
    "resnext50",
    "resnext101",
    "vgg16",
    "vgg19",
    "vgg11_bn",
    "vgg13_bn",
    "vgg16_bn",
    "vgg19_bn",
]

_METRIC_COLUMNS = ["accuracy", "precision", "recall", "f1", "kappa"]


def _sort_reports(reports: Sequence[EvalReport]) -> list[EvalReport]:
    rank = {name: i for i, name in enumerate(MODEL_TABLE_ORDER)}

    def key(r: EvalReport):
        return (rank.get(r.model_id, len(rank)), r.model_id)

    return sorted(reports, key=key)


def compare_report(
    reports: Sequence[EvalReport], display_names: Mapping[str, str] | None = None
) -> tuple[str, str]:
    """Render model-comparison tables as (markdown, csv).

    The first table lists the overall metric suite plus parameter count
    and training time per model; the second lists per-body-part kappa
    with models as columns.  The best value in each metric column (and
    per body-part row) is bolded in the markdown output; parameter count
    and training time are best when smallest.
    """
    if not reports:
        raise ValueError("need at least one report to compare")
    reports = _sort_reports(reports)
    display_names = display_names or {}

    def disp(model_id: str) -> str:
        return display_names.get(model_id, model_id)

    rows = []
    for r in reports:
        rows.append(
            {
                "model": disp(r.model_id),
                **{m: getattr(r.overall, m) for m in _METRIC_COLUMNS},
                "parameters_m": (
                    r.parameter_count / 1e6 if r.parameter_count else None
                ),
                "train_seconds": r.train_seconds,
            }
        )

    best: dict[str, float | None] = {}
    for col in _METRIC_COLUMNS:
        best[col] = max(row[col] for row in rows)
    for col, smaller_better in (("parameters_m", True), ("train_seconds", True)):
        vals = [row[col] for row in rows if row[col] is not None]
        best[col] = min(vals) if vals else None

    def fmt(value, col) -> str:
        if value is None:
            return "-"
        text = f"{value:.3f}" if col in _METRIC_COLUMNS else f"{value:.1f}"
        if best[col] is not None and value == best[col] and len(rows) > 1:
            return f"**{text}**"
        return text

    header = (
        "| Model | Accuracy | Precision | Recall | F1 score | Cohen's kappa "
        "| Parameters (M) | Training time (s) |"
    )
    sep = "|" + "---|" * 8
    md = ["## Model comparison", "", header, sep]
    for row in rows:
        cells = [row["model"]] + [
            fmt(row[c], c)
            for c in _METRIC_COLUMNS + ["parameters_m", "train_seconds"]
        ]
        md.append("| " + " | ".join(cells) + " |")

    parts = sorted({p for r in reports for p in r.per_body_part})
    if parts:
        md += ["", "## Cohen's kappa by body part", ""]
        md.append("| Body part | " + " | ".join(disp(r.model_id) for r in reports) + " |")
        md.append("|" + "---|" * (len(reports) + 1))
        for part in parts:
            vals = [
                r.per_body_part[part].kappa if part in r.per_body_part else None
                for r in reports
            ]
            present = [v for v in vals if v is not None]
            row_best = max(present) if present else None
            cells = []
            for v in vals:
                if v is None:
                    cells.append("-")
                elif v == row_best and len(present) > 1:
                    cells.append(f"**{v:.3f}**")
                else:
                    cells.append(f"{v:.3f}")
            md.append(f"| {part.title()} | " + " | ".join(cells) + " |")

    part_cols = [f"kappa_{p.lower()}" for p in parts]
    csv_lines = [
        "model,accuracy,precision,recall,f1,kappa,parameters_m,train_seconds,"
        + ",".join(part_cols)
        if parts
        else "model,accuracy,precision,recall,f1,kappa,parameters_m,train_seconds"
    ]
    for row, report in zip(rows, reports):
        cells = [row["model"]]
        for c in _METRIC_COLUMNS:
            cells.append(f"{row[c]:.6f}")
        for c in ("parameters_m", "train_seconds"):
            cells.append("" if row[c] is None else f"{row[c]:.3f}")
        for part in parts:
            b = report.per_body_part.get(part)
            cells.append("" if b is None else f"{b.kappa:.6f}")
        csv_lines.append(",".join(cells))

    return "\n".join(md) + "\n", "\n".join(csv_lines) + "\n"
