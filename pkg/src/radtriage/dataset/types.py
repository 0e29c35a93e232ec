"""Core dataset types: study records, manifests, summaries, preprocessing config."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetError


class BodyPart(enum.Enum):
    """The seven upper-extremity study types present in MURA."""

    ELBOW = "ELBOW"
    FINGER = "FINGER"
    FOREARM = "FOREARM"
    HAND = "HAND"
    HUMERUS = "HUMERUS"
    SHOULDER = "SHOULDER"
    WRIST = "WRIST"

    @classmethod
    def from_dir_name(cls, name: str) -> "BodyPart":
        """Parse an `XR_<PART>` directory name."""
        if not name.startswith("XR_"):
            raise DatasetError(f"expected XR_<PART> directory, got {name!r}")
        part = name[3:].upper()
        try:
            return cls[part]
        except KeyError:
            raise DatasetError(f"unknown body part directory {name!r}") from None


class StudyLabel(enum.Enum):
    NORMAL = "NORMAL"
    ABNORMAL = "ABNORMAL"


class Split(enum.Enum):
    TRAIN = "train"
    VALID = "valid"


class Mode(enum.Enum):
    """Preprocessing mode: TRAIN may augment, EVAL never does."""

    TRAIN = "TRAIN"
    EVAL = "EVAL"


@dataclass(frozen=True)
class StudyRecord:
    """One labeled study: a set of radiograph views sharing a single label."""

    study_id: str
    patient_id: str
    body_part: BodyPart
    label: StudyLabel
    image_paths: tuple[str, ...]

    def __post_init__(self):
        if not self.image_paths:
            raise DatasetError(f"study {self.study_id!r} has no images")


@dataclass
class Manifest:
    """A parsed dataset split: an ordered list of studies plus scan diagnostics."""

    split: Split
    root: str
    studies: list[StudyRecord]
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for s in self.studies:
            if s.study_id in seen:
                raise DatasetError(f"duplicate study_id {s.study_id!r}")
            seen.add(s.study_id)
            for p in s.image_paths:
                if not Path(p).is_file():
                    raise DatasetError(
                        f"study {s.study_id!r}: image {p!r} does not exist"
                    )

    @property
    def image_count(self) -> int:
        return sum(len(s.image_paths) for s in self.studies)

    def image_entries(self) -> list[tuple[str, StudyRecord]]:
        """Flatten to (image_path, study) pairs in manifest order."""
        return [(p, s) for s in self.studies for p in s.image_paths]


@dataclass(frozen=True)
class DatasetSummary:
    """Study counts per (body part, label) cell, with study/image totals."""

    split: Split
    cells: dict[tuple[BodyPart, StudyLabel], int]
    total_studies: int
    total_images: int

    def count(self, part: BodyPart, label: StudyLabel) -> int:
        return self.cells.get((part, label), 0)

    def label_total(self, label: StudyLabel) -> int:
        return sum(n for (_, lab), n in self.cells.items() if lab is label)

    def as_table(self) -> str:
        """Render a fixed-width census table (one row per body part)."""
        lines = [f"{'Study':<10} {'Normal':>8} {'Abnormal':>8} {'Total':>8}"]
        for part in BodyPart:
            n = self.count(part, StudyLabel.NORMAL)
            a = self.count(part, StudyLabel.ABNORMAL)
            if n == 0 and a == 0:
                continue
            lines.append(f"{part.value.title():<10} {n:>8,} {a:>8,} {n + a:>8,}")
        lines.append(
            f"{'Total':<10} {self.label_total(StudyLabel.NORMAL):>8,} "
            f"{self.label_total(StudyLabel.ABNORMAL):>8,} {self.total_studies:>8,}"
        )
        lines.append(f"Images: {self.total_images:,}")
        return "\n".join(lines)


# ImageNet channel statistics; MURA models are normalized with these because
# the backbones start from ImageNet weights.
IMAGENET_MEANS = (0.485, 0.456, 0.406)
IMAGENET_STDS = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessConfig:
    """Resize / augmentation / normalization parameters.

    `target_size` is the square side length in pixels.  Augmentation
    (lateral inversion and rotation) applies only in TRAIN mode.
    """

    target_size: int = 320
    channel_means: tuple[float, float, float] = IMAGENET_MEANS
    channel_stds: tuple[float, float, float] = IMAGENET_STDS
    augment: bool = True
    max_rotation: float = 30.0
    flip_probability: float = 0.5

    def __post_init__(self):
        if self.target_size < 1:
            raise DatasetError("target_size must be >= 1")
        if any(s <= 0 for s in self.channel_stds):
            raise DatasetError("channel_stds must be strictly positive")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise DatasetError("flip_probability must be in [0, 1]")
        if self.max_rotation < 0:
            raise DatasetError("max_rotation must be >= 0")

    def to_dict(self) -> dict:
        return {
            "target_size": self.target_size,
            "channel_means": list(self.channel_means),
            "channel_stds": list(self.channel_stds),
            "augment": self.augment,
            "max_rotation": self.max_rotation,
            "flip_probability": self.flip_probability,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        return cls(
            target_size=int(d["target_size"]),
            channel_means=tuple(d["channel_means"]),
            channel_stds=tuple(d["channel_stds"]),
            augment=bool(d["augment"]),
            max_rotation=float(d["max_rotation"]),
            flip_probability=float(d["flip_probability"]),
        )


@dataclass(frozen=True)
class ImageTensor:
    """A preprocessed radiograph: float32 data of shape (3, S, S)."""

    data: np.ndarray
    source_path: str

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise DatasetError(
                f"ImageTensor must be (3, H, W), got {self.data.shape}"
            )


def default_root(path: str | Path) -> Path:
    """Resolve a dataset root, tolerating a nested MURA-v1.1 directory."""
    root = Path(path)
    if not root.exists():
        raise FileNotFoundError(f"dataset root {str(root)!r} does not exist")
    nested = root / "MURA-v1.1"
    if nested.is_dir() and not any(
        (root / s.value).is_dir() for s in Split
    ):
        return nested
    return root
