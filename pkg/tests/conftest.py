"""Shared fixtures: synthetic dataset trees, stub scorers, tiny configs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from radtriage.dataset import PreprocessConfig, Split, scan_dataset

FIXTURE_ROOT = Path(__file__).parent / "fixtures" / "mura_mini"

# One line per acceptance criterion, echoed after the run (see
# pytest_terminal_summary) so the gate is readable even under capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

# Hand count of the committed fixture tree (scripts/make_fixture_tree.py):
# train: ELBOW 1+/1-, SHOULDER 1+/1-, WRIST 1+/1- = 6 studies, 9 images
# valid: WRIST 1+, HAND 1- = 2 studies, 3 images
FIXTURE_TRAIN_STUDIES = 6
FIXTURE_TRAIN_IMAGES = 9
FIXTURE_VALID_STUDIES = 2
FIXTURE_VALID_IMAGES = 3


def write_png(path: Path, array: np.ndarray) -> Path:
    """Write a grayscale (H, W) or RGB (H, W, 3) uint8 array as PNG."""
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "L" if array.ndim == 2 else "RGB"
    Image.fromarray(array.astype(np.uint8), mode=mode).save(path)
    return path


def gray(h: int, w: int, value: int = 128) -> np.ndarray:
    return np.full((h, w), value, dtype=np.uint8)


def build_tree(root: Path, studies: list[tuple[str, str, str, str, int]]) -> Path:
    """Create a dataset tree from (split, part, patient, study_dir, n_images).

    Image content is deterministic per (study, index) so scans reproduce.
    """
    for split, part, patient, study, n_images in studies:
        study_dir = root / split / part / patient / study
        for i in range(1, n_images + 1):
            seed = abs(hash((part, patient, study, i))) % (2**32)
            rng = np.random.default_rng(seed)
            arr = rng.integers(0, 256, size=(48, 48), dtype=np.int64).astype(np.uint8)
            write_png(study_dir / f"image{i}.png", arr)
    return root


def path_key(path: str | Path) -> str:
    """Stable per-image key: the trailing part/patient/study/image segments."""
    return "/".join(Path(path).parts[-4:])


class StubScorer:
    """Path-keyed probability lookup standing in for a trained model."""

    def __init__(self, probabilities: dict[str, float], default: float = 0.5):
        self.probabilities = dict(probabilities)
        self.default = default
        self.calls = 0

    def score_batch(self, images, paths=None) -> np.ndarray:
        self.calls += 1
        assert paths is not None, "stub scoring requires image paths"
        return np.array(
            [self.probabilities.get(path_key(p), self.default) for p in paths],
            dtype=np.float32,
        )


class CamStubModel:
    """CAM-capable stub: fixed probability, one hot feature map.

    head_weights selects feature map 0, which is zero except for a single
    bright cell, so the overlay hotspot location is known in advance.
    """

    cam_capable = True

    def __init__(
        self,
        probability: float = 0.9,
        n_maps: int = 4,
        grid: int = 5,
        hot: tuple[int, int] = (1, 2),
    ):
        self.probability = probability
        self.hot = hot
        self.features = np.zeros((n_maps, grid, grid), dtype=np.float32)
        self.features[0][hot] = 1.0
        self.weights = np.zeros(n_maps, dtype=np.float32)
        self.weights[0] = 1.0

    def head_weights(self) -> np.ndarray:
        return self.weights

    def forward(self, images: np.ndarray, capture_features: bool = False):
        probs = np.full(images.shape[0], self.probability, dtype=np.float32)
        if not capture_features:
            return probs
        feats = np.tile(self.features[None], (images.shape[0], 1, 1, 1))
        return probs, feats

    def score_batch(self, images, paths=None) -> np.ndarray:
        return self.forward(images)


@pytest.fixture
def fixture_root() -> Path:
    return FIXTURE_ROOT


@pytest.fixture
def train_manifest():
    return scan_dataset(FIXTURE_ROOT, Split.TRAIN)


@pytest.fixture
def valid_manifest():
    return scan_dataset(FIXTURE_ROOT, Split.VALID)


@pytest.fixture
def tiny_prep() -> PreprocessConfig:
    """Small, augmentation-free preprocessing for fast tests."""
    return PreprocessConfig(target_size=32, augment=False)
