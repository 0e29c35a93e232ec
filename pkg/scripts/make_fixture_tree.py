"""Regenerate the miniature radiograph tree under tests/fixtures/mura_mini.

The tree follows the study-per-directory layout the scanner expects:

    <root>/<split>/XR_<PART>/patient<NNNNN>/study<K>_<label>/image<M>.png

Images are small deterministic grayscale PNGs.  Abnormal studies carry a
bright square patch on a dark textured background; normal studies are the
textured background alone — separable enough for a tiny CNN to overfit
during the training smoke test.

Run from the repository root:  python3 scripts/make_fixture_tree.py
"""

from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "mura_mini"
SIZE = 96  # native fixture resolution; tests upscale as needed

# (split, part, patient, study, label, image count)
STUDIES = [
    ("train", "XR_ELBOW", "patient00001", "study1_positive", 2),
    ("train", "XR_ELBOW", "patient00002", "study1_negative", 1),
    ("train", "XR_SHOULDER", "patient00004", "study1_negative", 1),
    ("train", "XR_SHOULDER", "patient00004", "study2_positive", 1),
    ("train", "XR_WRIST", "patient00001", "study1_negative", 1),
    ("train", "XR_WRIST", "patient00003", "study1_positive", 3),
    ("valid", "XR_WRIST", "patient10001", "study1_positive", 1),
    ("valid", "XR_HAND", "patient10002", "study1_negative", 2),
]


def render(rng: np.random.Generator, abnormal: bool) -> np.ndarray:
    base = rng.integers(20, 70, size=(SIZE, SIZE), dtype=np.int64)
    # soft anatomical-ish gradient so images aren't pure noise
    ramp = np.linspace(0, 40, SIZE, dtype=np.int64)
    img = base + ramp[None, :]
    if abnormal:
        y = int(rng.integers(8, SIZE - 40))
        x = int(rng.integers(8, SIZE - 40))
        img[y : y + 32, x : x + 32] = rng.integers(215, 250)
    return np.clip(img, 0, 255).astype(np.uint8)


def main() -> None:
    if ROOT.exists():
        shutil.rmtree(ROOT)
    rng = np.random.default_rng(20240501)
    total = 0
    for split, part, patient, study, count in STUDIES:
        study_dir = ROOT / split / part / patient / study
        study_dir.mkdir(parents=True)
        abnormal = study.endswith("_positive")
        for i in range(1, count + 1):
            arr = render(rng, abnormal)
            Image.fromarray(arr, mode="L").save(study_dir / f"image{i}.png")
            total += 1
    print(f"wrote {total} images under {ROOT}")


if __name__ == "__main__":
    main()
