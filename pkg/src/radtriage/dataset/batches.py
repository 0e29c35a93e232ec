"""Image-granularity batch iteration over a manifest.

Each image carries its study's label.  One call to batch_iterator yields
exactly one epoch.  Decoding may run on several worker threads; the
emitted sequence is identical to the single-worker sequence for a fixed
seed because shuffling and per-image augmentation seeds are drawn from
the master rng up front.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, NamedTuple

import numpy as np

from .images import load_image, preprocess
from .types import Manifest, Mode, PreprocessConfig, StudyLabel


class Batch(NamedTuple):
    images: np.ndarray  # (B, 3, S, S) float32
    labels: np.ndarray  # (B,) float32 in {0, 1}; 1 = abnormal
    study_ids: list[str]
    paths: list[str]


def batch_iterator(
    manifest: Manifest,
    batch_size: int,
    shuffle: bool = False,
    rng: np.random.Generator | None = None,
    config: PreprocessConfig | None = None,
    mode: Mode = Mode.EVAL,
    num_workers: int = 0,
) -> Iterator[Batch]:
    """Yield (images, labels, study_ids, paths) batches for one epoch.

    Every image in the manifest appears exactly once; the last batch may
    be short.  `shuffle` permutes image order using `rng`.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    config = config or PreprocessConfig()
    entries = manifest.image_entries()
    n = len(entries)
    if n == 0:
        return

    if shuffle:
        if rng is None:
            raise ValueError("shuffle requires a seeded rng")
        order = rng.permutation(n)
    else:
        order = np.arange(n)

    needs_aug = mode is Mode.TRAIN and config.augment
    if needs_aug:
        if rng is None:
            raise ValueError("TRAIN-mode augmentation requires a seeded rng")
        # One child seed per image, drawn sequentially so that worker
        # parallelism cannot change the output stream.
        seeds = rng.integers(0, 2**63 - 1, size=n)
    else:
        seeds = None

    def produce(idx: int) -> tuple[np.ndarray, float, str, str]:
        path, study = entries[idx]
        raw = load_image(path)
        child = np.random.default_rng(int(seeds[idx])) if needs_aug else None
        tensor = preprocess(raw, config, mode=mode, rng=child, source_path=path)
        label = 1.0 if study.label is StudyLabel.ABNORMAL else 0.0
        return tensor.data, label, study.study_id, path

    def emit(results) -> Iterator[Batch]:
        buf: list[tuple[np.ndarray, float, str, str]] = []
        for item in results:
            buf.append(item)
            if len(buf) == batch_size:
                yield _stack(buf)
                buf = []
        if buf:
            yield _stack(buf)

    if num_workers and num_workers > 1:
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            # executor.map preserves submission order
            yield from emit(pool.map(produce, order.tolist()))
    else:
        yield from emit(produce(i) for i in order.tolist())


def _stack(buf) -> Batch:
    images = np.stack([b[0] for b in buf]).astype(np.float32)
    labels = np.asarray([b[1] for b in buf], dtype=np.float32)
    return Batch(
        images=images,
        labels=labels,
        study_ids=[b[2] for b in buf],
        paths=[b[3] for b in buf],
    )
