"""Populate the worklist store by scoring every study of a manifest."""

from __future__ import annotations

import logging

import numpy as np

from ..dataset import Manifest, Mode, PreprocessConfig, load_image, preprocess
from ..errors import ImageDecodeError
from ..metrics import aggregate_study
from .store import WorklistStore

log = logging.getLogger(__name__)


def score_manifest(
    scorer,
    manifest: Manifest,
    store: WorklistStore,
    config: PreprocessConfig | None = None,
    threshold: float = 0.5,
    batch_size: int = 16,
) -> int:
    """Score each study and upsert it into the store; returns the study count.

    Idempotent: re-running refreshes probabilities but keeps reviewer
    decisions and statuses.  Images that fail to decode are recorded with
    their error and excluded from the study mean; a study with no decodable
    images gets a null probability and sorts to the end of the worklist.
    """
    for study in manifest.studies:
        tensors, rows = [], []
        for path in study.image_paths:
            try:
                raw = load_image(path)
                tensor = preprocess(raw, config or PreprocessConfig(), mode=Mode.EVAL)
                tensors.append((path, tensor.data))
                rows.append({"path": path, "probability": None, "error": None})
            except ImageDecodeError as exc:
                log.warning("scoring %s: %s", study.study_id, exc)
                rows.append({"path": path, "probability": None, "error": str(exc)})

        if tensors:
            paths = [p for p, _ in tensors]
            images = np.stack([t for _, t in tensors])
            probs = []
            for start in range(0, len(paths), batch_size):
                chunk = slice(start, start + batch_size)
                probs.extend(
                    float(p)
                    for p in scorer.score_batch(images[chunk], paths[chunk])
                )
            by_path = dict(zip(paths, probs))
            for row in rows:
                if row["error"] is None:
                    row["probability"] = by_path[row["path"]]
            probability, predicted = aggregate_study(probs, threshold)
            prediction = "ABNORMAL" if predicted else "NORMAL"
        else:
            probability, prediction = None, None

        store.upsert_study(
            study_id=study.study_id,
            body_part=study.body_part.value,
            probability=probability,
            image_scores=rows,
            model_prediction=prediction,
        )
    return len(manifest.studies)
