"""Abnormality triage toolkit for musculoskeletal radiographs.

Scans study-per-directory radiograph datasets, trains convolutional binary
classifiers with a global-average-pooling head, evaluates them at image and
study level (Cohen's kappa as the headline metric), renders class activation
overlays for the predicted abnormalities, and serves a reviewable triage
worklist over HTTP.
"""

from radtriage.errors import (
    CamCapabilityError,
    CheckpointError,
    ConfigError,
    DatasetError,
    ImageDecodeError,
    InputFileError,
    MalformedLabelError,
    ModelError,
    PretrainedWeightsError,
    RadtriageError,
    TrainingDivergedError,
)

__version__ = "0.1.0"

__all__ = [
    "CamCapabilityError",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "ImageDecodeError",
    "InputFileError",
    "MalformedLabelError",
    "ModelError",
    "PretrainedWeightsError",
    "RadtriageError",
    "TrainingDivergedError",
    "__version__",
]
