"""Exception types shared across the package.

The CLI maps these onto exit codes, so new error conditions should reuse
one of the families below rather than raising bare exceptions.
"""


class RadtriageError(Exception):
    """Base class for all package-specific errors."""


class DatasetError(RadtriageError):
    """Problems with the dataset tree or manifest contents."""


class MalformedLabelError(DatasetError):
    """A study directory name does not end in `_positive` or `_negative`."""

    def __init__(self, path):
        self.path = str(path)
        super().__init__(
            f"study directory {self.path!r} has no _positive/_negative suffix"
        )


class ImageDecodeError(DatasetError):
    """An image file exists but cannot be decoded."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        msg = f"cannot decode image {self.path!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class InputFileError(RadtriageError):
    """An input artifact (report, manifest CSV, ...) exists but is malformed."""


class ConfigError(RadtriageError):
    """Invalid configuration values (CLI exit code 3)."""


class ModelError(RadtriageError):
    """Model construction or inference contract violations."""


class PretrainedWeightsError(ModelError):
    """ImageNet weights were requested but cannot be obtained."""


class CheckpointError(ModelError):
    """A checkpoint file is corrupt, incompatible, or mismatched."""


class CamCapabilityError(ModelError):
    """The model cannot expose feature maps / head weights for activation maps."""


class TrainingDivergedError(RadtriageError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch_index, lr):
        self.epoch = epoch
        self.batch_index = batch_index
        self.lr = lr
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch_index} (lr={lr:g})"
        )
