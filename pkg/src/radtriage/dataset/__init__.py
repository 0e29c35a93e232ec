from .types import (
    IMAGENET_MEANS,
    IMAGENET_STDS,
    BodyPart,
    DatasetSummary,
    ImageTensor,
    Manifest,
    Mode,
    PreprocessConfig,
    Split,
    StudyLabel,
    StudyRecord,
)
from .scan import (
    export_manifest_csv,
    import_manifest_csv,
    manifest_from_image_paths_csv,
    scan_dataset,
    summarize,
)
from .images import denormalize, load_image, preprocess
from .batches import Batch, batch_iterator

__all__ = [
    "IMAGENET_MEANS",
    "IMAGENET_STDS",
    "Batch",
    "BodyPart",
    "DatasetSummary",
    "ImageTensor",
    "Manifest",
    "Mode",
    "PreprocessConfig",
    "Split",
    "StudyLabel",
    "StudyRecord",
    "batch_iterator",
    "denormalize",
    "export_manifest_csv",
    "import_manifest_csv",
    "load_image",
    "manifest_from_image_paths_csv",
    "preprocess",
    "scan_dataset",
    "summarize",
]
