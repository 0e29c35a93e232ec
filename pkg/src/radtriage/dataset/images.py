"""Image loading and preprocessing.

Radiographs are loaded as 3-channel uint8 arrays (grayscale sources are
replicated across channels so ImageNet-pretrained stems apply unchanged),
resized to a square target, optionally augmented, and normalized per
channel with (v/255 - mean) / std.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import ImageDecodeError
from .types import ImageTensor, Mode, PreprocessConfig


def load_image(path: str | Path) -> np.ndarray:
    """Decode a raster file into a (3, H, W) uint8 array.

    Grayscale inputs are replicated to 3 identical channels; RGB inputs
    pass through.  Anything unreadable raises ImageDecodeError with the
    offending path.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(path, str(exc)) from exc
    # HWC -> CHW
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _to_pil(image: np.ndarray) -> Image.Image:
    if image.ndim != 3 or image.shape[0] != 3:
        raise ImageDecodeError("<array>", f"expected (3, H, W) array, got {image.shape}")
    return Image.fromarray(image.transpose(1, 2, 0).astype(np.uint8), mode="RGB")


def preprocess(
    image: np.ndarray,
    config: PreprocessConfig,
    mode: Mode = Mode.EVAL,
    rng: np.random.Generator | None = None,
    source_path: str = "",
) -> ImageTensor:
    """Resize, augment (TRAIN only) and normalize a raw (3, H, W) uint8 image.

    TRAIN mode with augmentation enabled applies a horizontal flip with
    `flip_probability`, then a rotation with angle drawn uniformly from
    [-max_rotation, +max_rotation]; pixels exposed by the rotation are
    filled with black before normalization.  EVAL mode never augments.
    Output is float32 of shape (3, target_size, target_size).
    """
    pil = _to_pil(image)
    size = config.target_size
    pil = pil.resize((size, size), Image.BILINEAR)

    if mode is Mode.TRAIN and config.augment:
        if rng is None:
            raise ValueError("TRAIN-mode augmentation requires a seeded rng")
        if rng.random() < config.flip_probability:
            pil = pil.transpose(Image.FLIP_LEFT_RIGHT)
        angle = float(rng.uniform(-config.max_rotation, config.max_rotation))
        pil = pil.rotate(angle, resample=Image.BILINEAR, fillcolor=(0, 0, 0))

    arr = np.asarray(pil, dtype=np.float32).transpose(2, 0, 1) / 255.0
    means = np.asarray(config.channel_means, dtype=np.float32).reshape(3, 1, 1)
    stds = np.asarray(config.channel_stds, dtype=np.float32).reshape(3, 1, 1)
    data = (arr - means) / stds
    return ImageTensor(data=data, source_path=source_path)


def denormalize(tensor: ImageTensor, config: PreprocessConfig) -> np.ndarray:
    """Invert the normalization, returning float pixel values in [0, 255]."""
    means = np.asarray(config.channel_means, dtype=np.float32).reshape(3, 1, 1)
    stds = np.asarray(config.channel_stds, dtype=np.float32).reshape(3, 1, 1)
    return (tensor.data * stds + means) * 255.0
