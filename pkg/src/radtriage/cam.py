"""Class activation maps: weighted sums of last-layer feature maps,
min-max normalization, bilinear upscaling to image resolution, and
heatmap overlay rendering.

The map is the elementwise sum over channels of head_weight[i] *
feature_map[i].  Negative values are kept through computation and only
clipped by normalization, which is a rendering concern.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import Mode, PreprocessConfig, preprocess
from .errors import CamCapabilityError

DEFAULT_ALPHA = 0.4
DEFAULT_COLORMAP = "blue_red"


@dataclass(frozen=True)
class CamMap:
    """A 2-D activation map; `normalized` means values lie in [0, 1]."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"CamMap must be 2-D, got shape {self.values.shape}")

    @property
    def source_dims(self) -> tuple[int, int]:
        return self.values.shape  # (height, width)


@dataclass(frozen=True)
class OverlayImage:
    """A rendered heatmap composite at the source radiograph's dimensions."""

    composite: np.ndarray  # (3, H, W) uint8
    alpha: float
    colormap: str
    probability: float

    @property
    def dims(self) -> tuple[int, int]:
        return self.composite.shape[1], self.composite.shape[2]

    def to_png_bytes(self) -> bytes:
        im = Image.fromarray(self.composite.transpose(1, 2, 0), mode="RGB")
        buf = io.BytesIO()
        im.save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_png_bytes())


def compute_cam(
    feature_maps: np.ndarray, head_weights: np.ndarray
) -> CamMap:
    """Weighted sum of feature maps: M = sum_i w_i * f_i.

    `feature_maps` is (C, h, w) (or a sequence of C same-shaped 2-D
    arrays); `head_weights` is (C,).  The result is unnormalized and may
    contain negative values.
    """
    maps = np.asarray(feature_maps, dtype=np.float64)
    weights = np.asarray(head_weights, dtype=np.float64)
    if maps.ndim != 3:
        raise ValueError(f"feature maps must be (C, h, w), got shape {maps.shape}")
    if weights.ndim != 1:
        raise ValueError("head weights must be a 1-D vector")
    if maps.shape[0] != weights.shape[0]:
        raise ValueError(
            f"{maps.shape[0]} feature maps but {weights.shape[0]} head weights"
        )
    if maps.shape[0] < 1:
        raise ValueError("need at least one feature map")
    values = np.tensordot(weights, maps, axes=(0, 0))
    return CamMap(values=values, normalized=False)


def normalize_cam(cam: CamMap) -> CamMap:
    """Min-max scale to [0, 1]; constant maps collapse to all-zero."""
    lo = float(cam.values.min())
    hi = float(cam.values.max())
    if hi == lo:
        return CamMap(values=np.zeros_like(cam.values), normalized=True)
    return CamMap(values=(cam.values - lo) / (hi - lo), normalized=True)


def upscale(cam: CamMap, target: tuple[int, int]) -> CamMap:
    """Bilinear, corner-aligned upscaling to target (height, width).

    Target dimensions must be at least the source dimensions.  Sampling
    positions are linspace(0, src-1, dst), so the corners map exactly and
    target == source is the identity.
    """
    src_h, src_w = cam.values.shape
    dst_h, dst_w = target
    if dst_h < src_h or dst_w < src_w:
        raise ValueError(
            f"target {target} is smaller than source {(src_h, src_w)}"
        )
    if (dst_h, dst_w) == (src_h, src_w):
        return CamMap(values=cam.values.copy(), normalized=cam.normalized)

    ys = np.linspace(0.0, src_h - 1, dst_h) if src_h > 1 else np.zeros(dst_h)
    xs = np.linspace(0.0, src_w - 1, dst_w) if src_w > 1 else np.zeros(dst_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, src_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    v = cam.values
    out = (
        v[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
        + v[np.ix_(y0, x1)] * (1 - wy) * wx
        + v[np.ix_(y1, x0)] * wy * (1 - wx)
        + v[np.ix_(y1, x1)] * wy * wx
    )
    return CamMap(values=out, normalized=cam.normalized)


def load_colormap(name: str = DEFAULT_COLORMAP) -> np.ndarray:
    """Load a 256-entry RGB lookup table shipped with the package."""
    ref = resources.files("radtriage.assets") / f"colormap_{name}.csv"
    if not ref.is_file():
        raise ValueError(f"unknown colormap {name!r}")
    with ref.open("r") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    lut = np.asarray([[int(c) for c in row] for row in rows], dtype=np.uint8)
    if lut.shape != (256, 3):
        raise ValueError(f"colormap {name!r} must be 256x3, got {lut.shape}")
    return lut


def overlay(
    image: np.ndarray,
    cam: CamMap,
    alpha: float = DEFAULT_ALPHA,
    colormap: str = DEFAULT_COLORMAP,
    probability: float = float("nan"),
) -> OverlayImage:
    """Composite a normalized, image-sized map onto a (3, H, W) radiograph.

    Per pixel with map value m:
        out = (1 - alpha * m) * pixel + alpha * m * colormap(m)
    so regions with m = 0 show the unmodified radiograph.
    """
    if not cam.normalized:
        raise ValueError("overlay requires a normalized map")
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"image must be (3, H, W), got {image.shape}")
    if image.shape[1:] != cam.values.shape:
        raise ValueError(
            f"map dims {cam.values.shape} != image dims {image.shape[1:]}"
        )
    lut = load_colormap(colormap)
    m = cam.values[None, :, :]
    idx = np.rint(cam.values * 255).astype(np.intp)
    colors = lut[idx].transpose(2, 0, 1).astype(np.float64)
    composite = (1.0 - alpha * m) * image.astype(np.float64) + alpha * m * colors
    composite = np.clip(np.rint(composite), 0, 255).astype(np.uint8)
    return OverlayImage(
        composite=composite, alpha=alpha, colormap=colormap, probability=probability
    )


@dataclass(frozen=True)
class LocalizationResult:
    probability: float
    overlay: OverlayImage | None
    cam_min: float | None = None
    cam_max: float | None = None
    argmax_xy: tuple[int, int] | None = None

    def sidecar_json(self) -> str:
        return json.dumps(
            {
                "probability": self.probability,
                "cam_min": self.cam_min,
                "cam_max": self.cam_max,
                "argmax_xy": list(self.argmax_xy) if self.argmax_xy else None,
            }
        )


def localize(
    model,
    image: np.ndarray,
    threshold: float = 0.5,
    config: PreprocessConfig | None = None,
    alpha: float = DEFAULT_ALPHA,
    colormap: str = DEFAULT_COLORMAP,
) -> LocalizationResult:
    """Score one raw (3, H, W) radiograph; render an overlay when the
    abnormality probability reaches the threshold.

    The activation map is computed on the model's feature-map grid, then
    min-max normalized and upscaled to the source image dimensions.
    """
    if not getattr(model, "cam_capable", False):
        raise CamCapabilityError(
            "model does not expose feature maps and head weights"
        )
    config = config or PreprocessConfig()
    tensor = preprocess(image, config, mode=Mode.EVAL)
    probs, features = model.forward(tensor.data[None], capture_features=True)
    prob = float(probs[0])
    if prob < threshold:
        return LocalizationResult(probability=prob, overlay=None)

    raw = compute_cam(features[0], model.head_weights())
    cam_min, cam_max = float(raw.values.min()), float(raw.values.max())
    target = (image.shape[1], image.shape[2])
    upscaled = upscale(normalize_cam(raw), target)
    flat_argmax = int(np.argmax(upscaled.values))
    ay, ax = np.unravel_index(flat_argmax, upscaled.values.shape)
    composite = overlay(image, upscaled, alpha=alpha, colormap=colormap, probability=prob)
    return LocalizationResult(
        probability=prob,
        overlay=composite,
        cam_min=cam_min,
        cam_max=cam_max,
        argmax_xy=(int(ax), int(ay)),
    )
