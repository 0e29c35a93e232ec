"""Lazy, disk-cached activation-map overlays for the review UI.

Overlay PNGs are deterministic for a given (model, image, rendering
parameters), so they are cached on disk keyed by a digest of exactly
those inputs; repeated requests return identical bytes.  Model inference
is serialized through one lock to bound memory on the workstation.
"""

from __future__ import annotations

import hashlib
import threading
from pathlib import Path

from ..cam import compute_cam, normalize_cam, overlay, upscale
from ..dataset import Mode, PreprocessConfig, load_image, preprocess
from ..errors import CamCapabilityError


class OverlayCache:
    def __init__(
        self,
        model,
        cache_dir: str | Path,
        model_key: str,
        config: PreprocessConfig | None = None,
        alpha: float = 0.4,
        colormap: str = "blue_red",
    ):
        if not getattr(model, "cam_capable", False):
            raise CamCapabilityError(
                "overlay rendering needs a model with feature-map capture"
            )
        self.model = model
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.model_key = model_key
        self.config = config or PreprocessConfig()
        self.alpha = alpha
        self.colormap = colormap
        self._inference_lock = threading.Lock()

    def _cache_path(self, image_path: str) -> Path:
        key = "|".join(
            [
                self.model_key,
                image_path,
                f"alpha={self.alpha:.6f}",
                f"colormap={self.colormap}",
                f"size={self.config.target_size}",
            ]
        )
        digest = hashlib.sha256(key.encode()).hexdigest()
        return self.cache_dir / f"{digest}.png"

    def get_png(self, image_path: str) -> bytes:
        """Overlay PNG bytes for one radiograph, computed once then cached."""
        target = self._cache_path(image_path)
        if target.is_file():
            return target.read_bytes()

        raw = load_image(image_path)
        tensor = preprocess(raw, self.config, mode=Mode.EVAL)
        with self._inference_lock:
            probs, features = self.model.forward(
                tensor.data[None], capture_features=True
            )
        cam = compute_cam(features[0], self.model.head_weights())
        sized = upscale(normalize_cam(cam), (raw.shape[1], raw.shape[2]))
        composite = overlay(
            raw,
            sized,
            alpha=self.alpha,
            colormap=self.colormap,
            probability=float(probs[0]),
        )
        data = composite.to_png_bytes()
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.replace(target)
        return data


def checkpoint_digest(path: str | Path) -> str:
    """Stable identity for a checkpoint file (sha256 of its bytes)."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
