"""Backbone model zoo: 18 CNN variants behind one binary-classifier contract.

Every model is a convolutional feature extractor followed by global
average pooling and a single linear layer producing one logit; the
forward output is sigmoid(logit), the probability of abnormality.  This
head shape makes the classifier activation-map capable: the head weight
vector has exactly one weight per last-layer feature map.

VGG variants have their stock fully-connected classifier stack replaced
by the same GAP + linear head (stock VGG has no global pooling), and
InceptionV3's auxiliary classifier is removed.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataset import PreprocessConfig
from .errors import CheckpointError, ModelError, PretrainedWeightsError

CHECKPOINT_FORMAT = "radtriage-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BackboneSpec:
    name: str          # registry key, e.g. "densenet121"
    display_name: str  # e.g. "DenseNet 121"
    tv_name: str       # torchvision model builder name
    feature_dim: int   # channels of the last convolutional feature maps
    nominal_params_m: float  # stock-architecture parameter count, millions
    min_input: int = 32


# nominal_params_m are the stock torchvision definitions' counts (with
# their original ImageNet classifier heads), frozen here so listing does
# not require constructing models.
BACKBONES: dict[str, BackboneSpec] = {
    s.name: s
    for s in [
        BackboneSpec("densenet121", "DenseNet 121", "densenet121", 1024, 7.979),
        BackboneSpec("densenet161", "DenseNet 161", "densenet161", 2208, 28.681),
        BackboneSpec("densenet169", "DenseNet 169", "densenet169", 1664, 14.149),
        BackboneSpec("densenet201", "DenseNet 201", "densenet201", 1920, 20.014),
        BackboneSpec("inception_v3", "Inception V3", "inception_v3", 2048, 27.161, min_input=75),
        BackboneSpec("mobilenet_v2", "MobileNet V2", "mobilenet_v2", 1280, 3.505),
        BackboneSpec("resnet34", "ResNet 34", "resnet34", 512, 21.798),
        BackboneSpec("resnet50", "ResNet 50", "resnet50", 2048, 25.557),
        BackboneSpec("resnet101", "ResNet 101", "resnet101", 2048, 44.549),
        BackboneSpec("resnet152", "ResNet 152", "resnet152", 2048, 60.193),
        BackboneSpec("resnext50", "ResNeXt 50", "resnext50_32x4d", 2048, 25.029),
        BackboneSpec("resnext101", "ResNeXt 101", "resnext101_32x8d", 2048, 88.791),
        BackboneSpec("vgg16", "VGG 16", "vgg16", 512, 138.358),
        BackboneSpec("vgg19", "VGG 19", "vgg19", 512, 143.667),
        BackboneSpec("vgg11_bn", "VGG 11 with BN", "vgg11_bn", 512, 132.869),
        BackboneSpec("vgg13_bn", "VGG 13 with BN", "vgg13_bn", 512, 133.054),
        BackboneSpec("vgg16_bn", "VGG 16 with BN", "vgg16_bn", 512, 138.366),
        BackboneSpec("vgg19_bn", "VGG 19 with BN", "vgg19_bn", 512, 143.678),
    ]
}


def list_backbones() -> list[BackboneSpec]:
    """All supported backbones with their nominal parameter counts."""
    return list(BACKBONES.values())


@dataclass(frozen=True)
class ModelConfig:
    backbone: str
    pretrained: bool = False

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ModelError(
                f"unknown backbone {self.backbone!r}; "
                f"choose one of {sorted(BACKBONES)}"
            )

    def to_dict(self) -> dict:
        return {"backbone": self.backbone, "pretrained": self.pretrained}


def _build_stock(spec: BackboneSpec, pretrained: bool) -> nn.Module:
    from torchvision import models as tvm

    kwargs = {}
    if pretrained:
        try:
            weights = tvm.get_model_weights(spec.tv_name).IMAGENET1K_V1
        except Exception as exc:
            raise PretrainedWeightsError(
                f"no ImageNet weights registered for {spec.name}: {exc}"
            ) from exc
        kwargs["weights"] = weights
    else:
        kwargs["weights"] = None
        if spec.name == "inception_v3":
            kwargs["aux_logits"] = False
            kwargs["init_weights"] = True
    try:
        return tvm.get_model(spec.tv_name, **kwargs)
    except Exception as exc:
        if pretrained:
            raise PretrainedWeightsError(
                f"could not obtain ImageNet weights for {spec.name} "
                f"(download failed or cache missing): {exc}"
            ) from exc
        raise


def _feature_extractor(spec: BackboneSpec, stock: nn.Module) -> nn.Module:
    name = spec.name
    if name.startswith("densenet"):
        # densenet applies ReLU between its feature stack and pooling;
        # keep it so head weights align with what pooling sees.
        return nn.Sequential(stock.features, nn.ReLU(inplace=True))
    if name.startswith(("resnet", "resnext")):
        return nn.Sequential(
            stock.conv1, stock.bn1, stock.relu, stock.maxpool,
            stock.layer1, stock.layer2, stock.layer3, stock.layer4,
        )
    if name.startswith("vgg") or name == "mobilenet_v2":
        return stock.features
    if name == "inception_v3":
        layers = [
            stock.Conv2d_1a_3x3, stock.Conv2d_2a_3x3, stock.Conv2d_2b_3x3,
            stock.maxpool1, stock.Conv2d_3b_1x1, stock.Conv2d_4a_3x3,
            stock.maxpool2, stock.Mixed_5b, stock.Mixed_5c, stock.Mixed_5d,
            stock.Mixed_6a, stock.Mixed_6b, stock.Mixed_6c, stock.Mixed_6d,
            stock.Mixed_6e, stock.Mixed_7a, stock.Mixed_7b, stock.Mixed_7c,
        ]
        return nn.Sequential(*layers)
    raise ModelError(f"no feature extractor rule for {name!r}")


class _BinaryClassifier(nn.Module):
    """Feature extractor -> GAP -> linear -> sigmoid probability."""

    def __init__(self, features: nn.Module, feature_dim: int):
        super().__init__()
        self.features = features
        self.head = nn.Linear(feature_dim, 1)
        nn.init.uniform_(self.head.weight, -0.01, 0.01)
        nn.init.zeros_(self.head.bias)

    def forward_with_features(self, x: torch.Tensor):
        fm = self.features(x)
        pooled = fm.mean(dim=(2, 3))
        probs = torch.sigmoid(self.head(pooled).squeeze(1))
        return probs, fm

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        probs, _ = self.forward_with_features(x)
        return probs


class ModelHandle:
    """A built classifier with inspectable feature maps and head weights."""

    def __init__(self, config: ModelConfig, module: _BinaryClassifier):
        self.config = config
        self.spec = BACKBONES[config.backbone]
        self.module = module
        self.cam_capable = True

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    @property
    def feature_map_count(self) -> int:
        return self.spec.feature_dim

    def head_weights(self) -> np.ndarray:
        """One weight per last-layer feature map (the linear head's row)."""
        return self.module.head.weight.detach().cpu().numpy()[0].copy()

    def _validate(self, images: np.ndarray) -> torch.Tensor:
        arr = np.asarray(images, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[1] != 3:
            raise ModelError(f"expected (B, 3, H, W) input, got shape {arr.shape}")
        if min(arr.shape[2], arr.shape[3]) < self.spec.min_input:
            raise ModelError(
                f"{self.spec.name} needs inputs of at least "
                f"{self.spec.min_input}px, got {arr.shape[2]}x{arr.shape[3]}"
            )
        return torch.from_numpy(arr)

    def forward(
        self, images: np.ndarray, capture_features: bool = False
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Eval-mode probabilities, optionally with last-layer feature maps."""
        x = self._validate(images)
        self.module.eval()
        with torch.no_grad():
            probs, fm = self.module.forward_with_features(x)
        features = fm.cpu().numpy() if capture_features else None
        return probs.cpu().numpy().astype(np.float64), features

    def predict(self, images: np.ndarray) -> np.ndarray:
        probs, _ = self.forward(images)
        return probs

    def score_batch(self, images: np.ndarray, paths=None) -> np.ndarray:
        """Scorer protocol used by evaluation and worklist scoring."""
        return self.predict(images)


def build_model(config: ModelConfig) -> ModelHandle:
    """Construct a classifier; with `pretrained`, all backbone weights come
    from ImageNet and only the new head is freshly initialized.

    Raises PretrainedWeightsError when ImageNet weights are requested but
    cannot be obtained (never falls back to random initialization).
    """
    spec = BACKBONES[config.backbone]
    stock = _build_stock(spec, config.pretrained)
    features = _feature_extractor(spec, stock)
    module = _BinaryClassifier(features, spec.feature_dim)
    return ModelHandle(config, module)


def forward(model: ModelHandle, images: np.ndarray, capture_features: bool = False):
    return model.forward(images, capture_features=capture_features)


@dataclass
class Checkpoint:
    """A loaded checkpoint: the rebuilt model plus its saved metadata."""

    model: ModelHandle
    config: ModelConfig
    epoch: int
    best_metric_name: str
    best_metric_value: float | None
    preprocess: PreprocessConfig
    saved_at: str


def save_checkpoint(
    model: ModelHandle,
    path: str | Path,
    epoch: int = 0,
    best_metric_name: str = "kappa",
    best_metric_value: float | None = None,
    preprocess: PreprocessConfig | None = None,
) -> Path:
    """Serialize parameters and metadata; load_checkpoint round-trips it."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "state_dict": model.module.state_dict(),
        "epoch": int(epoch),
        "best_metric_name": best_metric_name,
        "best_metric_value": (
            float(best_metric_value) if best_metric_value is not None else None
        ),
        "preprocess": (preprocess or PreprocessConfig()).to_dict(),
        "saved_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(
    path: str | Path, expected_backbone: str | None = None
) -> Checkpoint:
    """Rebuild the model from a checkpoint's embedded config and weights.

    Raises CheckpointError for corrupt files, version mismatches, and
    (when `expected_backbone` is given) backbone mismatches.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {str(path)!r} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {str(path)!r}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{str(path)!r} is not a recognized checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = ModelConfig(
        backbone=payload["config"]["backbone"],
        pretrained=bool(payload["config"].get("pretrained", False)),
    )
    if expected_backbone is not None and config.backbone != expected_backbone:
        raise CheckpointError(
            f"checkpoint holds a {config.backbone!r} model, "
            f"expected {expected_backbone!r}"
        )
    # rebuild without re-fetching ImageNet weights; the checkpoint's
    # state_dict supplies every parameter
    model = build_model(ModelConfig(backbone=config.backbone, pretrained=False))
    try:
        model.module.load_state_dict(payload["state_dict"], strict=True)
    except Exception as exc:
        raise CheckpointError(f"incompatible parameters in {str(path)!r}: {exc}") from exc
    return Checkpoint(
        model=model,
        config=config,
        epoch=int(payload["epoch"]),
        best_metric_name=payload["best_metric_name"],
        best_metric_value=payload["best_metric_value"],
        preprocess=PreprocessConfig.from_dict(payload["preprocess"]),
        saved_at=payload.get("saved_at", ""),
    )
