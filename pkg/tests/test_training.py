"""Loss, class weights, plateau scheduler, and the training loop."""

import json
import math

import numpy as np
import pytest
import torch
from torch import nn

from radtriage.dataset import Manifest, PreprocessConfig
from radtriage.errors import ConfigError, TrainingDivergedError
from radtriage.modelzoo import ModelConfig, build_model, load_checkpoint
from radtriage.training import (
    LOSS_EPS,
    CheckpointMetric,
    LossWeighting,
    PlateauScheduler,
    TrainConfig,
    class_weights,
    compute_loss,
    lr_schedule_step,
    train,
)

from conftest import build_tree

# ---------------------------------------------------------------- loss ----


def test_loss_unweighted_hand_value():
    # -(ln 0.9 + ln 0.8) / 2, worked out by hand
    loss = compute_loss([0.9, 0.8], [1.0, 1.0])
    assert float(loss) == pytest.approx(0.16425203, abs=1e-7)


def test_loss_coin_flip_is_ln2():
    loss = compute_loss([0.5, 0.5, 0.5], [1.0, 0.0, 1.0])
    assert float(loss) == pytest.approx(math.log(2.0), abs=1e-7)


def test_loss_weighted_hand_value():
    # per-sample: -2 ln 0.9 and -3 ln 0.8; mean = 0.44007584
    loss = compute_loss([0.9, 0.2], [1.0, 0.0], weights=(2.0, 3.0))
    assert float(loss) == pytest.approx(0.44007584, abs=1e-7)


def test_loss_symmetric_in_label_flip():
    a = float(compute_loss([0.3], [1.0]))
    b = float(compute_loss([0.7], [0.0]))
    assert a == pytest.approx(b, abs=1e-9)


def test_loss_clamps_confident_mistake():
    # p = 1 on a normal image: clamped to 1 - eps, loss = -ln(eps)
    loss64 = compute_loss(torch.tensor([1.0], dtype=torch.float64), [0.0])
    assert float(loss64) == pytest.approx(-math.log(LOSS_EPS), rel=1e-9)
    # float32 path: still finite, same order of magnitude
    loss32 = compute_loss([1.0], [0.0])
    assert math.isfinite(float(loss32))
    assert 14.0 < float(loss32) < 18.0


def test_loss_perfect_predictions_near_zero():
    loss = compute_loss([1.0, 0.0], [1.0, 0.0])
    assert 0.0 <= float(loss) < 1e-6


def test_loss_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        compute_loss([], [])
    with pytest.raises(ValueError):
        compute_loss([0.5, 0.5], [1.0])


def test_loss_gradient_matches_analytic():
    torch.manual_seed(0)
    p = torch.tensor([0.2, 0.7, 0.55, 0.9], dtype=torch.float64, requires_grad=True)
    y = torch.tensor([1.0, 0.0, 1.0, 1.0], dtype=torch.float64)
    w = (0.7, 1.3)
    loss = compute_loss(p, y, weights=w)
    loss.backward()
    n = len(y)
    expected = (-w[0] * y / p + w[1] * (1.0 - y) / (1.0 - p)) / n
    assert torch.allclose(p.grad, expected, atol=1e-12)


def test_loss_gradient_matches_central_differences():
    p0 = np.array([0.3, 0.6, 0.8], dtype=np.float64)
    y = np.array([0.0, 1.0, 1.0], dtype=np.float64)
    p = torch.tensor(p0, requires_grad=True)
    loss = compute_loss(p, torch.from_numpy(y), weights=(1.5, 0.5))
    loss.backward()
    h = 1e-6
    for i in range(len(p0)):
        up, down = p0.copy(), p0.copy()
        up[i] += h
        down[i] -= h
        fd = (
            float(compute_loss(torch.tensor(up), torch.from_numpy(y), weights=(1.5, 0.5)))
            - float(compute_loss(torch.tensor(down), torch.from_numpy(y), weights=(1.5, 0.5)))
        ) / (2 * h)
        assert fd == pytest.approx(float(p.grad[i]), rel=1e-6)


# ------------------------------------------------------- class weights ----


def test_class_weights_fixture_counts(train_manifest):
    # fixture train split: 6 abnormal images, 3 normal images
    w_abnormal, w_normal = class_weights(train_manifest)
    assert w_abnormal == pytest.approx(3 / 9)
    assert w_normal == pytest.approx(6 / 9)
    assert w_abnormal + w_normal == pytest.approx(1.0)


def test_class_weights_balanced_dataset(tmp_path):
    from radtriage.dataset import scan_dataset

    build_tree(
        tmp_path,
        [
            ("train", "XR_HAND", "patient00001", "study1_positive", 2),
            ("train", "XR_HAND", "patient00002", "study1_negative", 2),
        ],
    )
    manifest = scan_dataset(tmp_path, "train")
    assert class_weights(manifest) == (0.5, 0.5)


def test_class_weights_empty_manifest():
    with pytest.raises(ValueError):
        class_weights(Manifest(split="train", root=".", studies=[]))


# ----------------------------------------------------------- scheduler ----


def _cfg(**kw):
    return TrainConfig(**kw)


def test_scheduler_decays_after_one_flat_epoch():
    sched = PlateauScheduler(_cfg())
    assert sched.step(0.5) == pytest.approx(1e-4)  # first epoch improves on inf
    assert sched.step(0.5) == pytest.approx(1e-5)  # no improvement -> decay


def test_scheduler_two_plateaus_reach_1e6():
    sched = PlateauScheduler(_cfg())
    lrs = [sched.step(loss) for loss in [0.5, 0.5, 0.4, 0.4]]
    assert lrs == pytest.approx([1e-4, 1e-5, 1e-5, 1e-6])


def test_scheduler_improvement_resets_counter():
    sched = PlateauScheduler(_cfg(plateau_patience=2))
    lrs = [sched.step(loss) for loss in [1.0, 0.9, 0.8, 0.7]]
    assert lrs == pytest.approx([1e-4] * 4)


def test_scheduler_min_delta_is_strict():
    sched = PlateauScheduler(_cfg())
    sched.step(0.5)
    # a drop of exactly min_delta does not count as improvement
    assert sched.step(0.5 - 1e-4) == pytest.approx(1e-5)
    sched2 = PlateauScheduler(_cfg())
    sched2.step(0.5)
    assert sched2.step(0.5 - 2e-4) == pytest.approx(1e-4)


def test_scheduler_counter_resets_after_decay():
    sched = PlateauScheduler(_cfg(plateau_patience=2))
    lrs = [sched.step(1.0) for _ in range(5)]
    assert lrs == pytest.approx([1e-4, 1e-4, 1e-5, 1e-5, 1e-6])


def test_functional_step_matches_stateful_scheduler():
    rng = np.random.default_rng(11)
    losses = rng.uniform(0.2, 1.0, size=30).round(3).tolist()
    config = _cfg(plateau_patience=2, plateau_min_delta=0.05)
    sched = PlateauScheduler(config)
    lr = config.initial_lr
    for i, loss in enumerate(losses):
        functional = lr_schedule_step(losses[: i + 1], lr, config)
        lr = sched.step(loss)
        assert functional == pytest.approx(lr)


def test_functional_step_rejects_empty_history():
    with pytest.raises(ValueError):
        lr_schedule_step([], 1e-4, _cfg())


# -------------------------------------------------------- train config ----


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0},
        {"initial_lr": 0.0},
        {"initial_lr": -1e-4},
        {"lr_decay_factor": 1.0},
        {"batch_size": 0},
        {"plateau_patience": 0},
        {"plateau_min_delta": -0.1},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_train_config_defaults_follow_protocol():
    config = TrainConfig()
    assert config.initial_lr == 1e-4
    assert config.lr_decay_factor == 10.0
    assert config.plateau_patience == 1
    assert config.batch_size == 32
    assert config.checkpoint_metric is CheckpointMetric.KAPPA


# -------------------------------------------------------- training loop ----


def _tiny_model(seed=0):
    torch.manual_seed(seed)
    return build_model(ModelConfig("mobilenet_v2", pretrained=False))


def test_train_one_epoch_writes_artifacts(
    train_manifest, valid_manifest, tiny_prep, tmp_path
):
    model = _tiny_model()
    seen = []
    result = train(
        model,
        train_manifest,
        valid_manifest,
        TrainConfig(epochs=1, batch_size=4),
        preprocess=tiny_prep,
        out_dir=tmp_path,
        log=seen.append,
    )
    assert len(result.history) == 1
    record = result.history[0]
    assert record.epoch == 1
    assert record.lr == pytest.approx(1e-4)
    assert math.isfinite(record.train_loss) and math.isfinite(record.valid_loss)
    assert -1.0 <= record.valid_kappa <= 1.0
    assert seen == [record]
    assert 0.0 <= result.final_train_accuracy <= 1.0

    assert (tmp_path / "history.jsonl").exists()
    lines = (tmp_path / "history.jsonl").read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["epoch"] == 1
    assert result.best_checkpoint == tmp_path / "best.ckpt"
    saved = json.loads((tmp_path / "result.json").read_text())
    assert saved["best_epoch"] == 1

    loaded = load_checkpoint(result.best_checkpoint)
    assert loaded.best_metric_name == "kappa"
    assert loaded.preprocess == tiny_prep


def test_train_checkpoint_on_loss_metric(
    train_manifest, valid_manifest, tiny_prep, tmp_path
):
    model = _tiny_model()
    result = train(
        model,
        train_manifest,
        valid_manifest,
        TrainConfig(epochs=1, batch_size=4, checkpoint_metric=CheckpointMetric.LOSS),
        preprocess=tiny_prep,
        out_dir=tmp_path,
    )
    loaded = load_checkpoint(result.best_checkpoint)
    assert loaded.best_metric_name == "loss"
    assert loaded.best_metric_value == pytest.approx(result.history[0].valid_loss)


def test_train_is_reproducible_for_fixed_seed(
    train_manifest, valid_manifest, tiny_prep
):
    histories = []
    for _ in range(2):
        model = _tiny_model(seed=7)
        result = train(
            model,
            train_manifest,
            valid_manifest,
            TrainConfig(epochs=2, batch_size=4, seed=3),
            preprocess=tiny_prep,
        )
        histories.append([r.train_loss for r in result.history])
    assert histories[0] == pytest.approx(histories[1], abs=1e-7)


def test_train_class_balanced_changes_loss(train_manifest, valid_manifest, tiny_prep):
    losses = {}
    for weighting in (LossWeighting.NONE, LossWeighting.CLASS_BALANCED):
        model = _tiny_model(seed=7)
        result = train(
            model,
            train_manifest,
            valid_manifest,
            TrainConfig(epochs=1, batch_size=4, loss_weighting=weighting),
            preprocess=tiny_prep,
        )
        losses[weighting] = result.history[0].train_loss
    assert losses[LossWeighting.NONE] != pytest.approx(
        losses[LossWeighting.CLASS_BALANCED], abs=1e-9
    )


def test_train_rejects_empty_manifests(train_manifest, tiny_prep):
    empty = Manifest(split="valid", root=".", studies=[])
    model = _tiny_model()
    with pytest.raises(ValueError):
        train(model, train_manifest, empty, TrainConfig(epochs=1), preprocess=tiny_prep)
    with pytest.raises(ValueError):
        train(model, empty, train_manifest, TrainConfig(epochs=1), preprocess=tiny_prep)


class _NaNModule(nn.Module):
    def __init__(self):
        super().__init__()
        self.head = nn.Linear(1, 1)

    def forward(self, x):
        return torch.full((x.shape[0],), float("nan"), requires_grad=True)


class _NaNHandle:
    def __init__(self):
        self.module = _NaNModule()


def test_train_raises_on_divergence(train_manifest, valid_manifest, tiny_prep):
    with pytest.raises(TrainingDivergedError) as exc_info:
        train(
            _NaNHandle(),
            train_manifest,
            valid_manifest,
            TrainConfig(epochs=1, batch_size=4),
            preprocess=tiny_prep,
        )
    err = exc_info.value
    assert err.epoch == 1
    assert err.batch_index == 0
    assert err.lr == pytest.approx(1e-4)
