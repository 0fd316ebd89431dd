import dataclasses
import math

import numpy as np
import pytest

from ctxfer.augment import AugmentConfig
from ctxfer.errors import ConfigError, EmptyDataset, NonFiniteGradient, ShapeMismatch
from ctxfer.model import HEAD_PARAMS, BackboneSpec, HeadSpec, build_classifier, extract_features
from ctxfer.training import (
    CSV_COLUMNS,
    EpochRecord,
    StopReason,
    StopRule,
    TrainConfig,
    TrainingRun,
    bce_logit_gradient,
    binary_cross_entropy,
    early_stop_check,
    loss_and_gradients,
    records_from_csv,
    records_to_csv,
    rmsprop_step,
    train,
)

NO_AUG = AugmentConfig(zoom_range=0, shear_range=0, shift_range=0, hflip=False)


def rec(epoch, val_loss=1.0, train_acc=0.5):
    return EpochRecord(epoch, 1.0, train_acc, 0.5, 0.5, val_loss, 0.5, 0.5, 0.5)


def test_bce_examples():
    assert binary_cross_entropy([0.5], [1]) == pytest.approx(math.log(2), abs=1e-9)
    assert binary_cross_entropy([0.9, 0.2], [1, 0]) == pytest.approx(0.164252, abs=1e-6)
    perfect = binary_cross_entropy([1.0, 0.0], [1, 0])
    assert 0 < perfect <= -math.log(1 - 1e-7) + 1e-15


def test_bce_gradient_matches_finite_difference():
    y = np.array([1.0, 0.0, 1.0])
    z = np.array([0.3, -1.2, 2.0])
    p = 1 / (1 + np.exp(-z))
    g = bce_logit_gradient(p, y)
    h = 1e-6
    for i in range(3):
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        num = (binary_cross_entropy(1 / (1 + np.exp(-zp)), y) - binary_cross_entropy(1 / (1 + np.exp(-zm)), y)) / (2 * h)
        assert g[i] == pytest.approx(num, rel=1e-6)


def test_rmsprop_scalar_example():
    cfg = TrainConfig(learning_rate=0.1, rho=0.9, epsilon=1e-7)
    params, state = rmsprop_step({"w": np.array(1.0)}, {"w": np.array(2.0)}, {}, cfg)
    assert float(state["w"]) == pytest.approx(0.4, abs=1e-12)
    assert float(params["w"]) == pytest.approx(0.683772, abs=1e-6)


def test_rmsprop_two_steps_against_straight_line():
    cfg = TrainConfig(learning_rate=0.01, rho=0.9, epsilon=1e-7)
    w = np.array([0.5, -1.5, 2.0])
    g = np.array([0.3, -0.7, 0.0])
    params, state = {"w": w}, {}
    for _ in range(2):
        params, state = rmsprop_step(params, {"w": g}, state, cfg)
    s1 = 0.1 * g * g
    w1 = w - 0.01 * g / (np.sqrt(s1) + 1e-7)
    s2 = 0.9 * s1 + 0.1 * g * g
    w2 = w1 - 0.01 * g / (np.sqrt(s2) + 1e-7)
    np.testing.assert_allclose(params["w"], w2, rtol=0, atol=1e-15)
    np.testing.assert_allclose(state["w"], s2, rtol=0, atol=1e-15)


def test_rmsprop_zero_grads():
    cfg = TrainConfig(learning_rate=0.1)
    w = np.array([1.0, 2.0])
    params, state = rmsprop_step({"w": w}, {"w": np.zeros(2)}, {"w": np.array([1.0, 4.0])}, cfg)
    np.testing.assert_array_equal(params["w"], w)
    np.testing.assert_allclose(state["w"], [0.9, 3.6])


def test_rmsprop_rejects_bad_gradients():
    cfg = TrainConfig()
    with pytest.raises(NonFiniteGradient):
        rmsprop_step({"w": np.zeros(2)}, {"w": np.array([1.0, np.nan])}, {}, cfg)
    with pytest.raises(ShapeMismatch):
        rmsprop_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, {}, cfg)


def test_toy_descent(tiny_model, rng):
    x = rng.random((8, 12, 12, 3))
    y = np.array([1, 0] * 4, dtype=float)
    feats = extract_features(tiny_model, x)
    cfg = TrainConfig(learning_rate=1e-3)
    state, losses = {}, []
    for _ in range(100):
        loss, _, grads = loss_and_gradients(tiny_model, feats, y)
        losses.append(loss)
        params, state = rmsprop_step(tiny_model.head_params(), grads, state, cfg)
        tiny_model.params.update(params)
    tail = np.array(losses[5:])
    assert np.all(np.diff(tail) <= 1e-12)
    assert losses[-1] < losses[5]


def test_threshold_stop():
    assert early_stop_check([rec(1), rec(2, train_acc=0.9140)], StopRule(0.91)) is StopReason.THRESHOLD
    assert early_stop_check([rec(1, train_acc=0.9)], StopRule(0.91)) is None
    assert early_stop_check([rec(1, train_acc=0.0)], StopRule(0.0)) is StopReason.THRESHOLD


def test_improving_val_loss_continues():
    hist = [rec(i, val_loss=1.0 / i) for i in range(1, 20)]
    assert early_stop_check(hist, StopRule(None, patience=2)) is None


@pytest.mark.parametrize("patience", [1, 3, 5])
def test_patience_boundary(patience):
    rule = StopRule(None, patience=patience)
    best = [rec(1, val_loss=0.5)]
    flat = [rec(1 + i, val_loss=0.5) for i in range(1, patience + 1)]
    assert early_stop_check(best + flat[:-1], rule) is None
    assert early_stop_check(best + flat, rule) is StopReason.PATIENCE


def test_min_delta_counts_small_gains_as_flat():
    hist = [rec(1, val_loss=1.0), rec(2, val_loss=0.99), rec(3, val_loss=0.98)]
    assert early_stop_check(hist, StopRule(None, patience=2, min_delta=0.05)) is StopReason.PATIENCE
    assert early_stop_check(hist, StopRule(None, patience=2, min_delta=0.0)) is None


def test_config_validation():
    for bad in ({"learning_rate": -1}, {"batch_size": 0}, {"rho": 1.0}, {"timing": "cpu"}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    with pytest.raises(ConfigError):
        StopRule(1.5)
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_csv_round_trip():
    records = [EpochRecord(1, 0.1 + 0.2, 1 / 3, 0.25, 1.0, 0.7, 0.5, 0.0, 2 / 3, 0.0123),
               EpochRecord(2, 1e-17, 0.0, 0.0, 0.0, 12345.678, 1.0, 1.0, 1.0, 0.0)]
    text = records_to_csv(records)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert records_from_csv(text) == records
    run = TrainingRun(records, StopReason.PATIENCE, {"a": 1}, 3.5)
    assert TrainingRun.from_dict(run.to_dict()).records == records


def smoke_model(seed=0):
    spec = BackboneSpec("tiny_inception", truncation_node="mixed1", input_size=(32, 32), seed=seed)
    return build_classifier(spec, HeadSpec(), seed=seed)


def test_train_reaches_high_accuracy(texture_manifest):
    cfg = TrainConfig(max_epochs=15, stop_rule=StopRule(None, patience=100), timing="off")
    run = train(smoke_model(), texture_manifest, AugmentConfig(), cfg)
    assert len(run.records) == 15 and run.stop_reason is StopReason.MAX_EPOCHS
    acc = [r.train_accuracy for r in run.records]
    assert max(acc) >= 0.95
    assert np.mean(acc[-5:]) > np.mean(acc[:5])
    assert [r.epoch for r in run.records] == list(range(1, 16))


def test_threshold_zero_stops_after_first_epoch(texture_manifest):
    cfg = TrainConfig(max_epochs=5, stop_rule=StopRule(0.0), timing="off")
    run = train(smoke_model(), texture_manifest, NO_AUG, cfg)
    assert len(run.records) == 1 and run.stop_reason is StopReason.THRESHOLD


def test_zero_learning_rate_keeps_loss_constant(texture_manifest):
    model = smoke_model()
    head = {k: v.copy() for k, v in model.head_params().items()}
    # equal batches, so the per-epoch mean depends on the shuffle only through rounding
    cfg = TrainConfig(learning_rate=0.0, batch_size=40, max_epochs=3, stop_rule=StopRule(None), timing="off")
    no_dropout = dataclasses.replace(model.head, dropout_rate=0.0)
    model.head = no_dropout
    run = train(model, texture_manifest, NO_AUG, cfg)
    assert len({r.val_loss for r in run.records}) == 1
    first = run.records[0].train_loss
    assert all(r.train_loss == pytest.approx(first, rel=1e-12) for r in run.records)
    for k in HEAD_PARAMS:
        np.testing.assert_array_equal(model.params[k], head[k])


def test_train_metrics_are_batch_averages(texture_manifest):
    cfg = TrainConfig(max_epochs=2, batch_size=64, stop_rule=StopRule(None), timing="off")
    run = train(smoke_model(), texture_manifest, AugmentConfig(), cfg)
    assert [len(b) for b in run.batch_losses] == [4, 4]  # 200 / 64 -> 64, 64, 64, 8
    for r, losses in zip(run.records, run.batch_losses):
        assert r.train_loss == pytest.approx(np.mean(losses), abs=0)


def test_train_is_deterministic(texture_manifest):
    cfg = TrainConfig(max_epochs=3, stop_rule=StopRule(None), timing="off")
    a = train(smoke_model(), texture_manifest, AugmentConfig(seed=4), cfg)
    b = train(smoke_model(), texture_manifest, AugmentConfig(seed=4), cfg)
    assert a.to_csv() == b.to_csv()
    c = train(smoke_model(), texture_manifest, AugmentConfig(seed=5), cfg)
    assert c.to_csv() != a.to_csv()


def test_train_needs_validation(texture_manifest):
    data = dataclasses.replace(texture_manifest, val_samples=[])
    with pytest.raises(EmptyDataset):
        train(smoke_model(), data, NO_AUG, TrainConfig(max_epochs=1))


def test_wall_timing_uses_clock(texture_manifest):
    ticks = iter(range(1000))
    cfg = TrainConfig(max_epochs=1, stop_rule=StopRule(None))
    run = train(smoke_model(), texture_manifest, NO_AUG, cfg, clock=lambda: float(next(ticks)))
    assert run.records[0].duration_seconds > 0
    assert run.total_seconds >= run.records[0].duration_seconds
