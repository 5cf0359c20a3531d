import math

import numpy as np
import pytest

from helpers import model_with_params, numeric_grad, random_dataset, random_model
from unlearnbench.nn import (
    Architecture,
    ModelParameters,
    TrainConfig,
    UpdateLog,
    batch_grad_mean,
    cross_entropy,
    default_architecture,
    forward,
    forward_batch,
    init_model,
    log_probs,
    per_sample_grad,
    sgd_train,
)


def test_default_architecture_layers():
    arch = default_architecture(784)
    assert arch.layer_sizes == (784, 512, 256, 128, 10)


def test_param_count_mnist_architecture():
    arch = default_architecture(784)
    expected = (784 * 512 + 512) + (512 * 256 + 256) + (256 * 128 + 128) + (128 * 10 + 10)
    assert arch.param_count == expected == 567434


def test_architecture_rejects_degenerate():
    with pytest.raises(ValueError):
        Architecture((4,))
    with pytest.raises(ValueError):
        Architecture((4, 0, 2))


def test_init_deterministic_per_seed():
    arch = Architecture((5, 7, 3))
    a = init_model(arch, seed=11)
    b = init_model(arch, seed=11)
    c = init_model(arch, seed=12)
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, c.params)
    assert a.params.dtype == np.float32


def test_init_glorot_bounds_and_zero_biases():
    arch = Architecture((20, 30, 4))
    model = init_model(arch, seed=0)
    flat = model.params
    # layout: W1 (30x20), b1 (30), W2 (4x30), b2 (4)
    w1 = flat[: 30 * 20]
    b1 = flat[30 * 20 : 30 * 20 + 30]
    w2 = flat[30 * 20 + 30 : 30 * 20 + 30 + 4 * 30]
    b2 = flat[-4:]
    assert np.all(b1 == 0) and np.all(b2 == 0)
    assert np.abs(w1).max() <= math.sqrt(6.0 / (20 + 30))
    assert np.abs(w2).max() <= math.sqrt(6.0 / (30 + 4))
    # weights actually spread out, not degenerate
    assert np.abs(w1).max() > 0.5 * math.sqrt(6.0 / (20 + 30))


def test_forward_matches_pure_python_oracle():
    arch = Architecture((3, 4, 2))
    model = random_model(arch, seed=42)
    x = np.array([0.3, -1.2, 0.5], dtype=np.float64)

    # independent scalar-loop implementation
    flat = [float(v) for v in model.params]
    pos = 0

    def layer(vec, fan_out, fan_in, relu):
        nonlocal pos
        w = [flat[pos + r * fan_in : pos + (r + 1) * fan_in] for r in range(fan_out)]
        pos += fan_out * fan_in
        b = flat[pos : pos + fan_out]
        pos += fan_out
        out = [sum(wj * vj for wj, vj in zip(w[r], vec)) + b[r] for r in range(fan_out)]
        return [max(v, 0.0) for v in out] if relu else out

    hidden = layer(list(x), 4, 3, relu=True)
    logits = layer(hidden, 2, 4, relu=False)
    m = max(logits)
    exps = [math.exp(v - m) for v in logits]
    expected = [v / sum(exps) for v in exps]

    np.testing.assert_allclose(forward(model, x), expected, rtol=1e-6)


def test_forward_normalized_and_positive():
    rng = np.random.default_rng(7)
    for trial in range(50):
        sizes = tuple(int(v) for v in rng.integers(2, 9, size=rng.integers(2, 5)))
        model = random_model(Architecture(sizes), seed=trial, scale=3.0)
        X = rng.normal(0, 5, size=(4, sizes[0]))
        probs = forward_batch(model, X)
        assert np.all(probs > 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_forward_batch_matches_single():
    model = random_model(Architecture((6, 5, 3)), seed=1)
    X = np.random.default_rng(2).random((9, 6))
    batched = forward_batch(model, X)
    singles = np.stack([forward(model, x) for x in X])
    np.testing.assert_allclose(batched, singles, atol=1e-14)


def test_log_probs_stable_for_huge_logits():
    arch = Architecture((2, 2))
    # logits = W x with one row enormous: softmax must not overflow
    params = np.array([2000.0, 0.0, 0.0, 0.0, 0.0, 0.0], dtype=np.float32)
    model = ModelParameters(arch, params)
    lp = log_probs(model, np.array([[1.0, 0.0]]))
    assert np.all(np.isfinite(lp[0, 0:1]))
    assert lp[0, 0] <= 0.0
    assert lp[0, 1] == pytest.approx(-2000.0, abs=1e-6)


def test_forward_rejects_wrong_input_size():
    model = random_model(Architecture((4, 3)), seed=0)
    with pytest.raises(ValueError):
        forward(model, np.zeros(5))


def test_per_sample_grad_matches_finite_differences():
    arch = Architecture((2, 4, 3))
    model = random_model(arch, seed=5)
    x = np.array([0.7, -0.2])
    y = 1

    def log_prob_y(flat64):
        return log_probs(model_with_params(arch, flat64), x[None, :])[0, y]

    analytic = per_sample_grad(model, x, y)
    numeric = numeric_grad(log_prob_y, model.params.astype(np.float64))
    np.testing.assert_allclose(analytic, numeric, rtol=2e-4, atol=1e-7)


def test_per_sample_grad_is_float64_full_length():
    model = random_model(Architecture((3, 5, 2)), seed=9)
    g = per_sample_grad(model, np.ones(3), 0)
    assert g.dtype == np.float64
    assert g.shape == (model.param_count,)


def test_batch_grad_mean_equals_mean_of_per_sample():
    arch = Architecture((4, 6, 3))
    model = random_model(arch, seed=3)
    ds = random_dataset(4, 12, seed=8)
    batched = batch_grad_mean(model, ds.features, ds.labels)
    # cross-entropy gradient is minus the mean log-likelihood gradient
    loop = -np.mean(
        [per_sample_grad(model, x, int(y)) for x, y in zip(ds.features, ds.labels)], axis=0
    )
    np.testing.assert_allclose(batched, loop, atol=1e-12)


def test_cross_entropy_matches_log_probs():
    model = random_model(Architecture((4, 3)), seed=2)
    ds = random_dataset(4, 20, seed=4)
    lp = log_probs(model, ds.features)
    expected = -lp[np.arange(len(ds)), ds.labels].mean()
    assert cross_entropy(model, ds.features, ds.labels) == pytest.approx(expected, rel=1e-12)


def test_sgd_zero_lr_is_identity_and_records_zero_deltas():
    model = random_model(Architecture((3, 4, 2)), seed=0)
    ds = random_dataset(3, 10, seed=1, class_count=2)
    cfg = TrainConfig(epochs=2, learning_rate=0.0, batch_size=4, seed=0, record_updates=True)
    trained, log = sgd_train(model, ds, cfg)
    np.testing.assert_array_equal(trained.params, model.params)
    assert len(log) == 2 * 3  # ceil(10/4)=3 batches per epoch
    for rec in log.records():
        assert np.all(rec.delta == 0)


def test_sgd_single_step_matches_manual_gradient():
    arch = Architecture((3, 4, 2))
    model = random_model(arch, seed=6)
    ds = random_dataset(3, 5, seed=7, class_count=2)
    lr = 0.05
    cfg = TrainConfig(epochs=1, learning_rate=lr, batch_size=5, seed=0, shuffle=False)
    trained, _ = sgd_train(model, ds, cfg)
    grad = batch_grad_mean(model, ds.features, ds.labels)
    expected = model.params.astype(np.float64) - lr * grad
    np.testing.assert_allclose(trained.params, expected, atol=1e-6)


def test_sgd_does_not_mutate_input_model():
    model = random_model(Architecture((3, 4, 2)), seed=0)
    before = model.params.copy()
    ds = random_dataset(3, 10, seed=1, class_count=2)
    sgd_train(model, ds, TrainConfig(epochs=1, learning_rate=0.5, batch_size=4, seed=0))
    np.testing.assert_array_equal(model.params, before)


def test_sgd_deterministic_and_seed_sensitive():
    model = random_model(Architecture((3, 4, 2)), seed=0)
    ds = random_dataset(3, 16, seed=1, class_count=2)
    cfg = TrainConfig(epochs=3, learning_rate=0.1, batch_size=4, seed=5)
    a, _ = sgd_train(model, ds, cfg)
    b, _ = sgd_train(model, ds, cfg)
    c, _ = sgd_train(model, ds, TrainConfig(epochs=3, learning_rate=0.1, batch_size=4, seed=6))
    assert np.array_equal(a.params, b.params)
    assert not np.array_equal(a.params, c.params)


def test_update_log_telescopes_to_trained_params():
    model = random_model(Architecture((4, 5, 3)), seed=0)
    ds = random_dataset(4, 22, seed=1)
    cfg = TrainConfig(epochs=2, learning_rate=0.2, batch_size=8, seed=3, record_updates=True)
    trained, log = sgd_train(model, ds, cfg)
    replay = model.params.astype(np.float64) + log.total_delta()
    np.testing.assert_allclose(replay, trained.params.astype(np.float64), atol=1e-6)


def test_update_log_covers_every_sample_with_tail_batch():
    model = random_model(Architecture((4, 5, 3)), seed=0)
    ds = random_dataset(4, 10, seed=1)
    cfg = TrainConfig(epochs=1, learning_rate=0.1, batch_size=4, seed=0, record_updates=True)
    _, log = sgd_train(model, ds, cfg)
    recs = list(log.records())
    assert [len(r.sample_indices) for r in recs] == [4, 4, 2]
    seen = np.concatenate([r.sample_indices for r in recs])
    assert sorted(seen.tolist()) == list(range(10))
    for r in recs:
        assert r.sample_indices.dtype == np.uint32
        assert np.all(np.diff(r.sample_indices.astype(np.int64)) > 0)


def test_update_log_reset_consumed():
    log = UpdateLog()
    model = random_model(Architecture((3, 2)), seed=0)
    ds = random_dataset(3, 6, seed=0, class_count=2)
    _, log = sgd_train(
        model, ds, TrainConfig(epochs=1, learning_rate=0.1, batch_size=3, seed=0, record_updates=True)
    )
    for rec in log.records():
        rec.consumed = True
    log.reset_consumed()
    assert all(not rec.consumed for rec in log.records())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0, learning_rate=0.1, batch_size=4, seed=0).validate(10)
    with pytest.raises(ValueError):
        TrainConfig(epochs=1, learning_rate=-0.1, batch_size=4, seed=0).validate(10)
    with pytest.raises(ValueError):
        TrainConfig(epochs=1, learning_rate=0.1, batch_size=0, seed=0).validate(10)
    with pytest.raises(ValueError):
        TrainConfig(epochs=1, learning_rate=0.1, batch_size=11, seed=0).validate(10)
