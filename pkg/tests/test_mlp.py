import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nnfuzz.models.mlp import (Layer, MlpModel, TrainingError, accuracy, init_mlp, mlp_forward, predict,
                               safe_cross_entropy, train_mlp, unsafe_cross_entropy)
from nnfuzz.models.targets import evaluate_f32_f16_pair
from nnfuzz.numeric import ParameterError, make_rng


def _random_mlp(sizes, seed=0, acts=None):
    r = np.random.default_rng(seed)
    layers = []
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        act = acts[i] if acts else ("identity" if i == len(sizes) - 2 else "relu")
        layers.append(Layer(r.standard_normal((a, b)).astype(np.float32),
                            r.standard_normal(b).astype(np.float32), act))
    return MlpModel(tuple(layers))


def test_zero_network_gives_zero_logits():
    m = MlpModel((Layer(np.zeros((5, 4)), np.zeros(4), "relu"), Layer(np.zeros((4, 3)), np.zeros(3), "identity")))
    _, logits = mlp_forward(m, np.ones(5))
    assert np.all(logits == 0)


def test_identity_network_returns_input():
    m = MlpModel((Layer(np.eye(6), np.zeros(6), "identity"),))
    x = np.linspace(-2, 2, 6).astype(np.float32)
    acts, logits = mlp_forward(m, x)
    assert acts == []
    np.testing.assert_array_equal(logits, x)


def test_forward_matches_loop_oracle():
    m = _random_mlp([7, 9, 4], seed=1)
    x = np.random.default_rng(2).standard_normal(7).astype(np.float32)
    h = [float(v) for v in x]
    for layer in m.layers:
        w, b = layer.weight.astype(np.float64), layer.bias.astype(np.float64)
        out = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += h[i] * w[i, j]
            out.append(max(s, 0.0) if layer.activation == "relu" else s)
        h = out
    acts, logits = mlp_forward(m, x)
    assert len(acts) == 1 and acts[0].shape == (9,)
    np.testing.assert_allclose(logits, h, rtol=1e-6, atol=1e-6)


def test_forward_shape_mismatch():
    m = _random_mlp([3, 2])
    with pytest.raises(ParameterError):
        mlp_forward(m, np.zeros(4))


def test_layers_must_chain():
    with pytest.raises(ParameterError):
        MlpModel((Layer(np.zeros((3, 4)), np.zeros(4)), Layer(np.zeros((5, 2)), np.zeros(2), "identity")))


@pytest.mark.parametrize("truncate", [False, True])
def test_batch_equals_rows(truncate):
    m = _random_mlp([16, 32, 10], seed=4)
    x = np.random.default_rng(5).random((23, 16)).astype(np.float32)
    acts, logits = mlp_forward(m, x, truncate_activations=truncate)
    for i in range(len(x)):
        a1, l1 = mlp_forward(m, x[i], truncate_activations=truncate)
        np.testing.assert_array_equal(l1, logits[i])
        np.testing.assert_array_equal(a1[0], acts[0][i])


def test_unsafe_cross_entropy_examples():
    assert unsafe_cross_entropy(np.array([0.0, 0.0]), 0) == pytest.approx(math.log(2), abs=1e-12)
    assert np.isnan(unsafe_cross_entropy(np.array([1000.0, 0.0]), 0))
    assert unsafe_cross_entropy(np.array([-1000.0, 0.0]), 0) == math.inf


def test_unsafe_cross_entropy_float32_thresholds():
    # exp overflows float32 just below 89 and underflows to zero around -104
    assert np.isnan(unsafe_cross_entropy(np.array([89.0, 0.0], np.float32), 0))
    assert np.isfinite(unsafe_cross_entropy(np.array([88.0, 0.0], np.float32), 0))
    assert unsafe_cross_entropy(np.array([-110.0, 0.0], np.float32), 0) == math.inf


def test_safe_cross_entropy_examples():
    assert safe_cross_entropy([0.0, 0.0], 0) == pytest.approx(math.log(2), abs=1e-12)
    assert safe_cross_entropy([1000.0, 0.0], 0) == 0.0
    assert np.isfinite(safe_cross_entropy([-1000.0, 1000.0], 0))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.data())
def test_safe_and_unsafe_agree_on_small_logits(logits, data):
    label = data.draw(st.integers(0, len(logits) - 1))
    z = np.array(logits)
    u = unsafe_cross_entropy(z, label)
    if np.isfinite(u):
        assert u == pytest.approx(safe_cross_entropy(z, label), abs=1e-6, rel=1e-6)


def test_cross_entropy_batched():
    z = np.array([[0.0, 0.0], [1000.0, 0.0]])
    out = unsafe_cross_entropy(z, np.array([0, 0]))
    assert out[0] == pytest.approx(math.log(2))
    assert np.isnan(out[1])
    with pytest.raises(ParameterError):
        unsafe_cross_entropy(z, np.array([0, 2]))


def test_train_zero_steps_is_init():
    x = np.random.default_rng(0).random((20, 4)).astype(np.float32)
    y = np.arange(20) % 2
    res = train_mlp(x, y, [5], steps=0, seed=3)
    init = init_mlp([4, 5, 2], 3)
    for a, b in zip(res.model.layers, init.layers):
        np.testing.assert_array_equal(a.weight, b.weight)
        np.testing.assert_array_equal(a.bias, b.bias)
    assert res.losses == []


def _separable(n=200, seed=0):
    r = np.random.default_rng(seed)
    x = r.random((n, 2)).astype(np.float32)
    y = (x[:, 0] + 0.5 * x[:, 1] > 0.75).astype(np.int64)
    keep = np.abs(x[:, 0] + 0.5 * x[:, 1] - 0.75) > 0.05
    return x[keep], y[keep]


def test_train_separable_reaches_high_accuracy():
    x, y = _separable()
    res = train_mlp(x, y, [16], steps=500, batch=32, lr=0.5, seed=0)
    assert res.train_accuracy >= 0.99
    assert accuracy(res.model, x, y) == res.train_accuracy


def test_train_is_deterministic():
    x, y = _separable()
    a = train_mlp(x, y, [8], steps=50, seed=7).model
    b = train_mlp(x, y, [8], steps=50, seed=7).model
    for la, lb in zip(a.layers, b.layers):
        assert la.weight.tobytes() == lb.weight.tobytes()


def test_train_divergence_reports_step():
    x, y = _separable()
    with pytest.raises(TrainingError) as info:
        train_mlp(x * 1e4, y, [16], steps=100, lr=10.0, loss="unsafe", seed=0)
    assert 0 <= info.value.step < 100


def test_train_rejects_bad_dataset():
    with pytest.raises(ParameterError):
        train_mlp(np.zeros((3, 2)), np.zeros(4, dtype=int), [4], steps=1)


def test_output_bias_offset_survives_training():
    x, y = _separable()
    res = train_mlp(x, y, [8], steps=200, lr=0.3, seed=0, output_bias=-20.0)
    assert res.model.layers[-1].bias.mean() == pytest.approx(-20.0, abs=1e-3)
    plain = train_mlp(x, y, [8], steps=200, lr=0.3, seed=0)
    np.testing.assert_array_equal(predict(res.model, x), predict(plain.model, x))


@pytest.mark.parametrize("loss", ["safe", "unsafe"])
def test_one_sgd_step_matches_finite_differences(loss):
    r = np.random.default_rng(11)
    x = r.random((6, 3)).astype(np.float32)
    y = np.array([0, 1, 1, 0, 1, 0])
    lr, batch, seed = 0.05, 4, 2
    init = init_mlp([3, 4, 2], seed)
    after = train_mlp(x, y, [4], steps=1, batch=batch, lr=lr, seed=seed, loss=loss).model
    idx = make_rng(seed, 1).integers(0, len(x), size=batch)
    xb, yb = x[idx].astype(np.float64), y[idx]
    params = [p.astype(np.float64) for l in init.layers for p in (l.weight, l.bias)]

    def loss_of(ps):
        h = np.maximum(xb @ ps[0] + ps[1], 0)
        z = h @ ps[2] + ps[3]
        return float(np.mean(safe_cross_entropy(z, yb)))

    eps = 1e-6
    for k, p in enumerate(params):
        grad = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            hi = [q.copy() for q in params]
            lo = [q.copy() for q in params]
            hi[k][i] += eps
            lo[k][i] -= eps
            grad[i] = (loss_of(hi) - loss_of(lo)) / (2 * eps)
        layer = after.layers[k // 2]
        new = layer.weight if k % 2 == 0 else layer.bias
        np.testing.assert_allclose(new, p - lr * grad, atol=1e-5)


def test_f16_pair_exact_for_representable_net():
    w = np.array([[0.5, -1.25], [2.0, 0.125], [1.0, 1.0]], np.float32)
    m = MlpModel((Layer(w, np.array([0.25, -0.5]), "identity"),))
    meta = evaluate_f32_f16_pair(m, np.array([1.0, 0.5, -2.0], np.float32))
    np.testing.assert_array_equal(meta.logits_f32, meta.logits_f16)


def test_f16_pair_flushes_tiny_weight():
    m = MlpModel((Layer(np.array([[1e-9], [1.0]], np.float32), np.zeros(1), "identity"),))
    meta = evaluate_f32_f16_pair(m, np.array([1000.0, 0.0], np.float32))
    assert meta.logits_f32[0] == np.float32(1e-6)
    assert meta.logits_f16[0] == 0.0


def test_f16_pair_weights_only_option():
    m = MlpModel((Layer(np.array([[1.0]], np.float32), np.zeros(1), "identity"),))
    x = np.array([0.1], np.float32)
    assert evaluate_f32_f16_pair(m, x, truncate_activations=False).logits_f16[0] == np.float32(0.1)
    assert evaluate_f32_f16_pair(m, x).logits_f16[0] == np.float32(0.0999755859375)
