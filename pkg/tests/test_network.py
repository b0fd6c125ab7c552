import math

import numpy as np
import pytest

from perspectivist.features import SparseVector
from perspectivist.models.network import (
    AdamHyper,
    AdamState,
    EncoderConfig,
    adam_step,
    forward,
    init_model,
    loss_and_grads,
    multitask_loss,
)


def random_problem(rng, v=None, hidden=None, k=None, n=None, layers=None):
    v = v or int(rng.integers(2, 21))
    k = k or int(rng.integers(1, 4))
    n = n or int(rng.integers(2, 9))
    layers = layers or int(rng.integers(1, 3))
    hidden = hidden or tuple(int(h) for h in rng.integers(1, 9, size=layers))
    model = init_model(EncoderConfig(v, hidden), k, int(rng.integers(1 << 30)))
    for name in model.params:
        # non-zero biases so the gradient check also covers them
        if name.startswith("b"):
            model.params[name] = rng.normal(0, 0.3, model.params[name].shape)
    X = rng.random((n, v)) * (rng.random((n, v)) < 0.6)
    labels = rng.integers(0, 2, size=(n, k))
    mask = rng.random((n, k)) < 0.7
    mask[0, 0] = True
    return model, X, labels, mask


def numeric_grads(model, X, labels, mask, h=1e-6):
    grads = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = multitask_loss(forward(model, X), labels, mask)
            p[idx] = orig - h
            down = multitask_loss(forward(model, X), labels, mask)
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads[name] = g
    return grads


def relative_error(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else np.linalg.norm(a - b) / denom


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model, X, labels, mask = random_problem(rng)
    loss, grads = loss_and_grads(model, X, labels, mask)
    assert loss == pytest.approx(multitask_loss(forward(model, X), labels, mask), abs=1e-14)
    numeric = numeric_grads(model, X, labels, mask)
    for name in model.params:
        assert relative_error(grads[name], numeric[name]) < 1e-4, name


def test_soft_target_gradient():
    rng = np.random.default_rng(42)
    model, X, labels, mask = random_problem(rng, k=1)
    mask[:] = True
    targets = rng.dirichlet([1, 1], size=(X.shape[0], 1))
    _, grads = loss_and_grads(model, X, labels, mask, soft_targets=targets)

    def loss_fn():
        probs = forward(model, X)
        return float((-(targets * np.log(probs))).sum(axis=(1, 2)).mean())

    h = 1e-6
    for name, p in model.params.items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss_fn()
            p[idx] = orig - h
            down = loss_fn()
            p[idx] = orig
            num[idx] = (up - down) / (2 * h)
        assert relative_error(grads[name], num) < 1e-4, name


def test_masked_labels_do_not_matter():
    rng = np.random.default_rng(7)
    model, X, labels, mask = random_problem(rng, k=3, n=6)
    loss, grads = loss_and_grads(model, X, labels, mask)
    perturbed = np.where(mask, labels, 1 - labels)
    loss2, grads2 = loss_and_grads(model, X, perturbed, mask)
    assert loss == loss2
    for name in grads:
        np.testing.assert_array_equal(grads[name], grads2[name])


def test_masking_locality_for_head_parameters():
    rng = np.random.default_rng(11)
    model, X, labels, mask = random_problem(rng, k=3, n=5)
    mask[:, 1] = True
    extra_X = rng.random((4, X.shape[1]))
    extra_labels = rng.integers(0, 2, size=(4, 3))
    extra_mask = np.ones((4, 3), dtype=bool)
    extra_mask[:, 1] = False
    _, g = loss_and_grads(model, X, labels, mask)
    _, g_ext = loss_and_grads(model, np.vstack([X, extra_X]), np.vstack([labels, extra_labels]),
                              np.vstack([mask, extra_mask]))
    # per-instance contributions: rescale the batch means back to sums
    n, n_ext = X.shape[0], X.shape[0] + 4
    np.testing.assert_allclose(g_ext["Wh"][1] * n_ext, g["Wh"][1] * n, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(g_ext["bh"][1] * n_ext, g["bh"][1] * n, rtol=1e-12, atol=1e-15)


def test_loss_closed_forms():
    probs = np.full((1, 3, 2), 0.5)
    assert multitask_loss(probs, [[0, 1, 1]], [[True] * 3]) == pytest.approx(3 * math.log(2), abs=1e-15)
    onehot = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    assert multitask_loss(onehot, [[0, 1]], [[True, True]]) == 0.0
    with pytest.raises(ValueError):
        multitask_loss(probs, [[0, 1, 1]], [[False] * 3])


def test_init_determinism_and_shapes():
    cfg = EncoderConfig(30, (768,))
    a, b, c = init_model(cfg, 8, 1), init_model(cfg, 8, 1), init_model(cfg, 8, 2)
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    assert not np.array_equal(a.params["W0"], c.params["W0"])
    assert a.params["Wh"].shape == (8, 768, 2)
    assert np.all(a.params["b0"] == 0) and np.all(a.params["bh"] == 0)
    assert np.abs(a.params["W0"]).max() <= 1 / math.sqrt(30)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(10, ())
    with pytest.raises(ValueError):
        EncoderConfig(0, (4,))
    with pytest.raises(ValueError):
        init_model(EncoderConfig(10, (4,)), 0, 0)


def test_forward():
    model = init_model(EncoderConfig(5, (4, 3)), 3, 0)
    model.params["Wh"][:] = 0
    out = forward(model, SparseVector(np.array([1, 3]), np.array([0.6, 0.8]), 5))
    np.testing.assert_array_equal(out, np.full((1, 3, 2), 0.5))
    single = init_model(EncoderConfig(5, (4,)), 1, 0)
    out = forward(single, np.random.default_rng(0).random((7, 5)))
    assert out.shape == (7, 1, 2)
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        forward(single, np.zeros((1, 6)))


class TestAdam:
    def test_zero_gradient_is_noop(self):
        params = {"w": np.array([1.0, -2.0])}
        new, state = adam_step(params, {"w": np.zeros(2)}, AdamState(), 1, AdamHyper())
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_quadratic_descends(self):
        params = {"w": np.array(1.0)}
        new, _ = adam_step(params, {"w": 2 * params["w"]}, AdamState(), 1, AdamHyper(lr=0.1))
        assert new["w"] < 1.0
        assert new["w"] == pytest.approx(0.9, abs=1e-7)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        p = {"a": rng.random(3)}
        g = {"a": rng.random(3)}
        r1 = adam_step(p, g, AdamState(), 1, AdamHyper())
        r2 = adam_step(p, g, AdamState(), 1, AdamHyper())
        np.testing.assert_array_equal(r1[0]["a"], r2[0]["a"])

    def test_bias_correction_matches_reference(self):
        # reference: textbook loop over two steps
        w, m, v = 0.5, 0.0, 0.0
        b1, b2, lr, eps = 0.9, 0.999, 0.01, 1e-8
        params, state = {"w": np.array(0.5)}, AdamState()
        for t, g in enumerate([0.3, -0.7], 1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
            params, state = adam_step(params, {"w": np.array(g)}, state, t, AdamHyper(lr, b1, b2, eps))
        assert float(params["w"]) == pytest.approx(w, abs=1e-15)

    def test_non_finite_gradient_named(self):
        with pytest.raises(FloatingPointError, match="W0"):
            adam_step({"W0": np.zeros(2)}, {"W0": np.array([np.nan, 0.0])}, AdamState(), 1, AdamHyper())
