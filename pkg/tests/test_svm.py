import numpy as np
import pytest

from perspectivist.features import build_vocabulary, featurize
from perspectivist.metrics import EvalReport, evaluate
from perspectivist.models.training import TrainConfig, predict_arrays, prepare_features, train
from perspectivist.models.svm import SvmModel, fit_platt, hinge_loss, pegasos, svm_predict, svm_train


def perceptron_separates(X, y, max_epochs=1000):
    """Plain perceptron with a bias: returns True once an epoch makes no mistakes."""
    X = X.toarray()
    s = np.where(y == 1, 1.0, -1.0)
    w, b = np.zeros(X.shape[1]), 0.0
    for _ in range(max_epochs):
        mistakes = 0
        for xi, si in zip(X, s):
            if si * (xi @ w + b) <= 0:
                w += si * xi
                b += si
                mistakes += 1
        if mistakes == 0:
            return True
    return False


@pytest.fixture(scope="module")
def toy():
    rng = np.random.default_rng(0)
    left, right = ["apple", "pear", "plum", "fig"], ["rock", "sand", "clay", "slate"]
    shared = ["the", "a"]
    texts, labels = [], []
    for i in range(120):
        label = i % 2
        words = rng.choice(right if label else left, size=rng.integers(2, 6)).tolist()
        words += rng.choice(shared, size=rng.integers(0, 3)).tolist()
        texts.append(" ".join(words))
        labels.append(label)
    vocab = build_vocabulary(texts)
    return featurize(texts, vocab), np.array(labels), texts, vocab


def test_separable_set_is_fit_exactly(toy):
    X, y, _, _ = toy
    assert perceptron_separates(X, y)
    model = svm_train(X, y, lam=1e-3, epochs=50, seed=0)
    hard, _ = svm_predict(model, X)
    assert (hard == y).mean() == 1.0


def test_deep_positive_duplicate(toy):
    X, y, _, vocab = toy
    model = svm_train(X, y, lam=1e-3, epochs=50, seed=0)
    hard, soft = svm_predict(model, featurize(["rock rock sand clay slate"], vocab))
    assert hard[0] == 1 and soft[0, 1] > 0.5


def test_determinism(toy):
    X, y, _, _ = toy
    a, b = pegasos(X, y, 1e-3, 5, seed=3), pegasos(X, y, 1e-3, 5, seed=3)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_projection_radius(toy):
    X, y, _, _ = toy
    lam = 1e-2
    w, b = pegasos(X, y, lam, 10, seed=0)
    assert np.sqrt(w @ w + b * b) <= 1 / np.sqrt(lam) + 1e-9


def test_scaled_updates_match_dense_reference(toy):
    X, y, _, _ = toy
    lam, epochs, seed = 1e-2, 3, 4
    # dense textbook Pegasos with the bias as a constant feature
    Xd = np.hstack([X.toarray(), np.ones((X.shape[0], 1))])
    s = np.where(y == 1, 1.0, -1.0)
    w = np.zeros(Xd.shape[1])
    rng = np.random.default_rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(len(y)):
            t += 1
            eta = 1 / (lam * t)
            hit = s[i] * (w @ Xd[i]) < 1
            w = (1 - eta * lam) * w
            if hit:
                w = w + eta * s[i] * Xd[i]
            w = w * min(1.0, (1 / np.sqrt(lam)) / max(np.linalg.norm(w), 1e-300))
    got_w, got_b = pegasos(X, y, lam, epochs, seed)
    np.testing.assert_allclose(got_w, w[:-1], atol=1e-9)
    assert got_b == pytest.approx(w[-1], abs=1e-9)


def test_single_class_rejected(toy):
    X, _, _, _ = toy
    with pytest.raises(ValueError, match="both classes"):
        svm_train(X, np.ones(X.shape[0], dtype=int))


def test_hinge_zero_beyond_margin():
    model = SvmModel(np.array([2.0, -2.0]), 0.0, 1e-3)
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert hinge_loss(model, X, [1, 0]) == 0.0
    assert hinge_loss(model, X, [0, 1]) == 3.0


def test_zero_margin_is_class_zero():
    model = SvmModel(np.zeros(2), 0.0, 1e-3, platt_a=2.0, platt_b=0.3)
    hard, soft = svm_predict(model, np.array([[1.0, 1.0]]))
    assert hard[0] == 0
    assert soft[0, 1] == pytest.approx(1 / (1 + np.exp(-0.3)), abs=1e-15)


def test_platt_monotone():
    rng = np.random.default_rng(1)
    margins = rng.normal(size=300)
    # anti-correlated targets would want A < 0; the fit must clamp to A >= 0
    for targets in ((margins > 0).astype(float), (margins < 0).astype(float), rng.random(300)):
        a, b = fit_platt(margins, targets)
        assert a >= 0
        model = SvmModel(np.array([1.0]), 0.0, 1e-3, a, b)
        _, soft = svm_predict(model, np.sort(margins)[:, None])
        assert np.all(np.diff(soft[:, 1]) >= 0)


def test_platt_recovers_known_sigmoid():
    rng = np.random.default_rng(2)
    margins = rng.normal(scale=2, size=2000)
    targets = 1 / (1 + np.exp(-(1.5 * margins - 0.4)))
    a, b = fit_platt(margins, targets)
    assert a == pytest.approx(1.5, abs=1e-6)
    assert b == pytest.approx(-0.4, abs=1e-6)


def test_outputs_fill_eval_report(small_synth):
    feats = prepare_features(small_synth[2])
    reports = {}
    for kind in ("svm", "multitask"):
        trained = train(kind, feats, TrainConfig(hidden_dims=(8,), max_epochs=5, patience=5, svm_epochs=10))
        hard, _, soft, heads = predict_arrays(trained, feats.X["test"])
        reports[kind] = evaluate(hard, soft, heads, feats.matrices["test"], feats.annotator_ids,
                                 feats.gold_hard["test"], feats.gold_soft["test"])
    assert isinstance(reports["svm"], EvalReport)
    assert list(reports["svm"].to_flat()) == list(reports["multitask"].to_flat())
