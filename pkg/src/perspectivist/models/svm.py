"""Linear SVM baseline: Pegasos training plus Platt-scaled probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class SvmModel:
    w: np.ndarray
    b: float
    lam: float
    platt_a: float = 1.0
    platt_b: float = 0.0

    def margin(self, X) -> np.ndarray:
        return np.asarray(X @ self.w).ravel() + self.b


def _rows(X) -> sp.csr_matrix:
    return X.tocsr() if sp.issparse(X) else sp.csr_matrix(np.atleast_2d(np.asarray(X, dtype=np.float64)))


def pegasos(X, y, lam: float, epochs: int, seed: int, project: bool = True) -> tuple[np.ndarray, float]:
    """Minimize lam/2 ||w||^2 + mean hinge(y (w.x + b)) with step 1/(lam t).

    The bias is an extra constant feature, so it is regularized like the weights.
    ``y`` holds labels in {0, 1}.
    """
    X = _rows(X)
    y = np.asarray(y)
    n, dim = X.shape
    signs = np.where(y == 1, 1.0, -1.0)
    # w = scale * v, with ||v||^2 tracked incrementally so each step costs O(nnz(x))
    v = np.zeros(dim + 1)
    scale, vv = 1.0, 0.0
    rng = np.random.default_rng(seed)
    radius = 1.0 / math.sqrt(lam)
    t = 0
    indptr, indices, data = X.indptr, X.indices, X.data
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            cols = indices[indptr[i]:indptr[i + 1]]
            vals = data[indptr[i]:indptr[i + 1]]
            vx = v[cols] @ vals + v[-1]
            margin = signs[i] * scale * vx
            shrink = 1.0 - eta * lam
            if shrink == 0.0:
                v[:] = 0.0
                scale, vv, vx = 1.0, 0.0, 0.0
            else:
                scale *= shrink
            if margin < 1.0:
                d = eta * signs[i] / scale
                vv += 2.0 * d * vx + d * d * (vals @ vals + 1.0)
                v[cols] += d * vals
                v[-1] += d
            if project:
                norm = scale * math.sqrt(max(vv, 0.0))
                if norm > radius:
                    scale *= radius / norm
    w = scale * v
    return w[:-1].copy(), float(w[-1])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _platt_objective(a: float, b: float, m: np.ndarray, t: np.ndarray) -> float:
    z = a * m + b
    # -[t ln s(z) + (1-t) ln(1 - s(z))] = log(1 + e^z) - t z, evaluated stably
    return float(np.sum(np.logaddexp(0.0, z) - t * z))


def fit_platt(margins, targets, max_iter: int = 100, tol: float = 1e-10) -> tuple[float, float]:
    """Fit p(1) = sigmoid(A m + B) by damped Newton on the cross-entropy, with A >= 0.

    ``targets`` are probabilities of class 1 (hard 0/1 labels or soft label v1).
    """
    m = np.asarray(margins, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    mean_t = float(np.clip(t.mean(), 1e-6, 1 - 1e-6))
    a, b = 0.0, math.log(mean_t / (1 - mean_t))
    f = _platt_objective(a, b, m, t)
    for _ in range(max_iter):
        p = _sigmoid(a * m + b)
        r = p - t
        g = np.array([r @ m, r.sum()])
        w = p * (1 - p)
        H = np.array([[w @ (m * m), w @ m], [w @ m, w.sum()]]) + 1e-12 * np.eye(2)
        if np.max(np.abs(g)) < tol:
            break
        step = np.linalg.solve(H, g)
        slope = float(g @ step)
        scale = 1.0
        while scale > 1e-10:
            na, nb = a - scale * step[0], b - scale * step[1]
            na = max(na, 0.0)
            nf = _platt_objective(na, nb, m, t)
            if nf <= f - 1e-4 * scale * slope:
                break
            scale *= 0.5
        else:
            break
        if abs(f - nf) < tol * max(1.0, abs(f)):
            a, b, f = na, nb, nf
            break
        a, b, f = na, nb, nf
    if a == 0.0:
        b = math.log(mean_t / (1 - mean_t))
    return float(a), float(b)


def svm_train(X, y, lam: float = 1e-4, epochs: int = 50, seed: int = 0,
              calib_X=None, calib_targets=None) -> SvmModel:
    """Train with Pegasos, then fit Platt parameters on the calibration set.

    Without a calibration set the training margins and labels are used.
    """
    y = np.asarray(y)
    if np.unique(y).size < 2:
        raise ValueError("SVM training set must contain both classes")
    if lam <= 0 or epochs < 1:
        raise ValueError("lam must be positive and epochs >= 1")
    w, b = pegasos(X, y, lam, epochs, seed)
    model = SvmModel(w, b, lam)
    if calib_X is None:
        calib_X, calib_targets = X, y
    model.platt_a, model.platt_b = fit_platt(model.margin(_rows(calib_X)), calib_targets)
    return model


def svm_predict(model: SvmModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Hard labels (margin > 0 is class 1) and (N, 2) Platt soft labels."""
    margin = model.margin(_rows(X))
    hard = (margin > 0).astype(np.int64)
    p1 = _sigmoid(model.platt_a * margin + model.platt_b)
    return hard, np.stack([1.0 - p1, p1], axis=1)


def hinge_loss(model: SvmModel, X, y) -> float:
    signs = np.where(np.asarray(y) == 1, 1.0, -1.0)
    return float(np.maximum(0.0, 1.0 - signs * model.margin(_rows(X))).mean())
