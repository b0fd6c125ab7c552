"""Shared dense encoder with one softmax classification head per annotator.

Parameters live in a plain dict of numpy arrays:

    W0 (V, H0), b0 (H0,), ..., Wh (K, H_last, 2), bh (K, 2)

The single-task classifier is the K = 1 case trained on aggregated labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..metrics import EPSILON


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (768,)
    activation: str = "relu"

    def __post_init__(self):
        if not self.hidden_dims:
            raise ValueError("hidden_dims must be non-empty")
        if self.input_dim < 1 or any(d < 1 for d in self.hidden_dims):
            raise ValueError(f"all dimensions must be >= 1 (input {self.input_dim}, hidden {self.hidden_dims})")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass
class MultiTaskModel:
    config: EncoderConfig
    n_heads: int
    params: dict[str, np.ndarray]
    seed: int
    # heads that received at least one training annotation; others are answered by the fallback
    trained_heads: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.trained_heads is None:
            self.trained_heads = np.ones(self.n_heads, dtype=bool)

    @property
    def n_layers(self) -> int:
        return len(self.config.hidden_dims)

    def copy(self) -> "MultiTaskModel":
        return MultiTaskModel(self.config, self.n_heads, {k: v.copy() for k, v in self.params.items()},
                              self.seed, self.trained_heads.copy())


def param_names(n_layers: int) -> list[str]:
    names = []
    for layer in range(n_layers):
        names += [f"W{layer}", f"b{layer}"]
    return names + ["Wh", "bh"]


def init_model(cfg: EncoderConfig, n_heads: int, seed: int) -> MultiTaskModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if n_heads < 1:
        raise ValueError("a model needs at least one head")
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    fan_in = cfg.input_dim
    for layer, width in enumerate(cfg.hidden_dims):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_in, width))
        params[f"b{layer}"] = np.zeros(width)
        fan_in = width
    bound = 1.0 / np.sqrt(fan_in)
    params["Wh"] = rng.uniform(-bound, bound, size=(n_heads, fan_in, 2))
    params["bh"] = np.zeros((n_heads, 2))
    return MultiTaskModel(cfg, n_heads, params, seed)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_input(model: MultiTaskModel, features) -> sp.csr_matrix | np.ndarray:
    if hasattr(features, "to_dense") and hasattr(features, "indices") and not sp.issparse(features):
        features = features.to_dense()[None, :]
    if not sp.issparse(features):
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != model.config.input_dim:
        raise ValueError(f"feature dimension {features.shape[1]} does not match model input {model.config.input_dim}")
    return features


def _encode(model: MultiTaskModel, X) -> tuple[list, list[np.ndarray]]:
    """Return the layer inputs and pre-activations needed for backprop."""
    inputs, pre = [], []
    a = X
    for layer in range(model.n_layers):
        inputs.append(a)
        z = a @ model.params[f"W{layer}"] + model.params[f"b{layer}"]
        z = np.asarray(z)
        pre.append(z)
        a = np.maximum(z, 0.0)
    inputs.append(a)
    return inputs, pre


def _head_logits(model: MultiTaskModel, hidden: np.ndarray) -> np.ndarray:
    return np.einsum("nh,khc->nkc", hidden, model.params["Wh"]) + model.params["bh"]


def forward(model: MultiTaskModel, features) -> np.ndarray:
    """Per-head class distributions, shape (N, K, 2).  A single SparseVector gives N = 1."""
    X = _as_input(model, features)
    inputs, _ = _encode(model, X)
    return _softmax(_head_logits(model, inputs[-1]))


def _check_targets(model: MultiTaskModel, n: int, labels: np.ndarray, mask: np.ndarray):
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    if labels.shape != (n, model.n_heads) or mask.shape != labels.shape:
        raise ValueError(f"targets {labels.shape} / mask {mask.shape} do not match batch ({n}, {model.n_heads})")
    if not mask.any():
        raise ValueError("batch has no present annotations")
    return labels.astype(np.int64) * mask, mask


def multitask_loss(probs: np.ndarray, labels, mask, epsilon: float = EPSILON) -> float:
    """Sum over present heads of -ln max(p_k(y_k), eps), averaged over the batch."""
    labels = np.asarray(labels).astype(np.int64)
    mask = np.asarray(mask, dtype=bool)
    if probs.shape[:2] != labels.shape or mask.shape != labels.shape:
        raise ValueError(f"outputs {probs.shape} do not match targets {labels.shape}")
    if not mask.any():
        raise ValueError("batch has no present annotations")
    labels = labels * mask
    p_true = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    nll = np.where(mask, -np.log(np.maximum(p_true, epsilon)), 0.0)
    return float(nll.sum(axis=1).mean())


def loss_and_grads(model: MultiTaskModel, X, labels, mask, epsilon: float = EPSILON,
                   soft_targets: np.ndarray | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Masked summed cross-entropy and its gradient with respect to every parameter.

    With ``soft_targets`` (N, K, 2) the loss is -sum_c t_c ln max(p_c, eps) per
    present head instead of the hard-label form.
    """
    X = _as_input(model, X)
    n = X.shape[0]
    labels, mask = _check_targets(model, n, labels, mask)
    inputs, pre = _encode(model, X)
    hidden = inputs[-1]
    probs = _softmax(_head_logits(model, hidden))
    clamped = probs < epsilon

    if soft_targets is None:
        targets = np.zeros_like(probs)
        np.put_along_axis(targets, labels[..., None], 1.0, axis=-1)
    else:
        targets = np.asarray(soft_targets, dtype=np.float64)
    targets = targets * mask[..., None]

    per_class = -targets * np.log(np.maximum(probs, epsilon))
    loss = float(per_class.sum(axis=(1, 2)).mean())

    # d/dlogit_j of -sum_c t_c ln p_c is p_j * sum_c t_c - t_j; clamped classes contribute no gradient.
    live_t = np.where(clamped, 0.0, targets)
    dlogits = (probs * live_t.sum(axis=-1, keepdims=True) - live_t) / n

    grads: dict[str, np.ndarray] = {}
    grads["Wh"] = np.einsum("nh,nkc->khc", hidden, dlogits)
    grads["bh"] = dlogits.sum(axis=0)
    dh = np.einsum("nkc,khc->nh", dlogits, model.params["Wh"])
    for layer in reversed(range(model.n_layers)):
        dz = dh * (pre[layer] > 0)
        a_in = inputs[layer]
        grads[f"W{layer}"] = np.asarray(a_in.T @ dz)
        grads[f"b{layer}"] = dz.sum(axis=0)
        if layer:
            dh = dz @ model.params[f"W{layer}"].T
    return loss, grads


# --------------------------------------------------------------------------- optimizer


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, t: int,
              hyper: AdamHyper) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update.  Returns new params and state; inputs are not mutated."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    new_params, new_m, new_v = {}, {}, {}
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = p
            continue
        m = hyper.beta1 * state.m.get(name, 0.0) + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v.get(name, 0.0) + (1.0 - hyper.beta2) * g * g
        new_m[name], new_v[name] = m, v
        new_params[name] = p - hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return new_params, AdamState(new_m, new_v, t)
