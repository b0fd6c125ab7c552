"""Turning per-annotator head outputs into hard and soft instance predictions."""

from __future__ import annotations

import numpy as np

MODES = ("unconstrained", "constrained")
AGGREGATIONS = ("argmax-count", "mean-prob")


def with_fallback(head_probs: np.ndarray, trained_heads: np.ndarray) -> np.ndarray:
    """Replace heads that never saw a training label by the mean of the trained heads."""
    trained_heads = np.asarray(trained_heads, dtype=bool)
    if trained_heads.all():
        return head_probs
    if not trained_heads.any():
        raise ValueError("no trained heads to build the fallback distribution from")
    fallback = head_probs[:, trained_heads, :].mean(axis=1, keepdims=True)
    out = head_probs.copy()
    out[:, ~trained_heads, :] = fallback
    return out


def select_heads(mode: str, n: int, k: int, annotation_mask: np.ndarray | None) -> np.ndarray:
    if mode == "unconstrained":
        return np.ones((n, k), dtype=bool)
    if mode != "constrained":
        raise ValueError(f"unknown prediction mode {mode!r}")
    if annotation_mask is None:
        raise ValueError("constrained prediction needs the instances' annotators")
    selected = np.asarray(annotation_mask, dtype=bool)
    if selected.shape != (n, k):
        raise ValueError(f"annotation mask {selected.shape} does not match ({n}, {k})")
    empty = np.flatnonzero(~selected.any(axis=1))
    if empty.size:
        raise ValueError(f"constrained prediction: instance #{empty[0]} has no resolvable annotators")
    return selected


def aggregate(head_probs: np.ndarray, selected: np.ndarray, aggregation: str = "argmax-count",
              tie_break: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mode of the selected heads' argmaxes plus a soft label.

    Returns ``(hard (N,), tie (N,), soft (N, 2))``.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    votes = np.argmax(head_probs, axis=-1)
    total = selected.sum(axis=1)
    ones = (votes * selected).sum(axis=1)
    zeros = total - ones
    tie = ones == zeros
    hard = np.where(tie, tie_break, (ones > zeros).astype(np.int64))
    if aggregation == "argmax-count":
        p1 = ones / total
    else:
        p1 = (head_probs[..., 1] * selected).sum(axis=1) / total
    soft = np.stack([1.0 - p1, p1], axis=1)
    return hard.astype(np.int64), tie, soft
