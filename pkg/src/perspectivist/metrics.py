"""Evaluation metrics: micro-F1, soft-label and individual cross-entropy, Krippendorff's alpha."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import AnnotationMatrix

EPSILON = 1e-12


def _as_soft(labels) -> np.ndarray:
    """Coerce a sequence of SoftLabels / pairs into an (N, 2) float array."""
    if isinstance(labels, np.ndarray):
        arr = labels.astype(np.float64, copy=False)
    else:
        arr = np.array([lab.as_tuple() if hasattr(lab, "as_tuple") else tuple(lab) for lab in labels],
                       dtype=np.float64)
    return arr.reshape(-1, 2)


# --------------------------------------------------------------------------- agreement


@dataclass(frozen=True)
class CoincidenceMatrix:
    counts: np.ndarray  # 2x2, o[c, k]

    @property
    def marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def coincidence_matrix(matrix: AnnotationMatrix) -> CoincidenceMatrix:
    """Each unit with m >= 2 values adds, per ordered pair of distinct slots, 1/(m-1)."""
    o = np.zeros((2, 2), dtype=np.float64)
    for row, mask in matrix.rows():
        present = row[mask]
        m = present.size
        if m < 2:
            continue
        n1 = int(np.count_nonzero(present == 1))
        n0 = m - n1
        o[0, 0] += n0 * (n0 - 1) / (m - 1)
        o[1, 1] += n1 * (n1 - 1) / (m - 1)
        o[0, 1] += n0 * n1 / (m - 1)
        o[1, 0] += n0 * n1 / (m - 1)
    return CoincidenceMatrix(o)


def krippendorff_alpha_nominal(matrix: AnnotationMatrix) -> float:
    cm = coincidence_matrix(matrix)
    n = cm.total
    if n == 0:
        raise ValueError("Krippendorff's alpha needs at least one unit with two or more annotations")
    o = cm.counts
    disagree_obs = (o[0, 1] + o[1, 0]) / n
    if disagree_obs == 0:
        return 1.0
    nc = cm.marginals
    disagree_exp = 2.0 * nc[0] * nc[1] / (n * (n - 1))
    return 1.0 - disagree_obs / disagree_exp


# --------------------------------------------------------------------------- task metrics


def micro_f1(predictions: Sequence[int], golds: Sequence[int]) -> float:
    """Micro-averaged F1 over both classes.

    With exactly one predicted and one gold label per item, every false positive
    for one class is a false negative for the other, so micro precision, recall
    and F1 all collapse to plain accuracy.
    """
    pred = np.asarray(predictions).ravel()
    gold = np.asarray(golds).ravel()
    if pred.size != gold.size:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {gold.size} golds")
    if pred.size == 0:
        raise ValueError("micro_f1 of an empty sequence")
    tp = fp = fn = 0
    for c in (0, 1):
        tp += int(np.count_nonzero((pred == c) & (gold == c)))
        fp += int(np.count_nonzero((pred == c) & (gold != c)))
        fn += int(np.count_nonzero((pred != c) & (gold == c)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def soft_cross_entropy(pred, gold, epsilon: float = EPSILON) -> float:
    p = _as_soft(pred)
    t = _as_soft(gold)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} predictions vs {t.shape[0]} golds")
    if p.shape[0] == 0:
        raise ValueError("soft_cross_entropy of an empty sequence")
    per_item = -(t * np.log(np.maximum(p, epsilon))).sum(axis=1)
    return float(per_item.mean())


def _check_heads(head_probs: np.ndarray, matrix: AnnotationMatrix) -> np.ndarray:
    probs = np.asarray(head_probs, dtype=np.float64)
    if probs.ndim == 2:
        probs = np.stack([1.0 - probs, probs], axis=-1) if probs.shape == matrix.shape else probs
    if probs.shape != (*matrix.shape, 2):
        raise ValueError(f"head probabilities {probs.shape} do not match annotation matrix {matrix.shape}")
    return probs


def individual_cross_entropy(head_probs, matrix: AnnotationMatrix, epsilon: float = EPSILON) -> float:
    """Mean over instances of the summed per-annotator CE, ignoring absent annotations.

    ``head_probs`` is (N, K, 2), or (N, K) holding p(1).
    """
    probs = _check_heads(head_probs, matrix)
    if matrix.shape[0] == 0:
        raise ValueError("individual_cross_entropy of an empty matrix")
    labels = matrix.values.astype(np.int64) * matrix.mask
    p_true = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    nll = np.where(matrix.mask, -np.log(np.maximum(p_true, epsilon)), 0.0)
    return float(nll.sum(axis=1).mean())


def per_annotator_accuracy(head_argmax, matrix: AnnotationMatrix, annotator_ids: Sequence[str]) -> dict[str, float]:
    pred = np.asarray(head_argmax)
    if pred.shape != matrix.shape:
        raise ValueError(f"head predictions {pred.shape} do not match annotation matrix {matrix.shape}")
    if len(annotator_ids) != matrix.shape[1]:
        raise ValueError("annotator id list does not match the number of columns")
    out = {}
    for k, ann in enumerate(annotator_ids):
        present = matrix.mask[:, k]
        n = int(present.sum())
        if n:
            out[ann] = float(np.count_nonzero(pred[present, k] == matrix.values[present, k]) / n)
    return out


# --------------------------------------------------------------------------- reports


@dataclass
class EvalReport:
    micro_f1: float
    soft_ce: float
    individual_ce: float
    per_annotator_accuracy: dict[str, float]
    n_evaluated: int
    extra: dict[str, object] = field(default_factory=dict)

    def to_flat(self) -> dict[str, object]:
        flat: dict[str, object] = {
            "micro_f1": self.micro_f1,
            "soft_ce": self.soft_ce,
            "individual_ce": self.individual_ce,
        }
        for ann in sorted(self.per_annotator_accuracy):
            flat[f"per_annotator_accuracy.{ann}"] = self.per_annotator_accuracy[ann]
        flat["n_evaluated"] = self.n_evaluated
        flat.update(self.extra)
        return flat

    @classmethod
    def from_flat(cls, flat: Mapping[str, str]) -> "EvalReport":
        prefix = "per_annotator_accuracy."
        known = {"micro_f1", "soft_ce", "individual_ce", "n_evaluated"}
        return cls(
            micro_f1=float(flat["micro_f1"]),
            soft_ce=float(flat["soft_ce"]),
            individual_ce=float(flat["individual_ce"]),
            per_annotator_accuracy={k[len(prefix):]: float(v) for k, v in flat.items() if k.startswith(prefix)},
            n_evaluated=int(flat["n_evaluated"]),
            extra={k: v for k, v in flat.items() if k not in known and not k.startswith(prefix)},
        )


def evaluate(
    pred_hard: np.ndarray,
    pred_soft: np.ndarray,
    head_probs: np.ndarray,
    matrix: AnnotationMatrix,
    annotator_ids: Sequence[str],
    gold_hard: np.ndarray,
    gold_soft: np.ndarray,
    epsilon: float = EPSILON,
) -> EvalReport:
    """Score one split.  ``head_probs`` is (N, K, 2): each annotator's predicted distribution."""
    head_probs = _check_heads(head_probs, matrix)
    return EvalReport(
        micro_f1=micro_f1(pred_hard, gold_hard),
        soft_ce=soft_cross_entropy(pred_soft, gold_soft, epsilon),
        individual_ce=individual_cross_entropy(head_probs, matrix, epsilon),
        per_annotator_accuracy=per_annotator_accuracy(np.argmax(head_probs, axis=-1), matrix, annotator_ids),
        n_evaluated=int(matrix.shape[0]),
    )


def entropy(dist) -> float:
    t = _as_soft(dist)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(t > 0, -t * np.log(t), 0.0)
    return float(terms.sum(axis=1).mean())


def max_soft_ce(epsilon: float = EPSILON) -> float:
    return -math.log(epsilon)
