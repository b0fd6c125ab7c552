"""Mini-batch Adam training with best-dev-checkpoint selection and early stopping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..corpus import AnnotationMatrix, Dataset, Instance, annotation_matrix, gold_labels
from ..features import Vocabulary, build_vocabulary, featurize, tokenize
from ..metrics import EPSILON, micro_f1, soft_cross_entropy
from .network import AdamHyper, AdamState, EncoderConfig, MultiTaskModel, adam_step, forward, init_model, loss_and_grads
from .predict import aggregate, select_heads, with_fallback
from .svm import SvmModel, svm_predict, svm_train

log = logging.getLogger(__name__)

MODEL_KINDS = ("multitask", "singletask", "svm")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 40
    epsilon: float = EPSILON
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    hidden_dims: tuple[int, ...] = (768,)
    # how dev soft labels are derived for checkpoint selection
    mode: str = "unconstrained"
    aggregation: str = "argmax-count"
    singletask_target: str = "hard"
    tie_break: int = 0
    min_df: int = 1
    svm_lambda: float = 1e-4
    svm_epochs: int = 50

    def __post_init__(self):
        positive = {
            "lr": self.lr, "batch_size": self.batch_size, "max_epochs": self.max_epochs,
            "patience": self.patience, "epsilon": self.epsilon, "adam_epsilon": self.adam_epsilon,
            "svm_lambda": self.svm_lambda, "svm_epochs": self.svm_epochs, "min_df": self.min_df,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.singletask_target not in ("hard", "soft"):
            raise ValueError(f"singletask_target must be 'hard' or 'soft', got {self.singletask_target!r}")


@dataclass
class Features:
    """Featurized splits: TF-IDF matrices, annotation matrices and gold labels."""

    vocab: Vocabulary
    annotator_ids: tuple[str, ...]
    X: dict[str, sp.csr_matrix]
    matrices: dict[str, AnnotationMatrix]
    gold_hard: dict[str, np.ndarray]
    gold_soft: dict[str, np.ndarray]


def prepare_features(dataset: Dataset, min_df: int = 1, tie_break: int = 0, kind: str = "tfidf") -> Features:
    train = dataset.split("train")
    if not train:
        raise ValueError("train split is empty")
    vocab = build_vocabulary([tokenize(i.text) for i in train], min_df)
    X, matrices, hard, soft = {}, {}, {}, {}
    for name, instances in dataset.splits.items():
        X[name] = featurize([i.text for i in instances], vocab, kind)
        matrices[name] = annotation_matrix(instances, dataset.registry)
        annotated = matrices[name].mask.any(axis=1).all()
        if annotated and instances:
            hard[name], soft[name] = gold_labels(matrices[name], tie_break)
    return Features(vocab, dataset.registry.annotator_ids, X, matrices, hard, soft)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_soft_ce: float
    dev_f1: float


@dataclass
class TrainedModel:
    kind: str
    annotator_ids: tuple[str, ...]
    vocab: Vocabulary
    config: TrainConfig
    network: MultiTaskModel | None = None
    svm: SvmModel | None = None
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopping_epoch: int = 0

    @property
    def n_annotators(self) -> int:
        return len(self.annotator_ids)


def head_distributions(trained: TrainedModel, X) -> np.ndarray:
    """(N, K, 2): each registry annotator's predicted label distribution.

    Single-label models (single-task, SVM) predict the same distribution for every annotator.
    """
    if trained.kind == "svm":
        _, soft = svm_predict(trained.svm, X)
        probs = soft[:, None, :]
    else:
        probs = with_fallback(forward(trained.network, X), trained.network.trained_heads)
    if probs.shape[1] == 1 and trained.n_annotators != 1:
        probs = np.broadcast_to(probs, (probs.shape[0], trained.n_annotators, 2))
    return probs


def predict_arrays(trained: TrainedModel, X, annotation_mask: np.ndarray | None = None,
                   mode: str = "unconstrained", aggregation: str = "argmax-count",
                   tie_break: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batch prediction.  Returns ``(hard, tie, soft, head_probs)``."""
    head_probs = head_distributions(trained, X)
    n, k, _ = head_probs.shape
    if trained.kind == "svm":
        hard, soft = svm_predict(trained.svm, X)
        select_heads(mode, n, k, annotation_mask)  # same precondition checks as the neural models
        return hard, np.zeros(n, dtype=bool), soft, head_probs
    if trained.kind == "singletask":
        # one head; its distribution is the soft label whatever the aggregation setting
        aggregation = "mean-prob"
        selected = np.ones((n, 1), dtype=bool)
        select_heads(mode, n, k, annotation_mask)
        hard, tie, soft = aggregate(head_probs[:, :1], selected, aggregation, tie_break)
        return hard, tie, soft, head_probs
    selected = select_heads(mode, n, k, annotation_mask)
    hard, tie, soft = aggregate(head_probs, selected, aggregation, tie_break)
    return hard, tie, soft, head_probs


def _instance_inputs(trained: TrainedModel, instance: Instance):
    X = featurize([instance.text], trained.vocab)
    index = {a: i for i, a in enumerate(trained.annotator_ids)}
    mask = np.zeros((1, trained.n_annotators), dtype=bool)
    for ann in instance.annotations:
        if ann not in index:
            raise ValueError(f"annotator {ann!r} is not in the model's registry")
        mask[0, index[ann]] = True
    return X, mask


def predict_hard(trained: TrainedModel, instance: Instance, mode: str = "unconstrained", tie_break: int = 0):
    from ..corpus import HardLabel

    X, mask = _instance_inputs(trained, instance)
    hard, tie, _, _ = predict_arrays(trained, X, mask, mode, "argmax-count", tie_break)
    return HardLabel(int(hard[0]), bool(tie[0]))


def predict_soft(trained: TrainedModel, instance: Instance, mode: str = "unconstrained",
                 aggregation: str = "argmax-count"):
    from ..corpus import SoftLabel

    X, mask = _instance_inputs(trained, instance)
    _, _, soft, _ = predict_arrays(trained, X, mask, mode, aggregation)
    return SoftLabel(float(soft[0, 0]), float(soft[0, 1]))


# --------------------------------------------------------------------------- training


def _targets(kind: str, feats: Features, split: str, cfg: TrainConfig):
    """Labels, mask and optional soft targets for the network being trained."""
    matrix = feats.matrices[split]
    if kind == "multitask":
        return matrix.values.astype(np.int64), matrix.mask, None
    labels = feats.gold_hard[split][:, None]
    mask = np.ones_like(labels, dtype=bool)
    soft = feats.gold_soft[split][:, None, :] if cfg.singletask_target == "soft" else None
    return labels, mask, soft


def _dev_scores(trained: TrainedModel, feats: Features, cfg: TrainConfig) -> tuple[float, float]:
    hard, _, soft, _ = predict_arrays(trained, feats.X["dev"], feats.matrices["dev"].mask,
                                      cfg.mode, cfg.aggregation, cfg.tie_break)
    return (soft_cross_entropy(soft, feats.gold_soft["dev"], cfg.epsilon),
            micro_f1(hard, feats.gold_hard["dev"]))


def _check_splits(feats: Features):
    for split in ("train", "dev"):
        if split not in feats.X or feats.X[split].shape[0] == 0:
            raise ValueError(f"training needs a non-empty {split} split")
        if split not in feats.gold_hard:
            raise ValueError(f"every {split} instance needs at least one annotation")


def train(kind: str, feats: Features, cfg: TrainConfig) -> TrainedModel:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    _check_splits(feats)
    if kind == "svm":
        return train_svm(feats, cfg)

    n_heads = len(feats.annotator_ids) if kind == "multitask" else 1
    enc = EncoderConfig(len(feats.vocab), tuple(cfg.hidden_dims))
    model = init_model(enc, n_heads, cfg.seed)
    if kind == "multitask":
        model.trained_heads = feats.matrices["train"].mask.any(axis=0)
    trained = TrainedModel(kind, feats.annotator_ids, feats.vocab, cfg, network=model)

    X = feats.X["train"]
    labels, mask, soft = _targets(kind, feats, "train", cfg)
    n = X.shape[0]
    hyper = AdamHyper(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    state = AdamState()
    rng = np.random.default_rng([cfg.seed, 1])
    step = 0
    best_ce, best_params, since_best = np.inf, None, 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_soft = soft[idx] if soft is not None else None
            loss, grads = loss_and_grads(model, X[idx], labels[idx], mask[idx], cfg.epsilon, batch_soft)
            step += 1
            model.params, state = adam_step(model.params, grads, state, step, hyper)
            total += loss * idx.size
        dev_ce, dev_f1 = _dev_scores(trained, feats, cfg)
        trained.history.append(EpochRecord(epoch, total / n, dev_ce, dev_f1))
        log.debug("epoch %d train %.5f dev_ce %.5f dev_f1 %.4f", epoch, total / n, dev_ce, dev_f1)
        if dev_ce < best_ce:
            best_ce, since_best = dev_ce, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
            trained.best_epoch = epoch
        else:
            since_best += 1
        trained.stopping_epoch = epoch
        if since_best >= cfg.patience:
            break

    model.params = best_params
    return trained


def train_svm(feats: Features, cfg: TrainConfig) -> TrainedModel:
    """Pegasos on train hard labels; Platt parameters fit to dev soft labels."""
    svm = svm_train(feats.X["train"], feats.gold_hard["train"], cfg.svm_lambda, cfg.svm_epochs, cfg.seed,
                    calib_X=feats.X["dev"], calib_targets=feats.gold_soft["dev"][:, 1])
    trained = TrainedModel("svm", feats.annotator_ids, feats.vocab, cfg, svm=svm)
    dev_ce, dev_f1 = _dev_scores(trained, feats, cfg)
    train_loss = soft_cross_entropy(svm_predict(svm, feats.X["train"])[1], feats.gold_soft["train"], cfg.epsilon)
    trained.history.append(EpochRecord(cfg.svm_epochs, train_loss, dev_ce, dev_f1))
    trained.best_epoch = trained.stopping_epoch = cfg.svm_epochs
    return trained
