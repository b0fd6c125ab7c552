"""Synthetic disaggregated-annotation datasets with known annotator behaviour.

Annotators belong to perspective clusters.  A cluster labels an instance 1 when
its weight vector has a positive dot product with the instance's L2-normalized
term-frequency vector; each annotator then flips the cluster's answer with its
own flip rate.  Because the rules are known, every instance has an exact
expected soft label to compare models against.
"""

from __future__ import annotations

import dataclasses
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .corpus import SPLITS, Dataset, Instance, SoftLabel, build_dataset
from .features import tokenize

PARTICIPATION = ("uniform", "powerlaw")


@dataclass(frozen=True)
class GenConfig:
    num_instances: int = 1000
    vocab_size: int = 50
    num_annotators: int = 3
    num_clusters: int = 3
    annotators_per_instance: int = 3
    unseen_fraction: float = 0.0
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    flip_rate: float = 0.05
    participation: str = "uniform"
    powerlaw_exponent: float = 1.0
    min_length: int = 10
    max_length: int = 30
    topic_concentration: float = 0.1
    min_margin: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_instances < 1 or self.vocab_size < 2 or self.num_annotators < 1:
            raise ValueError("num_instances, vocab_size and num_annotators must be positive (vocab_size >= 2)")
        if not 1 <= self.num_clusters:
            raise ValueError("num_clusters must be >= 1")
        if self.num_clusters > self.num_annotators:
            raise ValueError(f"num_clusters ({self.num_clusters}) exceeds num_annotators ({self.num_annotators})")
        if self.num_clusters >= self.vocab_size:
            raise ValueError("num_clusters must be smaller than vocab_size")
        if not 1 <= self.annotators_per_instance <= self.num_annotators:
            raise ValueError(f"annotators_per_instance must lie in [1, {self.num_annotators}]")
        if not 0.0 <= self.unseen_fraction <= 1.0:
            raise ValueError("unseen_fraction must lie in [0, 1]")
        if len(self.split_fractions) != 3 or min(self.split_fractions) < 0 \
                or not math.isclose(sum(self.split_fractions), 1.0, abs_tol=1e-9):
            raise ValueError("split_fractions must be three non-negative numbers summing to 1")
        if not 0.0 <= self.flip_rate < 0.5:
            raise ValueError("flip_rate must lie in [0, 0.5)")
        if self.participation not in PARTICIPATION:
            raise ValueError(f"participation must be one of {PARTICIPATION}")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")
        if not self.topic_concentration > 0:
            raise ValueError("topic_concentration must be positive")
        if not 0.0 <= self.min_margin < 0.5:
            raise ValueError("min_margin must lie in [0, 0.5)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d


@dataclass(frozen=True)
class AnnotatorSpec:
    id: str
    cluster: int
    weights: np.ndarray
    flip_rate: float

    def rule(self, tf: np.ndarray) -> int:
        return int(self.weights @ tf > 0)


@dataclass(frozen=True)
class Population:
    annotators: tuple[AnnotatorSpec, ...]
    cluster_weights: np.ndarray
    tokens: tuple[str, ...]

    def __iter__(self) -> Iterator[AnnotatorSpec]:
        return iter(self.annotators)

    def __len__(self) -> int:
        return len(self.annotators)

    def __getitem__(self, i: int) -> AnnotatorSpec:
        return self.annotators[i]

    def by_id(self) -> dict[str, AnnotatorSpec]:
        return {a.id: a for a in self.annotators}

    def term_frequencies(self, text: str) -> np.ndarray:
        index = {t: i for i, t in enumerate(self.tokens)}
        tf = np.zeros(len(self.tokens))
        for tok, count in Counter(tokenize(text)).items():
            if tok not in index:
                raise ValueError(f"token {tok!r} is not in the generator vocabulary")
            tf[index[tok]] = count
        norm = np.linalg.norm(tf)
        return tf / norm if norm else tf


def _ids(prefix: str, n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def generate_population(cfg: GenConfig) -> Population:
    """Orthonormal zero-mean cluster rules; annotator i joins cluster i mod C."""
    if cfg.num_clusters > cfg.num_annotators:
        raise ValueError("more clusters than annotators")
    rng = np.random.default_rng([cfg.seed, 1])
    raw = rng.standard_normal((cfg.num_clusters, cfg.vocab_size))
    raw -= raw.mean(axis=1, keepdims=True)
    # QR on the transpose orthonormalizes the rows; zero-mean is preserved
    q, r = np.linalg.qr(raw.T)
    weights = (q * np.sign(np.diag(r))).T
    weights.setflags(write=False)
    annotators = tuple(
        AnnotatorSpec(ann, i % cfg.num_clusters, weights[i % cfg.num_clusters], cfg.flip_rate)
        for i, ann in enumerate(_ids("a", cfg.num_annotators))
    )
    return Population(annotators, weights, tuple(_ids("w", cfg.vocab_size)))


def _split_sizes(cfg: GenConfig) -> dict[str, int]:
    n_train = round(cfg.num_instances * cfg.split_fractions[0])
    n_dev = round(cfg.num_instances * cfg.split_fractions[1])
    return {"train": n_train, "dev": n_dev, "test": cfg.num_instances - n_train - n_dev}


def _participation_weights(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    k = cfg.num_annotators
    if cfg.participation == "uniform":
        return np.ones(k)
    ranks = rng.permutation(k) + 1
    return ranks.astype(np.float64) ** (-cfg.powerlaw_exponent)


def _assign(n: int, m: int, eligible: np.ndarray, required: np.ndarray, weights: np.ndarray,
            rng: np.random.Generator, split: str) -> list[list[int]]:
    """Pick m annotators per instance so that every required annotator appears at least once."""
    if m > eligible.size:
        raise ValueError(f"{split}: {m} annotators per instance but only {eligible.size} eligible")
    if required.size > n * m:
        raise ValueError(f"{split}: {required.size} annotators must appear but only {n * m} slots exist")
    chosen: list[list[int]] = [[] for _ in range(n)]
    for j, a in enumerate(rng.permutation(required)):
        chosen[j % n].append(int(a))
    for row in chosen:
        need = m - len(row)
        if need:
            pool = np.setdiff1d(eligible, row)
            p = weights[pool] / weights[pool].sum()
            row.extend(int(a) for a in rng.choice(pool, size=need, replace=False, p=p))
    return chosen


def _draw_text(population: Population, cfg: GenConfig, rng: np.random.Generator,
               max_tries: int = 10_000) -> tuple[str, np.ndarray]:
    """Sample a text; with ``min_margin`` texts too close to any cluster boundary are redrawn."""
    for _ in range(max_tries):
        length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        # per-document token distribution; small concentrations give topical texts
        topic = rng.dirichlet(np.full(cfg.vocab_size, cfg.topic_concentration))
        token_ids = rng.choice(cfg.vocab_size, size=length, p=topic)
        text = " ".join(population.tokens[t] for t in token_ids)
        counts = np.bincount(token_ids, minlength=cfg.vocab_size).astype(np.float64)
        tf = counts / np.linalg.norm(counts)
        if cfg.min_margin == 0.0 or np.abs(population.cluster_weights @ tf).min() >= cfg.min_margin:
            return text, tf
    raise ValueError(f"no text with margin >= {cfg.min_margin} after {max_tries} draws")


def generate_dataset(population: Population, cfg: GenConfig) -> Dataset:
    rng = np.random.default_rng([cfg.seed, 2])
    k, m = cfg.num_annotators, cfg.annotators_per_instance
    if len(population) != k:
        raise ValueError("population size does not match num_annotators")
    sizes = _split_sizes(cfg)
    present_splits = [s for s in SPLITS if sizes[s] > 0]

    n_unseen = round(cfg.unseen_fraction * k)
    if n_unseen and len(present_splits) < 2:
        raise ValueError("unseen annotators need at least two non-empty splits")
    unseen = rng.choice(k, size=n_unseen, replace=False)
    excluded_from = {int(a): present_splits[int(rng.integers(len(present_splits)))] for a in unseen}
    weights = _participation_weights(cfg, rng)

    splits: dict[str, list[Instance]] = {}
    counter = 0
    for split in SPLITS:
        n = sizes[split]
        eligible = np.array([a for a in range(k) if excluded_from.get(a) != split], dtype=np.int64)
        required = np.array([a for a in eligible if a not in excluded_from], dtype=np.int64)
        chosen = _assign(n, m, eligible, required, weights, rng, split) if n else []
        instances = []
        for row in chosen:
            text, tf = _draw_text(population, cfg, rng)
            annotations = {}
            for a in sorted(row):
                spec = population[a]
                label = spec.rule(tf)
                if rng.random() < spec.flip_rate:
                    label = 1 - label
                annotations[spec.id] = label
            instances.append(Instance(f"s{counter:06d}", text, dict(sorted(annotations.items())), split))
            counter += 1
        splits[split] = instances
    return build_dataset(splits, {"generator": cfg.to_dict()})


def oracle_soft_label(population: Population, instance: Instance,
                      annotator_ids: Sequence[str] | None = None) -> SoftLabel:
    """Expected annotation distribution over the instance's annotators (or ``annotator_ids``)."""
    specs = population.by_id()
    ids = list(instance.annotations) if annotator_ids is None else list(annotator_ids)
    if not ids:
        raise ValueError(f"instance {instance.id!r} has no annotators")
    tf = population.term_frequencies(instance.text)
    p1 = 0.0
    for ann in ids:
        if ann not in specs:
            raise ValueError(f"annotator {ann!r} is not in the population")
        spec = specs[ann]
        p1 += (1.0 - spec.flip_rate) if spec.rule(tf) else spec.flip_rate
    return SoftLabel.from_p1(p1 / len(ids))


def oracle_soft_labels(population: Population, instances: Sequence[Instance]) -> np.ndarray:
    return np.array([oracle_soft_label(population, inst).as_tuple() for inst in instances])
