import itertools
import json
from pathlib import Path

import numpy as np
import pytest

from perspectivist.corpus import AnnotationMatrix
from perspectivist.synthgen import GenConfig, generate_dataset, generate_population


def brute_force_alpha(values: np.ndarray, mask: np.ndarray) -> float:
    """Nominal alpha by enumerating every ordered pair of distinct slots within each unit."""
    pair_weight = {}
    for row, present in zip(values, mask):
        labels = [int(v) for v, p in zip(row, present) if p]
        m = len(labels)
        if m < 2:
            continue
        for i, j in itertools.permutations(range(m), 2):
            key = (labels[i], labels[j])
            pair_weight[key] = pair_weight.get(key, 0.0) + 1.0 / (m - 1)
    n = sum(pair_weight.values())
    n_c = {c: sum(w for (a, _), w in pair_weight.items() if a == c) for c in (0, 1)}
    observed = sum(w for (a, b), w in pair_weight.items() if a != b)
    if observed == 0:
        return 1.0
    expected = sum(n_c[a] * n_c[b] for a in (0, 1) for b in (0, 1) if a != b) / (n - 1)
    return 1.0 - observed / expected


def matrix(rows) -> AnnotationMatrix:
    """Build a matrix from rows where None marks a missing annotation."""
    values = np.array([[0 if v is None else v for v in r] for r in rows], dtype=np.int8)
    mask = np.array([[v is not None for v in r] for r in rows], dtype=bool)
    return AnnotationMatrix(values, mask)


def write_split(directory: Path, split: str, records) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{split}.json").write_text(json.dumps(records), encoding="utf-8")


@pytest.fixture(scope="session")
def small_synth():
    cfg = GenConfig(num_instances=200, vocab_size=20, num_annotators=3, num_clusters=3,
                    annotators_per_instance=3, flip_rate=0.0, min_margin=0.05, seed=3)
    pop = generate_population(cfg)
    return cfg, pop, generate_dataset(pop, cfg)


@pytest.fixture(scope="session")
def sparse_synth():
    cfg = GenConfig(num_instances=300, vocab_size=20, num_annotators=12, num_clusters=3,
                    annotators_per_instance=3, unseen_fraction=0.5, participation="powerlaw",
                    flip_rate=0.05, seed=5)
    pop = generate_population(cfg)
    return cfg, pop, generate_dataset(pop, cfg)
