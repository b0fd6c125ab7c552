import numpy as np
import pytest

from perspectivist.corpus import Instance, dataset_stats, derive_soft_label, save_dataset
from perspectivist.metrics import krippendorff_alpha_nominal
from perspectivist.synthgen import (
    GenConfig,
    generate_dataset,
    generate_population,
    oracle_soft_label,
    oracle_soft_labels,
)


def test_population_shapes():
    pop = generate_population(GenConfig(num_annotators=6, num_clusters=2))
    clusters = [a.cluster for a in pop]
    assert clusters.count(0) == 3 and clusters.count(1) == 3
    assert [a.id for a in pop] == ["a000", "a001", "a002", "a003", "a004", "a005"]
    assert len(generate_population(GenConfig(num_annotators=3, num_clusters=3)).cluster_weights) == 3


def test_cluster_rules_orthonormal():
    pop = generate_population(GenConfig(vocab_size=30, num_annotators=4, num_clusters=4))
    W = pop.cluster_weights
    np.testing.assert_allclose(W @ W.T, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), 0.0, atol=1e-12)


def test_population_determinism():
    a, b = generate_population(GenConfig(seed=4)), generate_population(GenConfig(seed=4))
    np.testing.assert_array_equal(a.cluster_weights, b.cluster_weights)
    assert not np.array_equal(a.cluster_weights, generate_population(GenConfig(seed=5)).cluster_weights)


def test_config_errors():
    with pytest.raises(ValueError, match="num_clusters"):
        GenConfig(num_annotators=2, num_clusters=3)
    with pytest.raises(ValueError, match="annotators_per_instance"):
        GenConfig(num_annotators=3, annotators_per_instance=4)
    with pytest.raises(ValueError):
        GenConfig(flip_rate=0.6)
    with pytest.raises(ValueError):
        GenConfig(split_fractions=(0.5, 0.5, 0.5))


def test_dataset_determinism(tmp_path):
    cfg = GenConfig(num_instances=60, num_annotators=8, annotators_per_instance=3, unseen_fraction=0.25,
                    participation="powerlaw", seed=9)
    for name in ("a", "b"):
        save_dataset(generate_dataset(generate_population(cfg), cfg), tmp_path / name)
    for split in ("train", "dev", "test"):
        assert (tmp_path / "a" / f"{split}.json").read_bytes() == (tmp_path / "b" / f"{split}.json").read_bytes()


def test_noise_free_full_annotation_matches_oracle(small_synth):
    _, pop, ds = small_synth
    for split, instances in ds.splits.items():
        m = ds.matrix(split)
        oracle = oracle_soft_labels(pop, instances)
        for (row, mask), expected in zip(m.rows(), oracle):
            assert derive_soft_label(row, mask).as_tuple() == tuple(expected)


def test_unseen_fraction_reported():
    cfg = GenConfig(num_instances=1000, vocab_size=20, num_annotators=100, num_clusters=3,
                    annotators_per_instance=5, unseen_fraction=0.91, seed=1)
    ds = generate_dataset(generate_population(cfg), cfg)
    assert dataset_stats(ds).unseen_pct == pytest.approx(91.0, abs=1.0)


def test_unseen_zero_means_everyone_everywhere():
    cfg = GenConfig(num_instances=100, num_annotators=6, annotators_per_instance=2, seed=2)
    ds = generate_dataset(generate_population(cfg), cfg)
    assert all(len(s) == 3 for s in ds.registry.seen_in_splits.values())


def test_single_cluster_is_unanimous():
    cfg = GenConfig(num_instances=100, num_annotators=4, num_clusters=1, annotators_per_instance=4,
                    flip_rate=0.0, seed=6)
    ds = generate_dataset(generate_population(cfg), cfg)
    assert krippendorff_alpha_nominal(ds.matrix("train")) == 1.0


def test_alpha_decreases_with_flip_rate():
    means = []
    for flip in (0.0, 0.1, 0.3):
        alphas = []
        for seed in (0, 1, 2):
            cfg = GenConfig(num_instances=400, vocab_size=20, num_annotators=6, num_clusters=2,
                            annotators_per_instance=6, flip_rate=flip, seed=seed)
            alphas.append(krippendorff_alpha_nominal(generate_dataset(generate_population(cfg), cfg).matrix("train")))
        means.append(np.mean(alphas))
    assert means[0] > means[1] > means[2]


def test_power_law_participation_is_skewed(sparse_synth):
    flat = dataset_stats(sparse_synth[2]).to_flat()
    assert flat["instances_per_annotator.max"] > 2 * flat["instances_per_annotator.min"]


class TestOracle:
    def pop(self, flip):
        return generate_population(GenConfig(vocab_size=10, num_annotators=3, num_clusters=3, flip_rate=flip))

    def find_text(self, pop, want):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            text = " ".join(rng.choice(pop.tokens, size=6))
            tf = pop.term_frequencies(text)
            if [a.rule(tf) for a in pop] == want:
                return text
        raise AssertionError("no text with the requested rule outputs")

    def test_deterministic_votes(self):
        pop = self.pop(0.0)
        inst = Instance("x", self.find_text(pop, [1, 1, 0]), {"a000": 1, "a001": 1, "a002": 0}, "test")
        assert oracle_soft_label(pop, inst).as_tuple() == pytest.approx((1 / 3, 2 / 3), abs=1e-15)

    def test_single_flipping_annotator(self):
        pop = self.pop(0.2)
        text = self.find_text(pop, [1, 0, 0])
        soft = oracle_soft_label(pop, Instance("x", text, {"a000": 1}, "test"))
        assert soft.as_tuple() == pytest.approx((0.2, 0.8), abs=1e-15)

    def test_two_annotators_monte_carlo(self):
        pop = self.pop(0.1)
        text = self.find_text(pop, [1, 0, 1])
        inst = Instance("x", text, {"a000": 1, "a001": 0}, "test")
        expected = oracle_soft_label(pop, inst)
        assert expected.as_tuple() == pytest.approx((0.5, 0.5), abs=1e-15)
        # simulate the two noisy annotators directly
        rng = np.random.default_rng(0)
        draws = 200_000
        rules = np.array([1, 0])
        flips = rng.random((draws, 2)) < 0.1
        labels = np.where(flips, 1 - rules, rules)
        assert labels.mean() == pytest.approx(expected.v1, abs=5e-3)

    def test_unknown_annotator(self):
        pop = self.pop(0.0)
        with pytest.raises(ValueError, match="zzz"):
            oracle_soft_label(pop, Instance("x", "w001", {"zzz": 1}, "test"))
