import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from scan_cluster import accuracy, ari, confusion_matrix, hungarian, nmi
from scan_cluster.errors import ValidationError

labelings = st.lists(st.integers(0, 4), min_size=2, max_size=30)


class TestHungarian:
    def test_identity_favoring(self):
        assert hungarian(1 - np.eye(4)).tolist() == [0, 1, 2, 3]

    def test_permuted_diagonal(self):
        perm = [2, 0, 3, 1]
        cost = np.ones((4, 4))
        cost[np.arange(4), perm] = 0
        assert hungarian(cost).tolist() == perm

    def test_random_integer_matrix_against_enumeration(self, rng):
        for _ in range(20):
            cost = rng.integers(0, 20, (5, 5))
            perm = hungarian(cost)
            assert sorted(perm.tolist()) == list(range(5))
            assert cost[np.arange(5), perm].sum() == oracles.best_permutation_cost(cost.tolist())

    def test_non_square(self):
        with pytest.raises(ValidationError):
            hungarian(np.zeros((2, 3)))

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            hungarian(np.array([[0.0, np.inf], [1.0, 0.0]]))


class TestAccuracy:
    def test_permuted_truth(self):
        truth = np.array([0, 1, 2, 2, 1, 0, 3])
        perm = np.array([2, 3, 1, 0])
        pred = np.argsort(perm)[truth]
        acc, mapping = accuracy(pred, truth)
        assert acc == 1.0 and mapping.tolist() == perm.tolist()

    def test_split_classes_many_to_one(self):
        truth = np.repeat(np.arange(3), 4)
        pred = truth * 2 + np.tile([0, 1], 6)
        acc, mapping = accuracy(pred, truth, "many_to_one")
        assert acc == 1.0 and mapping.tolist() == [0, 0, 1, 1, 2, 2]

    def test_one_to_one_requires_equal_sizes(self):
        with pytest.raises(ValidationError, match="many_to_one"):
            accuracy([0, 1], [0, 1], "one_to_one", n_clusters=3, n_classes=2)

    def test_random_20_samples_against_enumeration(self, rng):
        for _ in range(20):
            pred, truth = rng.integers(0, 4, 20), rng.integers(0, 4, 20)
            acc, _ = accuracy(pred, truth, "one_to_one", 4, 4)
            assert acc == pytest.approx(oracles.brute_force_accuracy(pred, truth, 4), abs=1e-15)

    def test_empty_cluster_padding(self):
        # cluster 2 unused, class 2 used: inferred sizes differ
        acc, mapping = accuracy([0, 1, 1, 0], [0, 1, 2, 0])
        assert acc == 0.75 and mapping.tolist()[:2] == [0, 1]

    @settings(max_examples=60)
    @given(st.integers(2, 5), st.data())
    def test_one_to_one_dominates_any_permutation(self, c, data):
        n = data.draw(st.integers(1, 25))
        pred = np.array(data.draw(st.lists(st.integers(0, c - 1), min_size=n, max_size=n)))
        truth = np.array(data.draw(st.lists(st.integers(0, c - 1), min_size=n, max_size=n)))
        acc, _ = accuracy(pred, truth, "one_to_one", c, c)
        for perm in itertools.permutations(range(c)):
            assert acc >= np.mean(np.array(perm)[pred] == truth) - 1e-15
        assert accuracy(pred, truth, "many_to_one", c, c)[0] >= acc - 1e-15


class TestNmiAri:
    def test_identical_partitions(self):
        a = [0, 0, 1, 1, 2, 2]
        assert nmi(a, a) == pytest.approx(1.0) and ari(a, a) == pytest.approx(1.0)

    def test_constant_against_balanced(self):
        assert nmi([0] * 6, [0, 0, 0, 1, 1, 1]) == 0.0

    def test_both_constant(self):
        assert nmi([0] * 4, [3] * 4) == 1.0 and ari([0] * 4, [3] * 4) == 1.0

    def test_fixed_twelve_element_pair(self):
        a = [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]
        b = [0, 0, 1, 1, 1, 2, 2, 2, 0, 3, 3, 1]
        assert abs(ari(a, b) - oracles.pair_counting_ari(a, b)) < 1e-12
        assert abs(nmi(a, b) - oracles.contingency_nmi(a, b)) < 1e-12
        # hand count: 4 agreeing pairs, 12 and 13 same-cluster pairs, 66 pairs in total,
        # so ARI = (4 - 12*13/66) / (12.5 - 12*13/66) = 36/223
        assert abs(ari(a, b) - 36 / 223) < 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            nmi([0, 1], [0, 1, 1])
        with pytest.raises(ValidationError):
            ari([0], [0])

    @settings(max_examples=60)
    @given(labelings, st.data())
    def test_symmetric_and_relabeling_invariant(self, a, data):
        b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
        perm = data.draw(st.permutations(range(5)))
        a, b = np.array(a), np.array(b)
        assert abs(nmi(a, b) - nmi(b, a)) < 1e-12
        assert abs(ari(a, b) - ari(b, a)) < 1e-12
        assert abs(nmi(np.array(perm)[a], b) - nmi(a, b)) < 1e-12
        assert abs(ari(np.array(perm)[a], b) - ari(a, b)) < 1e-12
        assert 0 <= nmi(a, b) <= 1 and -1 <= ari(a, b) <= 1

    @settings(max_examples=40)
    @given(labelings, st.data())
    def test_against_brute_force(self, a, data):
        b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
        assert abs(ari(a, b) - oracles.pair_counting_ari(a, b)) < 1e-12
        assert abs(nmi(a, b) - oracles.contingency_nmi(a, b)) < 1e-12


class TestConfusion:
    def test_perfect_clustering_is_diagonal(self):
        truth = np.array([0, 1, 2, 1, 0])
        pred = np.array([2, 0, 1, 0, 2])
        _, mapping = accuracy(pred, truth)
        cm = confusion_matrix(pred, truth, mapping)
        assert np.array_equal(cm, np.diag([2, 2, 1]))

    def test_merged_classes_share_a_row(self):
        truth = np.array([0, 1, 2, 2])
        pred = np.array([0, 0, 1, 1])
        _, mapping = accuracy(pred, truth, "many_to_one", 3, 3)
        cm = confusion_matrix(pred, truth, mapping, 3)
        assert (cm > 0).sum(axis=1).max() == 2 and cm.sum() == 4

    @settings(max_examples=30)
    @given(labelings)
    def test_rows_are_cluster_sizes(self, pred):
        pred = np.array(pred)
        truth = pred[::-1].copy()
        _, mapping = accuracy(pred, truth, "many_to_one", 5, 5)
        cm = confusion_matrix(pred, truth, mapping, 5)
        order = np.lexsort((np.arange(5), mapping))
        assert cm.sum(axis=1).tolist() == np.bincount(pred, minlength=5)[order].tolist()
