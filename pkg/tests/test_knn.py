import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scan_cluster import EmbeddingDataset, NeighborIndex, mine_neighbors, neighbor_purity, remove_false_positives
from scan_cluster.errors import ValidationError
from scan_cluster.knn import inject_neighbor_noise, mine_neighbors_naive


def test_orthogonal_tie_goes_to_lower_index():
    nb = mine_neighbors(EmbeddingDataset(np.eye(3)), 1)
    assert nb.ids[:, 0].tolist() == [1, 0, 0]
    assert np.all(nb.sims == 0)


def test_k_zero_is_valid_and_empty():
    nb = mine_neighbors(EmbeddingDataset(np.eye(3)), 0)
    assert nb.ids.shape == (3, 0)


@pytest.mark.parametrize("k", [-1, 3, 4])
def test_k_out_of_range(k):
    with pytest.raises(ValidationError):
        mine_neighbors(EmbeddingDataset(np.eye(3)), k)


def test_matches_naive_on_64_random_vectors(rng):
    ds = EmbeddingDataset(rng.standard_normal((64, 1, 10)))
    fast, slow = mine_neighbors(ds, 5), mine_neighbors_naive(ds, 5)
    assert np.array_equal(fast.ids, slow.ids)
    assert np.allclose(fast.sims, slow.sims, rtol=0, atol=1e-6)


# integer-valued features make exact ties common, which exercises the tie rule
@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(2, 30), st.just(1), st.integers(1, 4)),
              elements=st.integers(-2, 2).map(float)).filter(lambda x: np.all(np.abs(x).sum(-1) > 0)),
       st.data())
def test_blocked_equals_naive_with_ties(x, data):
    ds = EmbeddingDataset(x)
    k = data.draw(st.integers(0, ds.n - 1))
    block = data.draw(st.integers(1, 8))
    for metric in ("cosine", "l2"):
        fast = mine_neighbors(ds, k, metric=metric, block_size=block)
        slow = mine_neighbors_naive(ds, k, metric=metric)
        assert np.array_equal(fast.ids, slow.ids)
        assert np.allclose(fast.sims, slow.sims, rtol=0, atol=1e-6)


def test_block_size_does_not_change_output(rng):
    ds = EmbeddingDataset(rng.standard_normal((100, 1, 8)))
    ref = mine_neighbors(ds, 7, block_size=1024)
    for b in (1, 7, 33):
        other = mine_neighbors(ds, 7, block_size=b)
        assert np.array_equal(other.ids, ref.ids) and np.array_equal(other.sims, ref.sims)


def test_cosine_on_unit_vectors_is_dot_product(small_synth):
    nb = mine_neighbors(small_synth, 4)
    x = small_synth.view(0).astype(np.float64)
    dots = np.einsum("id,ikd->ik", x, x[nb.ids])
    assert np.allclose(nb.sims, dots, rtol=0, atol=1e-6)


def test_mining_uses_requested_view(small_synth):
    a = mine_neighbors(small_synth, 3, view=0)
    b = mine_neighbors(small_synth, 3, view=1)
    assert not np.array_equal(a.sims, b.sims)


def test_l2_similarity_is_negated_squared_distance(rng):
    ds = EmbeddingDataset(rng.standard_normal((20, 1, 3)))
    nb = mine_neighbors(ds, 2, metric="l2")
    x = ds.view(0).astype(np.float64)
    d2 = np.sum((x[:, None] - x[nb.ids]) ** 2, axis=-1)
    assert np.allclose(nb.sims, -d2, atol=1e-5)


class TestPurity:
    def test_separated_preset(self, separated):
        total, curve = neighbor_purity(mine_neighbors(separated, 20), separated.labels)
        assert total >= 0.95
        assert curve.shape == (20,) and curve[-1] == total

    def test_single_class(self, rng):
        ds = EmbeddingDataset(rng.standard_normal((30, 1, 4)), np.zeros(30, dtype=int))
        assert neighbor_purity(mine_neighbors(ds, 5), ds.labels)[0] == 1.0

    def test_random_labels_give_chance_purity(self, rng):
        ds = EmbeddingDataset(rng.standard_normal((3000, 1, 8)))
        labels = np.arange(3000) % 10
        rng.shuffle(labels)
        total, _ = neighbor_purity(mine_neighbors(ds, 10), labels)
        assert abs(total - 0.1) < 0.02

    def test_curve_is_cumulative(self):
        nb = NeighborIndex(np.array([[1, 2], [0, 2], [1, 0]]), np.array([[0.9, 0.1]] * 3))
        total, curve = neighbor_purity(nb, np.array([0, 0, 1]))
        # rank-1 hits: 0->1 yes, 1->0 yes, 2->1 no; rank-2: 0->2 no, 1->2 no, 2->0 no
        assert curve.tolist() == [2 / 3, 2 / 6] and total == 2 / 6

    def test_needs_labels(self):
        with pytest.raises(ValidationError):
            neighbor_purity(NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1))), None)

    @settings(max_examples=30, deadline=None)
    @given(st.permutations(list(range(4))))
    def test_invariant_to_label_permutation(self, perm):
        rng = np.random.default_rng(5)
        ds = EmbeddingDataset(rng.standard_normal((40, 1, 3)))
        labels = np.arange(40) % 4
        nb = mine_neighbors(ds, 6)
        assert neighbor_purity(nb, labels)[0] == neighbor_purity(nb, np.array(perm)[labels])[0]


class TestFalsePositiveRemoval:
    def test_pure_input_unchanged(self, rng):
        ds = EmbeddingDataset(rng.standard_normal((20, 1, 3)), np.zeros(20, dtype=int))
        nb = mine_neighbors(ds, 4)
        out = remove_false_positives(nb, ds.labels)
        assert np.array_equal(out.ids, nb.ids) and np.array_equal(out.sims, nb.sims)

    def test_all_different_labels_empty_rows(self, rng):
        ds = EmbeddingDataset(rng.standard_normal((6, 1, 3)))
        out = remove_false_positives(mine_neighbors(ds, 3), np.arange(6))
        assert np.all(out.ids == -1) and np.all(np.isneginf(out.sims))

    def test_left_packed(self):
        nb = NeighborIndex(np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]),
                           np.array([[0.9, 0.5, 0.1]] * 4, np.float32))
        out = remove_false_positives(nb, np.array([0, 1, 0, 0]))
        assert out.ids[0].tolist() == [2, 3, -1]
        assert out.sims[0].tolist()[:2] == [np.float32(0.5), np.float32(0.1)]
        assert out.ids[1].tolist() == [-1, -1, -1]

    def test_overlap_preset_becomes_pure(self, overlap):
        nb = mine_neighbors(overlap, 20)
        assert neighbor_purity(nb, overlap.labels)[0] < 1.0
        assert neighbor_purity(remove_false_positives(nb, overlap.labels), overlap.labels)[0] == 1.0


class TestNoiseInjection:
    def test_fraction_and_validity(self, small_synth):
        nb = mine_neighbors(small_synth, 10)
        noisy = inject_neighbor_noise(nb, small_synth.labels, 0.1, seed=1)
        changed = noisy.ids != nb.ids
        assert changed.sum() == round(0.1 * nb.ids.size)
        y = small_synth.labels
        assert np.all(y[noisy.ids[changed]] != y[np.nonzero(changed)[0]])

    def test_confusion_mode_targets_next_class(self, small_synth):
        nb = mine_neighbors(small_synth, 5)
        noisy = inject_neighbor_noise(nb, small_synth.labels, 0.2, seed=2, mode="confusion")
        rows, cols = np.nonzero(noisy.ids != nb.ids)
        y = small_synth.labels
        assert np.all(y[noisy.ids[rows, cols]] == (y[rows] + 1) % small_synth.n_classes)

    def test_deterministic(self, small_synth):
        nb = mine_neighbors(small_synth, 5)
        a = inject_neighbor_noise(nb, small_synth.labels, 0.3, seed=4)
        b = inject_neighbor_noise(nb, small_synth.labels, 0.3, seed=4)
        assert np.array_equal(a.ids, b.ids)
