import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scan_cluster import ClusterHead, EmbeddingDataset, NeighborIndex, OptimizerConfig, TrainState
from scan_cluster.embio import (dataset_from_bytes, dataset_to_bytes, neighbors_from_bytes, neighbors_to_bytes,
                                read_dataset, read_neighbors, write_dataset, write_neighbors)
from scan_cluster.errors import BadMagicError, BadVersionError, CorruptPayloadError, TruncatedFileError
from scan_cluster.optim import Optimizer
from scan_cluster.state import read_state, restore_rng, state_from_bytes, state_to_bytes, write_state

DATA = Path(__file__).parent / "data"


@st.composite
def datasets(draw):
    n = draw(st.integers(1, 6))
    v = draw(st.integers(1, 3))
    d = draw(st.integers(1, 5))
    x = draw(arrays(np.float32, (n, v, d), elements=st.floats(-1e6, 1e6, width=32)))
    labels = None
    if draw(st.booleans()):
        labels = np.arange(n) % draw(st.integers(1, n))
    return EmbeddingDataset(x, labels)


@st.composite
def neighbor_indexes(draw):
    n = draw(st.integers(1, 7))
    k = draw(st.integers(0, n - 1))
    rows, sims = [], []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        row = draw(st.permutations(others))[:k]
        kept = draw(st.integers(0, k))
        row = row[:kept] + [-1] * (k - kept)
        s = sorted(draw(st.lists(st.floats(-1, 1, width=32), min_size=kept, max_size=kept)), reverse=True)
        rows.append(row)
        sims.append(s + [-np.inf] * (k - kept))
    return NeighborIndex(np.array(rows, dtype=np.int64).reshape(n, k), np.array(sims, np.float32).reshape(n, k))


def _states():
    out = []
    for kind, opt_kind, ema in [("linear", "adam", False), ("mlp", "sgd", True), ("linear", "sgd", True)]:
        rng = np.random.default_rng(3)
        head = ClusterHead.init(3, 4, rng, kind, hidden=5)
        opt = Optimizer(OptimizerConfig(kind=opt_kind, lr=0.1), head.params)
        opt.step(head.params, {k: rng.standard_normal(v.shape) for k, v in head.params.items()})
        shadow = {k: v + 0.5 for k, v in head.params.items()} if ema else None
        out.append(TrainState(head, opt.config, opt.state, shadow, 0.9 if ema else 0.0,
                              rng.bit_generator.state if kind == "linear" else None, 11))
    return out


def assert_states_equal(a: TrainState, b: TrainState):
    assert (a.head.kind, a.head.n_clusters, a.head.dim, a.head.hidden) == \
        (b.head.kind, b.head.n_clusters, b.head.dim, b.head.hidden)
    for k in a.head.params:
        assert np.array_equal(a.head.params[k], b.head.params[k])
    assert a.optimizer == b.optimizer
    assert a.optimizer_state["step"] == b.optimizer_state["step"]
    for k, v in a.optimizer_state["buffers"].items():
        assert np.array_equal(v, b.optimizer_state["buffers"][k])
    assert (a.ema is None) == (b.ema is None)
    if a.ema is not None:
        for k in a.ema:
            assert np.array_equal(a.ema[k], b.ema[k])
    assert a.ema_alpha == b.ema_alpha and a.epochs == b.epochs
    assert a.rng_state == b.rng_state


class TestDatasetFormat:
    def test_minimal_file_size(self):
        ds = EmbeddingDataset(np.zeros((2, 1, 3), np.float32))
        assert len(dataset_to_bytes(ds)) == 8 + 4 * 4 + 1 + 24 == 49

    def test_header_layout(self):
        ds = EmbeddingDataset(np.ones((2, 2, 3), np.float32), np.array([1, 0]))
        buf = dataset_to_bytes(ds)
        assert buf[:8] == b"SCANEMB1"
        assert struct.unpack("<IIIIB", buf[8:25]) == (1, 2, 3, 2, 1)
        assert struct.unpack("<I2I", buf[25:37]) == (2, 1, 0)
        assert len(buf) == 37 + 2 * 2 * 3 * 4

    @settings(max_examples=60)
    @given(datasets())
    def test_round_trip_bit_exact(self, ds):
        buf = dataset_to_bytes(ds)
        back = dataset_from_bytes(buf)
        assert dataset_to_bytes(back) == buf
        assert np.array_equal(back.features, ds.features)
        if ds.labels is None:
            assert back.labels is None
        else:
            assert np.array_equal(back.labels, ds.labels) and back.n_classes == ds.n_classes

    def test_file_round_trip(self, tmp_path, small_synth):
        write_dataset(small_synth, tmp_path / "a.semb")
        back = read_dataset(tmp_path / "a.semb")
        assert back.normalized and np.array_equal(back.features, small_synth.features)

    def test_empty_file_bad_magic(self, tmp_path):
        (tmp_path / "e.semb").write_bytes(b"")
        with pytest.raises(BadMagicError):
            read_dataset(tmp_path / "e.semb")

    def test_bad_version(self):
        buf = bytearray(dataset_to_bytes(EmbeddingDataset(np.zeros((1, 1, 1)))))
        buf[8:12] = struct.pack("<I", 2)
        with pytest.raises(BadVersionError):
            dataset_from_bytes(bytes(buf))

    def test_truncated(self):
        buf = dataset_to_bytes(EmbeddingDataset(np.zeros((2, 1, 3))))
        for cut in (10, 20, len(buf) - 1):
            with pytest.raises(TruncatedFileError):
                dataset_from_bytes(buf[:cut])

    def test_nan_payload_rejected(self):
        buf = bytearray(dataset_to_bytes(EmbeddingDataset(np.zeros((2, 1, 3)))))
        buf[-4:] = struct.pack("<f", float("nan"))
        with pytest.raises(CorruptPayloadError):
            dataset_from_bytes(bytes(buf))

    def test_error_codes_distinct(self):
        codes = {BadMagicError.exit_code, BadVersionError.exit_code, TruncatedFileError.exit_code,
                 CorruptPayloadError.exit_code}
        assert len(codes) == 4


class TestNeighborFormat:
    def test_empty_index_is_20_bytes(self):
        nb = NeighborIndex(np.zeros((1, 0), np.int64), np.zeros((1, 0)))
        buf = neighbors_to_bytes(nb)
        assert len(buf) == 20
        back = neighbors_from_bytes(buf)
        assert back.n == 1 and back.k == 0

    @settings(max_examples=60)
    @given(neighbor_indexes())
    def test_round_trip_bit_exact(self, nb):
        buf = neighbors_to_bytes(nb)
        back = neighbors_from_bytes(buf)
        assert neighbors_to_bytes(back) == buf
        assert np.array_equal(back.ids, nb.ids)
        assert np.array_equal(back.sims, nb.sims)

    def test_id_out_of_range(self):
        buf = bytearray(neighbors_to_bytes(NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1)))))
        buf[20:24] = struct.pack("<I", 2)
        with pytest.raises(CorruptPayloadError):
            neighbors_from_bytes(bytes(buf))

    def test_bad_magic_and_truncation(self, tmp_path):
        buf = neighbors_to_bytes(NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1))))
        with pytest.raises(BadMagicError):
            neighbors_from_bytes(b"SCANEMB1" + buf[8:])
        with pytest.raises(TruncatedFileError):
            neighbors_from_bytes(buf[:-2])
        write_neighbors(NeighborIndex(np.array([[1], [0]]), np.zeros((2, 1))), tmp_path / "n.sknn")
        assert read_neighbors(tmp_path / "n.sknn").ids.tolist() == [[1], [0]]


class TestCheckpointFormat:
    @pytest.mark.parametrize("idx", range(3))
    def test_round_trip_bit_exact(self, idx, tmp_path):
        st_ = _states()[idx]
        buf = state_to_bytes(st_)
        back = state_from_bytes(buf)
        assert state_to_bytes(back) == buf
        assert_states_equal(st_, back)
        write_state(st_, tmp_path / "s.sckpt")
        assert_states_equal(st_, read_state(tmp_path / "s.sckpt"))

    def test_rng_resumes_stream(self):
        st_ = _states()[0]
        g1 = restore_rng(st_)
        g2 = restore_rng(state_from_bytes(state_to_bytes(st_)))
        assert isinstance(g1.bit_generator, np.random.PCG64)
        assert np.array_equal(g1.random(20), g2.random(20))

    def test_truncated_and_magic(self):
        buf = state_to_bytes(_states()[1])
        with pytest.raises(TruncatedFileError):
            state_from_bytes(buf[:-1])
        with pytest.raises(BadMagicError):
            state_from_bytes(b"XXXXXXXX" + buf[8:])


class TestGoldenFiles:
    """Checked-in files must decode to these literal values on every platform."""

    def test_digests_unchanged(self):
        digests = json.loads((DATA / "golden_sha256.json").read_text())
        for name, digest in digests.items():
            assert hashlib.sha256((DATA / name).read_bytes()).hexdigest() == digest

    def test_dataset(self):
        ds = read_dataset(DATA / "golden.semb")
        assert (ds.n, ds.v, ds.d, ds.n_classes, ds.normalized) == (3, 2, 3, 2, True)
        assert ds.labels.tolist() == [0, 1, 0]
        assert ds.features[1].tolist() == [[np.float32(0.6), np.float32(0.8), 0.0],
                                           [0.0, np.float32(0.6), np.float32(-0.8)]]
        assert ds.features[2, 1].tolist() == [-1.0, 0.0, 0.0]
        assert dataset_to_bytes(ds) == (DATA / "golden.semb").read_bytes()

    def test_neighbors(self):
        nb = read_neighbors(DATA / "golden.sknn")
        assert nb.ids.tolist() == [[1, 2], [0, -1], [-1, -1]]
        assert nb.sims[0].tolist() == [np.float32(0.6), 0.0]
        assert np.isneginf(nb.sims[1, 1]) and np.all(np.isneginf(nb.sims[2]))
        raw = (DATA / "golden.sknn").read_bytes()
        assert raw[20 + 4 * 3:20 + 4 * 4] == b"\xff\xff\xff\xff"
        assert neighbors_to_bytes(nb) == raw

    def test_checkpoint(self):
        st_ = read_state(DATA / "golden.sckpt")
        assert (st_.head.kind, st_.head.n_clusters, st_.head.dim) == ("linear", 2, 3)
        assert st_.optimizer.kind == "adam" and st_.optimizer.lr == 0.5
        assert st_.optimizer_state["step"] == 1
        assert st_.ema_alpha == 0.999 and st_.epochs == 3
        for k in st_.head.params:
            assert np.array_equal(st_.ema[k], st_.head.params[k] * 0.5)
        # first Adam step moves every coordinate by lr * sign(grad) (up to eps), decay on weights only
        assert np.allclose(st_.optimizer_state["buffers"]["m.bias"], [0.1, -0.1], rtol=0, atol=1e-15)
        assert np.allclose(st_.optimizer_state["buffers"]["v.weight"], 0.001 * 0.0625, rtol=0, atol=1e-18)
        assert st_.rng_state["bit_generator"] == "PCG64"
        assert state_to_bytes(st_) == (DATA / "golden.sckpt").read_bytes()
