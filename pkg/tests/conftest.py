import numpy as np
import pytest

from scan_cluster import EmbeddingDataset, generate_synthetic, preset
from scan_cluster.embio import SynthConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_dataset(rng, n=8, v=2, d=6, labels=None, normalized=False):
    x = rng.standard_normal((n, v, d)).astype(np.float32)
    if normalized:
        x /= np.linalg.norm(x, axis=-1, keepdims=True)
    return EmbeddingDataset(x, labels, normalized=normalized)


@pytest.fixture(scope="session")
def small_synth():
    """600 points, 4 well-separated classes, 3 views: fast enough for unit tests."""
    return generate_synthetic(SynthConfig(n=600, d=16, c_true=4, v=3, sep=5.0, within_std=0.1,
                                          view_jitter_std=0.03, seed=7))


@pytest.fixture(scope="session")
def separated():
    return generate_synthetic(preset("separated"))


@pytest.fixture(scope="session")
def overlap():
    return generate_synthetic(preset("overlap"))


@pytest.fixture(scope="session")
def separated_clustered(separated):
    """Clustering-step result on the separated preset (reduced head count to keep tests quick)."""
    from scan_cluster import OptimizerConfig, TrainConfig, mine_neighbors, train_clustering

    nbrs = mine_neighbors(separated, 20)
    cfg = TrainConfig(k=20, epochs=40, heads=3, optimizer=OptimizerConfig(lr=1e-2), seed=0)
    state, history = train_clustering(separated, nbrs, cfg, 10)
    return state, history


_ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
