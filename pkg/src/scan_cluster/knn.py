"""Exact nearest-neighbor mining and neighbor-quality diagnostics."""

from __future__ import annotations

import numpy as np

from .core import SENTINEL_ID, EmbeddingDataset, NeighborIndex
from .errors import ValidationError

BLOCK_SIZE = 1024
SHORTLIST_TOL = 1e-9


def _dots(q: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pairwise dot products accumulated over dimensions in a fixed order.

    A BLAS matrix product may round the same pair differently depending on
    the block shape; accumulating one dimension at a time keeps every pair's
    arithmetic identical however queries are grouped.
    """
    out = np.zeros((q.shape[0], x.shape[0]))
    tmp = np.empty_like(out)
    for j in range(q.shape[1]):
        np.multiply(q[:, j, None], x[None, :, j], out=tmp)
        out += tmp
    return out


def _sq_norms(x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[0])
    for j in range(x.shape[1]):
        out += x[:, j] * x[:, j]
    return out


def _similarity_block(q: np.ndarray, x: np.ndarray, x_sq: np.ndarray, metric: str) -> np.ndarray:
    """Reference similarities with a fixed floating-point evaluation order."""
    if metric == "cosine":
        return _dots(q, x)
    # negated squared distance, so "larger is closer" for both metrics
    return -(_sq_norms(q)[:, None] - 2.0 * _dots(q, x) + x_sq[None, :])


def _fast_block(q: np.ndarray, x: np.ndarray, x_sq: np.ndarray, metric: str) -> np.ndarray:
    """BLAS approximation of :func:`_similarity_block`, used only to shortlist candidates."""
    if metric == "cosine":
        return q @ x.T
    return -(np.sum(q * q, axis=1)[:, None] - 2.0 * (q @ x.T) + x_sq[None, :])


def _prepare(ds: EmbeddingDataset, view: int, metric: str) -> np.ndarray:
    x = ds.view(view).astype(np.float64)
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValidationError("cosine similarity undefined for zero vectors")
        x = x / norms
    elif metric != "l2":
        raise ValidationError(f"unknown metric {metric!r}")
    return x


def mine_neighbors(ds: EmbeddingDataset, k: int, view: int = 0, metric: str = "cosine",
                   block_size: int = BLOCK_SIZE) -> NeighborIndex:
    """Exact k most similar samples for every sample, self excluded.

    Similarities are computed block-by-block over queries; ties are broken
    towards the lower sample index.  Ranking and stored similarities use a
    fixed-order reference kernel, so the output does not depend on
    ``block_size``.  For ``metric="l2"`` the stored similarity is the
    negated squared Euclidean distance.
    """
    n = ds.n
    if not 0 <= k <= n - 1:
        raise ValidationError(f"k must satisfy 0 <= k <= n-1 = {n - 1}, got {k}")
    x = _prepare(ds, view, metric)
    x_sq = _sq_norms(x)
    ids = np.empty((n, k), dtype=np.int64)
    sims = np.empty((n, k), dtype=np.float64)
    if k == 0:
        return NeighborIndex(ids, sims)
    scale = 1.0 + (2.0 * x_sq.max() if metric == "l2" else 1.0)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        q = x[start:stop]
        s = _fast_block(q, x, x_sq, metric)
        rows = np.arange(stop - start)
        s[rows, start + rows] = -np.inf
        kth = -np.partition(-s, k - 1, axis=1)[:, k - 1]
        # BLAS rounding is far below SHORTLIST_TOL; every true top-k member
        # survives the shortlist, which is then ranked with reference arithmetic
        for r in range(stop - start):
            cand = np.flatnonzero(s[r] >= kth[r] - SHORTLIST_TOL * scale)
            exact = _similarity_block(q[r:r + 1], x[cand], x_sq[cand], metric)[0]
            order = np.lexsort((cand, -exact))[:k]
            ids[start + r] = cand[order]
            sims[start + r] = exact[order]
    return NeighborIndex(ids, sims)


def mine_neighbors_naive(ds: EmbeddingDataset, k: int, view: int = 0, metric: str = "cosine") -> NeighborIndex:
    """Reference miner: one full sort per query.  O(n^2 log n)."""
    x = _prepare(ds, view, metric)
    x_sq = _sq_norms(x)
    n = ds.n
    ids = np.empty((n, k), dtype=np.int64)
    sims = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        s = _similarity_block(x[i:i + 1], x, x_sq, metric)[0]
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (-s[j], j))
        ids[i] = others[:k]
        sims[i] = s[others[:k]]
    return NeighborIndex(ids, sims)


def _require_labels(labels) -> np.ndarray:
    if labels is None:
        raise ValidationError("neighbor diagnostics need ground-truth labels")
    return np.asarray(labels, dtype=np.int64)


def neighbor_purity(nbrs: NeighborIndex, labels) -> tuple[float, np.ndarray]:
    """Fraction of neighbor pairs sharing the anchor's label.

    Returns the overall purity and the cumulative purity curve over the
    first 1..k neighbors.
    """
    y = _require_labels(labels)
    if nbrs.k < 1:
        raise ValidationError("purity needs k >= 1")
    valid = nbrs.valid_mask()
    same = (y[np.where(valid, nbrs.ids, 0)] == y[:, None]) & valid
    hits = np.cumsum(same.sum(axis=0))
    counts = np.cumsum(valid.sum(axis=0))
    curve = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    total = float(curve[-1]) if counts[-1] else float("nan")
    return total, curve


def remove_false_positives(nbrs: NeighborIndex, labels) -> NeighborIndex:
    """Drop neighbors whose label differs from the anchor's.

    Kept entries are shifted left; emptied slots hold SENTINEL_ID and -inf.
    Upper-bound experiments only: this peeks at ground truth.
    """
    y = _require_labels(labels)
    valid = nbrs.valid_mask()
    keep = valid & (y[np.where(valid, nbrs.ids, 0)] == y[:, None])
    # stable argsort of ~keep moves kept entries to the front in original order
    order = np.argsort(~keep, axis=1, kind="stable")
    keep_sorted = np.take_along_axis(keep, order, axis=1)
    ids = np.where(keep_sorted, np.take_along_axis(nbrs.ids, order, axis=1), SENTINEL_ID)
    sims = np.where(keep_sorted, np.take_along_axis(nbrs.sims, order, axis=1), -np.inf)
    return NeighborIndex(ids, sims)


def inject_neighbor_noise(nbrs: NeighborIndex, labels, fraction: float, seed: int,
                          mode: str = "uniform") -> NeighborIndex:
    """Replace ``fraction`` of neighbor entries by random samples of another class.

    ``mode="uniform"`` draws the replacement from any other class;
    ``mode="confusion"`` always draws from class ``(y + 1) mod L``, which
    mimics a systematic confusion between pairs of classes.  Similarities
    are left untouched, so row ordering stays valid.  Used to build
    deliberately noisy priors for self-labeling experiments.
    """
    from .core import seed_rng

    y = _require_labels(labels)
    if not 0 <= fraction <= 1:
        raise ValidationError("fraction must lie in [0, 1]")
    if mode not in ("uniform", "confusion"):
        raise ValidationError(f"unknown noise mode {mode!r}")
    rng = seed_rng(seed)
    n_classes = int(y.max()) + 1
    by_class = [np.flatnonzero(y == c) for c in range(n_classes)]
    ids = np.array(nbrs.ids)
    n, k = ids.shape
    slots = np.flatnonzero((ids != SENTINEL_ID).ravel())
    chosen = rng.choice(slots, size=int(round(fraction * slots.size)), replace=False)
    for flat in np.sort(chosen):
        i, j = divmod(int(flat), k)
        row = set(ids[i].tolist())
        while True:
            if mode == "uniform":
                cand = int(rng.integers(n))
            else:
                pool = by_class[(y[i] + 1) % n_classes]
                cand = int(pool[rng.integers(pool.size)])
            if y[cand] != y[i] and cand not in row:
                break
        ids[i, j] = cand
    return NeighborIndex(ids, nbrs.sims.copy())
