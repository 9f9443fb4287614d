"""Lloyd's k-means on view 0, the baseline clustering of raw embeddings."""

from __future__ import annotations

import numpy as np

from .core import EmbeddingDataset, seed_rng
from .errors import ValidationError


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centroids.T + np.sum(centroids * centroids, axis=1)[None, :]
    return np.maximum(d, 0.0)


def kmeanspp_init(x: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new centre drawn with probability proportional to D(x)^2."""
    n = x.shape[0]
    centres = [int(rng.integers(n))]
    closest = _sq_dists(x, x[centres])[:, 0]
    for _ in range(1, c):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a centre already; fall back to unused points
            unused = np.setdiff1d(np.arange(n), centres)
            nxt = int(rng.choice(unused))
        else:
            nxt = int(rng.choice(n, p=closest / total))
        centres.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, x[[nxt]])[:, 0])
    return x[centres].copy()


def kmeans(ds_or_x, c: int, init: str = "kmeanspp", seed: int = 0, max_iters: int = 300,
           tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray, float]:
    """Return ``(assignments, centroids, inertia)``.

    Empty clusters are re-seeded at the point farthest from its centroid.
    Stops when no centroid moves more than ``tol`` or after ``max_iters``.
    """
    x = ds_or_x.view(0) if isinstance(ds_or_x, EmbeddingDataset) else ds_or_x
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= c <= n:
        raise ValidationError(f"need 1 <= c <= n, got c={c}, n={n}")
    rng = seed_rng(seed)
    if init == "kmeanspp":
        centroids = kmeanspp_init(x, c, rng)
    elif init == "random":
        centroids = x[rng.choice(n, size=c, replace=False)].copy()
    else:
        raise ValidationError(f"unknown init {init!r}")

    prev_inertia = np.inf
    for _ in range(max_iters):
        d = _sq_dists(x, centroids)
        assign = d.argmin(axis=1)
        point_cost = d[np.arange(n), assign]
        inertia = float(point_cost.sum())
        assert inertia <= prev_inertia * (1 + 1e-9) + 1e-12, "k-means inertia increased"
        prev_inertia = inertia

        counts = np.bincount(assign, minlength=c)
        new = np.zeros_like(centroids)
        np.add.at(new, assign, x)
        taken = set()
        for j in np.flatnonzero(counts == 0):
            order = np.argsort(-point_cost, kind="stable")
            far = next(int(i) for i in order if int(i) not in taken)
            taken.add(far)
            new[j] = x[far]
            counts[j] = 1
            point_cost[far] = 0.0
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        shift = np.max(np.linalg.norm(new - centroids, axis=1))
        centroids = new
        if shift < tol:
            break

    d = _sq_dists(x, centroids)
    assign = d.argmin(axis=1)
    return assign, centroids, float(d[np.arange(n), assign].sum())
