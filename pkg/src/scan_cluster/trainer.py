"""The neighbor-consistency clustering objective and its training loop.

Objective for a batch of (anchor, neighbor) pairs with marginal ``p'``::

    consistency  = -(1/P) * sum_pairs ln max(<p_anchor, p_neighbor>, 1e-8)
    entropy_term = weight * sum_c p'_c ln p'_c          (0 ln 0 := 0)
    total        = consistency + entropy_term

``p'`` is the mean prediction over every row evaluated in the batch
(anchors and neighbors) unless ``marginal="anchors"``.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass

import numpy as np

from .core import SENTINEL_ID, EmbeddingDataset, NeighborIndex, TrainConfig, spawn_seeds, seed_rng
from .errors import NoAugmentationSourceError, ValidationError
from .head import ClusterHead, softmax_backward
from .optim import Optimizer, ema_update
from .state import TrainState

log = logging.getLogger(__name__)

DOT_FLOOR = 1e-8


@dataclass(frozen=True)
class ScanBatch:
    """Anchors plus the pairs they take part in.

    ``pair_anchor[j]`` indexes into ``anchors``; ``neighbors[j]`` is the
    sample paired with it.  Each evaluated row carries its own view index.
    """

    anchors: np.ndarray
    anchor_views: np.ndarray
    pair_anchor: np.ndarray
    neighbors: np.ndarray
    neighbor_views: np.ndarray

    @classmethod
    def build(cls, anchors, anchor_views, pair_anchor, neighbors, neighbor_views):
        as_int = lambda a: np.asarray(a, dtype=np.int64).reshape(-1)  # noqa: E731
        return cls(as_int(anchors), as_int(anchor_views), as_int(pair_anchor),
                   as_int(neighbors), as_int(neighbor_views))

    def validate(self, ds: EmbeddingDataset, nbrs: NeighborIndex | None = None) -> None:
        if self.anchors.size == 0:
            raise ValidationError("empty batch")
        if self.anchor_views.shape != self.anchors.shape or self.neighbor_views.shape != self.neighbors.shape:
            raise ValidationError("one view index per evaluated row")
        if self.pair_anchor.shape != self.neighbors.shape:
            raise ValidationError("pair_anchor and neighbors must align")
        for ids in (self.anchors, self.neighbors):
            if ids.size and (ids.min() < 0 or ids.max() >= ds.n):
                raise ValidationError("sample id out of range")
        for views in (self.anchor_views, self.neighbor_views):
            if views.size and (views.min() < 0 or views.max() >= ds.v):
                raise ValidationError("view index out of range")
        if self.pair_anchor.size and (self.pair_anchor.min() < 0 or self.pair_anchor.max() >= self.anchors.size):
            raise ValidationError("pair_anchor out of range")
        if nbrs is not None:
            a = self.anchors[self.pair_anchor]
            same = self.neighbors == a
            in_row = (nbrs.ids[a] == self.neighbors[:, None]).any(axis=1)
            if not np.all(same | in_row):
                raise ValidationError("neighbor id not in the anchor's neighbor list")


@dataclass(frozen=True)
class LossBreakdown:
    consistency: float
    entropy_term: float
    total: float
    marginal: np.ndarray

    def to_dict(self) -> dict:
        return {
            "consistency": self.consistency,
            "entropy_term": self.entropy_term,
            "total": self.total,
            "marginal_entropy": entropy(self.marginal),
        }


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz])))


def _rows(ds: EmbeddingDataset, ids, views) -> np.ndarray:
    return ds.features[ids, views].astype(np.float64)


def _scan_objective(head: ClusterHead, batch: ScanBatch, ds: EmbeddingDataset, entropy_weight: float,
                    marginal: str, with_grad: bool):
    if batch.anchors.size == 0:
        raise ValidationError("empty batch")
    if entropy_weight < 0:
        raise ValidationError("entropy weight must be >= 0")
    n_anchor = batch.anchors.size
    x = np.concatenate([_rows(ds, batch.anchors, batch.anchor_views),
                        _rows(ds, batch.neighbors, batch.neighbor_views)])
    _, probs = head.forward(x, validate=False)
    pa, pn = probs[:n_anchor], probs[n_anchor:]
    n_pairs = batch.neighbors.size

    if n_pairs:
        pa_pair = pa[batch.pair_anchor]
        dots = np.sum(pa_pair * pn, axis=1)
        active = dots > DOT_FLOOR
        consistency = float(-np.mean(np.log(np.maximum(dots, DOT_FLOOR))))
    else:
        consistency = 0.0

    m_rows = probs if marginal == "anchors_and_neighbors" else pa
    pm = m_rows.mean(axis=0)
    nz = pm > 0
    entropy_term = float(entropy_weight * np.sum(pm[nz] * np.log(pm[nz])))
    breakdown = LossBreakdown(consistency, entropy_term, consistency + entropy_term, pm)
    if not with_grad:
        return breakdown, None

    g = np.zeros_like(probs)
    if n_pairs:
        coef = np.where(active, -1.0 / (n_pairs * np.maximum(dots, DOT_FLOOR)), 0.0)[:, None]
        np.add.at(g, batch.pair_anchor, coef * pn)
        g[n_anchor:] += coef * pa_pair
    g_marg = entropy_weight * np.where(nz, np.log(np.where(nz, pm, 1.0)) + 1.0, 0.0)
    g[: m_rows.shape[0]] += g_marg / m_rows.shape[0]
    grads = head.backward(x, softmax_backward(probs, g))
    return breakdown, grads


def scan_loss(head: ClusterHead, batch: ScanBatch, ds: EmbeddingDataset, entropy_weight: float = 5.0,
              marginal: str = "anchors_and_neighbors") -> LossBreakdown:
    return _scan_objective(head, batch, ds, entropy_weight, marginal, with_grad=False)[0]


def scan_loss_grad(head: ClusterHead, batch: ScanBatch, ds: EmbeddingDataset, entropy_weight: float = 5.0,
                   marginal: str = "anchors_and_neighbors") -> dict:
    """Analytic gradient of ``scan_loss(...).total`` for every head parameter.

    Pairs whose dot product is clamped at the floor contribute no gradient.
    """
    return _scan_objective(head, batch, ds, entropy_weight, marginal, with_grad=True)[1]


def scan_loss_and_grad(head, batch, ds, entropy_weight=5.0, marginal="anchors_and_neighbors"):
    return _scan_objective(head, batch, ds, entropy_weight, marginal, with_grad=True)


# -- batch sampling -----------------------------------------------------------

def _other_view(rng: np.random.Generator, views: np.ndarray, v: int) -> np.ndarray:
    """A view different from ``views`` for every entry, uniform over the rest."""
    shift = rng.integers(1, v, size=views.shape)
    return (views + shift) % v


def sample_batch(rng: np.random.Generator, anchors: np.ndarray, ds: EmbeddingDataset,
                 nbrs: NeighborIndex, mode: str = "sample_one") -> ScanBatch:
    """Draw views and neighbors for ``anchors``.

    Anchors whose neighbor row is empty (k = 0 or every entry removed) are
    paired with themselves under a different view.  With a single view such
    anchors get no pair and only enter the marginal.
    """
    b = anchors.size
    anchor_views = rng.integers(0, ds.v, size=b)
    valid = nbrs.ids[anchors] != SENTINEL_ID
    counts = valid.sum(axis=1)
    if mode == "sample_one":
        pick = rng.integers(0, np.maximum(counts, 1))
        has = counts > 0
        pair_anchor = np.arange(b)
        if nbrs.k:
            neighbors = np.where(has, nbrs.ids[anchors, np.minimum(pick, nbrs.k - 1)], anchors)
        else:
            neighbors = anchors.copy()
        neighbor_views = rng.integers(0, ds.v, size=b)
    else:
        rows, cols = np.nonzero(valid)
        has = counts > 0
        empty = np.flatnonzero(~has)
        pair_anchor = np.concatenate([rows, empty])
        neighbors = np.concatenate([nbrs.ids[anchors[rows], cols], anchors[empty]])
        order = np.argsort(pair_anchor, kind="stable")
        pair_anchor, neighbors = pair_anchor[order], neighbors[order]
        neighbor_views = rng.integers(0, ds.v, size=neighbors.size)
        has = np.concatenate([np.ones(rows.size, bool), np.zeros(empty.size, bool)])[order]
    self_pairs = ~has
    if np.any(self_pairs):
        if ds.v >= 2:
            neighbor_views[self_pairs] = _other_view(rng, anchor_views[pair_anchor[self_pairs]], ds.v)
        else:
            keep = ~self_pairs
            pair_anchor, neighbors, neighbor_views = pair_anchor[keep], neighbors[keep], neighbor_views[keep]
    return ScanBatch(anchors, anchor_views, pair_anchor, neighbors, neighbor_views)


# -- training -----------------------------------------------------------------

def _copy_state(head, opt, ema, alpha, rng, epochs) -> TrainState:
    return TrainState(head.copy(), opt.config, copy.deepcopy(opt.state),
                      copy.deepcopy(ema), alpha if ema is not None else 0.0,
                      copy.deepcopy(rng.bit_generator.state), epochs)


def _train_one_head(ds, nbrs, cfg: TrainConfig, n_clusters: int, seed: int):
    rng = seed_rng(seed)
    head = ClusterHead.init(n_clusters, ds.d, rng, cfg.head_kind, cfg.hidden)
    opt = Optimizer(cfg.optimizer, head.params)
    ema = copy.deepcopy(head.params) if cfg.ema_alpha is not None else None
    history = []
    best, best_loss = None, np.inf
    for epoch in range(cfg.epochs):
        perm = rng.permutation(ds.n)
        parts = {"consistency": 0.0, "entropy_term": 0.0, "total": 0.0}
        marg = np.zeros(n_clusters)
        n_batches = 0
        for start in range(0, ds.n, cfg.batch_size):
            batch = sample_batch(rng, perm[start:start + cfg.batch_size], ds, nbrs, cfg.neighbor_mode)
            loss, grads = scan_loss_and_grad(head, batch, ds, cfg.entropy_weight, cfg.marginal)
            opt.step(head.params, grads)
            if ema is not None:
                ema_update(ema, head.params, cfg.ema_alpha)
            parts["consistency"] += loss.consistency
            parts["entropy_term"] += loss.entropy_term
            parts["total"] += loss.total
            marg += loss.marginal
            n_batches += 1
        record = {k: v / n_batches for k, v in parts.items()}
        record["marginal_entropy"] = entropy(marg / n_batches)
        record["epoch"] = epoch + 1
        history.append(record)
        if record["total"] < best_loss:
            best_loss = record["total"]
            best = _copy_state(head, opt, ema, cfg.ema_alpha, rng, epoch + 1)
    return best, best_loss, history


def train_clustering(ds: EmbeddingDataset, nbrs: NeighborIndex, cfg: TrainConfig,
                     n_clusters: int) -> tuple[TrainState, dict]:
    """Train ``cfg.heads`` independent heads and keep the lowest-loss one.

    Each head has its own initialization and PRNG stream derived from
    ``cfg.seed``, so the result does not depend on the order heads run in.
    The returned state is the selected head at its lowest epoch-mean loss.
    """
    if nbrs.n != ds.n:
        raise ValidationError(f"neighbor index has {nbrs.n} rows, dataset has {ds.n} samples")
    if cfg.k > nbrs.k:
        raise ValidationError(f"config asks for k={cfg.k} but only {nbrs.k} neighbors were mined")
    if cfg.k == 0 and ds.v < 2:
        raise NoAugmentationSourceError(
            "k=0 needs at least two views per sample: no augmentation source")
    if n_clusters < 1:
        raise ValidationError("n_clusters must be >= 1")
    nbrs = nbrs.truncate(cfg.k)

    results = []
    for h, seed in enumerate(spawn_seeds(cfg.seed, cfg.heads)):
        state, loss, hist = _train_one_head(ds, nbrs, cfg, n_clusters, seed)
        log.info("head %d: best epoch-mean loss %.6f at epoch %d", h, loss, state.epochs)
        results.append((state, loss, hist))
    best = min(range(cfg.heads), key=lambda h: (results[h][1], h))
    history = {
        "selected_head": best,
        "best_epoch": results[best][0].epochs,
        "head_losses": [r[1] for r in results],
        "epochs": results[best][2],
    }
    return results[best][0], history


def marginal_entropy(head: ClusterHead, ds: EmbeddingDataset, view: int = 0) -> float:
    """Entropy of the mean predicted cluster distribution over the dataset."""
    return entropy(head.predict_proba(ds.view(view)).mean(axis=0))
