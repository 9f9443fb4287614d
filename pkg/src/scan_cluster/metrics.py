"""Clustering metrics: Hungarian matching, ACC, NMI, ARI and confusion matrices."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect matching for a square cost matrix.

    Returns ``perm`` with row ``i`` assigned to column ``perm[i]``.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValidationError(f"hungarian needs a square matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def pad_square(m: np.ndarray, fill: float = 0.0) -> np.ndarray:
    size = max(m.shape)
    out = np.full((size, size), fill, dtype=np.float64)
    out[: m.shape[0], : m.shape[1]] = m
    return out


def contingency(a, b, n_a: int | None = None, n_b: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("label vectors must be 1-D and of equal length")
    if a.size and (a.min() < 0 or b.min() < 0):
        raise ValidationError("labels must be non-negative")
    n_a = int(a.max()) + 1 if n_a is None else n_a
    n_b = int(b.max()) + 1 if n_b is None else n_b
    table = np.zeros((n_a, n_b), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def accuracy(pred, truth, mode: str = "one_to_one", n_clusters: int | None = None,
             n_classes: int | None = None) -> tuple[float, np.ndarray]:
    """Clustering accuracy under the best cluster-to-class mapping.

    ``one_to_one`` matches clusters and classes with the Hungarian method;
    ``many_to_one`` sends every cluster to its majority class (lowest class
    id on ties; empty clusters map to class 0).  Returns ``(acc, mapping)``
    where ``mapping[c]`` is the class of cluster ``c``.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValidationError("pred and truth must be non-empty and of equal length")
    explicit = n_clusters is not None and n_classes is not None
    n_c = int(pred.max()) + 1 if n_clusters is None else n_clusters
    n_l = int(truth.max()) + 1 if n_classes is None else n_classes
    table = contingency(pred, truth, n_c, n_l)
    if mode == "many_to_one":
        mapping = table.argmax(axis=1)
        return float(table.max(axis=1).sum() / pred.size), mapping
    if mode != "one_to_one":
        raise ValidationError(f"unknown accuracy mode {mode!r}")
    if explicit and n_c != n_l:
        raise ValidationError(
            f"one_to_one needs as many clusters as classes ({n_c} vs {n_l}); use mode='many_to_one'")
    # inferred sizes can differ when a cluster or class is unused: pad with zero-count rows/columns
    size = max(n_c, n_l)
    perm = hungarian(-pad_square(table))
    matched = pad_square(table)[np.arange(size), perm].sum()
    return float(matched / pred.size), perm[:n_c]


def _entropy_from_counts(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(a, b) -> float:
    """Mutual information normalized by the geometric mean of the entropies."""
    table = contingency(a, b)
    n = int(table.sum())
    if n < 2:
        raise ValidationError("nmi needs at least two samples")
    h_a = _entropy_from_counts(table.sum(axis=1), n)
    h_b = _entropy_from_counts(table.sum(axis=0), n)
    if h_a == 0.0 or h_b == 0.0:
        # a constant partition only matches another constant partition
        return 1.0 if h_a == h_b else 0.0
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float(np.sum(pij * np.log(pij / outer)))
    return float(min(max(mi / np.sqrt(h_a * h_b), 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(a, b) -> float:
    """Adjusted Rand index from pair counts.

    When the expected index equals its maximum the adjustment is undefined;
    we return 1.0 if the index also equals it and 0.0 otherwise.
    """
    table = contingency(a, b)
    n = int(table.sum())
    if n < 2:
        raise ValidationError("ari needs at least two samples")
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(n)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0 if index == expected else 0.0
    return float((index - expected) / (max_index - expected))


def confusion_matrix(pred, truth, mapping, n_classes: int | None = None) -> np.ndarray:
    """Cluster x class counts with rows reordered by their mapped class.

    Row ``r`` is cluster ``order[r]`` where clusters are sorted by
    ``(mapping[c], c)``; for a perfect one-to-one clustering this is diagonal.
    """
    mapping = np.asarray(mapping, dtype=np.int64)
    table = contingency(pred, truth, mapping.size, n_classes)
    order = np.lexsort((np.arange(mapping.size), mapping))
    return table[order]
