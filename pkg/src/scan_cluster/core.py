"""Shared domain types, the PRNG contract and the softmax primitive.

Numeric conventions:

* logarithms are natural logarithms everywhere;
* stored embeddings are float32, all training math runs in float64;
* randomness comes exclusively from :func:`seed_rng`, which wraps numpy's
  PCG64 bit generator (PCG-XSL-RR 128/64, O'Neill 2014).  Its output
  stream for a given seed is fixed by numpy's stability policy for bit
  generators, so golden files pinned from it are portable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError

SENTINEL_ID = -1
"""Neighbor slot emptied by false-positive removal (similarity is -inf)."""

_U64 = 1 << 64


def seed_rng(seed: int) -> np.random.Generator:
    """Return a deterministic PCG64 generator for a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent 64-bit seeds from ``seed``."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-subtracted, float64)."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValidationError("softmax input contains non-finite values")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmbeddingDataset:
    """``n`` samples x ``v`` views x ``d`` features, float32.

    View 0 is the canonical (weak) view; views >= 1 are strong views.
    Labels, when present, are only ever used for evaluation.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    n_classes: Optional[int] = None
    normalized: bool = False

    def __post_init__(self):
        f = np.ascontiguousarray(self.features, dtype=np.float32)
        if f.ndim == 2:
            f = f[:, None, :]
        if f.ndim != 3 or min(f.shape) < 1:
            raise ValidationError(f"features must be n x v x d with all sizes >= 1, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("features contain NaN or Inf")
        if self.normalized:
            norms = np.linalg.norm(f.astype(np.float64), axis=-1)
            if np.max(np.abs(norms - 1.0)) > 1e-4:
                raise ValidationError("normalized flag set but vectors are not unit length")
        object.__setattr__(self, "features", _frozen(f))

        if self.labels is None:
            if self.n_classes is not None:
                raise ValidationError("n_classes given without labels")
            return
        y = np.asarray(self.labels)
        if y.shape != (f.shape[0],) or (y.size and not np.issubdtype(y.dtype, np.integer)):
            raise ValidationError("labels must be an integer vector of length n")
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValidationError("labels must be non-negative")
        n_classes = int(y.max()) + 1 if self.n_classes is None else int(self.n_classes)
        if y.max() >= n_classes:
            raise ValidationError("label id >= n_classes")
        if np.unique(y).size != n_classes:
            raise ValidationError("every class in [0, n_classes) must occur at least once")
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "n_classes", n_classes)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def v(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    def view(self, index: int = 0) -> np.ndarray:
        if not 0 <= index < self.v:
            raise ValidationError(f"view {index} out of range [0, {self.v})")
        return self.features[:, index, :]


@dataclass(frozen=True)
class NeighborIndex:
    """Row ``i`` lists the ``k`` mined neighbors of sample ``i``, most similar first.

    Rows shortened by false-positive removal are padded with
    :data:`SENTINEL_ID` and similarity ``-inf``.
    """

    ids: np.ndarray
    sims: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        sims = np.asarray(self.sims, dtype=np.float32)
        if ids.ndim != 2 or ids.shape != sims.shape:
            raise ValidationError("ids and sims must be n x k arrays of equal shape")
        n = ids.shape[0]
        valid = ids != SENTINEL_ID
        if np.any(ids[valid] < 0) or np.any(ids[valid] >= n):
            raise ValidationError("neighbor id out of range")
        if np.any(ids[valid] == np.nonzero(valid)[0]):
            raise ValidationError("a sample cannot be its own neighbor")
        if ids.shape[1] > 1:
            s = np.sort(np.where(valid, ids, -np.arange(1, ids.shape[1] + 1)), axis=1)
            if np.any(s[:, 1:] == s[:, :-1]):
                raise ValidationError("duplicate neighbor id in a row")
            with np.errstate(invalid="ignore"):
                step = np.diff(sims.astype(np.float64), axis=1)
            if np.any(step > 0):
                raise ValidationError("similarities must be non-increasing within a row")
        object.__setattr__(self, "ids", _frozen(np.ascontiguousarray(ids)))
        object.__setattr__(self, "sims", _frozen(np.ascontiguousarray(sims)))

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def truncate(self, k: int) -> "NeighborIndex":
        if not 0 <= k <= self.k:
            raise ValidationError(f"cannot truncate {self.k} neighbors to {k}")
        return NeighborIndex(self.ids[:, :k].copy(), self.sims[:, :k].copy())

    def valid_mask(self) -> np.ndarray:
        return self.ids != SENTINEL_ID


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam uses decoupled weight decay; SGD uses heavy-ball momentum."""

    kind: str = "adam"
    lr: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.kind!r}")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValidationError("lr must be > 0 and weight_decay >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and 0 <= self.momentum < 1):
            raise ValidationError("betas and momentum must lie in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    k: int = 20
    entropy_weight: float = 5.0
    epochs: int = 100
    batch_size: int = 128
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    heads: int = 10
    seed: int = 0
    neighbor_mode: str = "sample_one"
    ema_alpha: Optional[float] = None
    head_kind: str = "linear"
    hidden: int = 128
    marginal: str = "anchors_and_neighbors"

    def __post_init__(self):
        if self.entropy_weight < 0:
            raise ValidationError("entropy weight must be >= 0")
        if self.k < 0:
            raise ValidationError("k must be >= 0")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if self.heads < 1 or self.epochs < 1:
            raise ValidationError("heads and epochs must be >= 1")
        if self.neighbor_mode not in ("sample_one", "full_sum"):
            raise ValidationError(f"unknown neighbor_mode {self.neighbor_mode!r}")
        if self.ema_alpha is not None and not 0 <= self.ema_alpha < 1:
            raise ValidationError("ema_alpha must lie in [0, 1)")
        if self.head_kind not in ("linear", "mlp"):
            raise ValidationError(f"unknown head kind {self.head_kind!r}")
        if self.marginal not in ("anchors_and_neighbors", "anchors"):
            raise ValidationError(f"unknown marginal mode {self.marginal!r}")


@dataclass(frozen=True)
class EvalReport:
    acc: float
    nmi: float
    ari: float
    mapping: list
    mapping_kind: str
    confusion: np.ndarray
    confident_fraction: float

    def to_dict(self) -> dict:
        return {
            "acc": float(self.acc),
            "nmi": float(self.nmi),
            "ari": float(self.ari),
            "mapping": [int(m) for m in self.mapping],
            "mapping_kind": self.mapping_kind,
            "confusion": np.asarray(self.confusion).astype(int).tolist(),
            "confident_fraction": float(self.confident_fraction),
        }
