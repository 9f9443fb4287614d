"""Binary file formats and the synthetic Gaussian-mixture benchmark.

All integers and floats are little-endian.

Dataset (``.semb``)::

    magic  "SCANEMB1"   8 bytes
    u32    version = 1
    u32    n, d, v
    u8     flags        bit0 labels present, bit1 normalized
    [u32   l; n x u32 labels]          if bit0
    n*v*d  f32 features                sample-major, view-major, dim-minor

Neighbor index (``.sknn``)::

    magic  "SCANKNN1"
    u32    version = 1
    u32    n, k
    n*k    u32 ids      0xFFFFFFFF marks an emptied slot (similarity -inf)
    n*k    f32 sims

The checkpoint format (``.sckpt``) lives in :mod:`scan_cluster.state`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import SENTINEL_ID, EmbeddingDataset, NeighborIndex, seed_rng
from .errors import (
    BadMagicError,
    BadVersionError,
    CorruptPayloadError,
    SynthesisError,
    TruncatedFileError,
    ValidationError,
)

DATASET_MAGIC = b"SCANEMB1"
NEIGHBORS_MAGIC = b"SCANKNN1"
FORMAT_VERSION = 1
_U32_SENTINEL = 0xFFFFFFFF


class _Reader:
    """Cursor over a byte buffer that raises TruncatedFileError on short reads."""

    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.buf):
            raise TruncatedFileError(f"{self.what}: truncated at byte {self.pos}")
        out = self.buf[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt, count=count)

    def finish(self):
        if self.pos != len(self.buf):
            raise CorruptPayloadError(f"{self.what}: {len(self.buf) - self.pos} trailing bytes")


def check_header(r: _Reader, magic: bytes) -> None:
    if len(r.buf) < len(magic) or r.buf[:len(magic)] != magic:
        raise BadMagicError(f"{r.what}: bad magic (expected {magic!r})")
    r.take(len(magic))
    (version,) = r.unpack("I")
    if version != FORMAT_VERSION:
        raise BadVersionError(f"{r.what}: unsupported version {version}")


def dataset_to_bytes(ds: EmbeddingDataset) -> bytes:
    flags = (1 if ds.labels is not None else 0) | (2 if ds.normalized else 0)
    parts = [DATASET_MAGIC, struct.pack("<IIIIB", FORMAT_VERSION, ds.n, ds.d, ds.v, flags)]
    if ds.labels is not None:
        parts.append(struct.pack("<I", ds.n_classes))
        parts.append(ds.labels.astype("<u4").tobytes())
    parts.append(ds.features.astype("<f4").tobytes())
    return b"".join(parts)


def dataset_from_bytes(buf: bytes, what: str = "dataset") -> EmbeddingDataset:
    r = _Reader(buf, what)
    check_header(r, DATASET_MAGIC)
    n, d, v, flags = r.unpack("IIIB")
    if flags & ~3:
        raise CorruptPayloadError(f"{what}: unknown flag bits {flags:#x}")
    labels = n_classes = None
    if flags & 1:
        (n_classes,) = r.unpack("I")
        labels = r.array("<u4", n).astype(np.int64)
    feats = r.array("<f4", n * v * d).reshape(n, v, d).astype(np.float32)
    r.finish()
    if not np.all(np.isfinite(feats)):
        raise CorruptPayloadError(f"{what}: NaN or Inf in feature payload")
    try:
        return EmbeddingDataset(feats, labels, n_classes, normalized=bool(flags & 2))
    except ValidationError as exc:
        raise CorruptPayloadError(f"{what}: {exc}") from exc


def write_dataset(ds: EmbeddingDataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def read_dataset(path) -> EmbeddingDataset:
    return dataset_from_bytes(Path(path).read_bytes(), what=str(path))


def neighbors_to_bytes(nbrs: NeighborIndex) -> bytes:
    ids = np.where(nbrs.ids == SENTINEL_ID, _U32_SENTINEL, nbrs.ids).astype("<u4")
    return b"".join([
        NEIGHBORS_MAGIC,
        struct.pack("<III", FORMAT_VERSION, nbrs.n, nbrs.k),
        ids.tobytes(),
        nbrs.sims.astype("<f4").tobytes(),
    ])


def neighbors_from_bytes(buf: bytes, what: str = "neighbors") -> NeighborIndex:
    r = _Reader(buf, what)
    check_header(r, NEIGHBORS_MAGIC)
    n, k = r.unpack("II")
    raw = r.array("<u4", n * k).reshape(n, k)
    sims = r.array("<f4", n * k).reshape(n, k).astype(np.float32)
    r.finish()
    empty = raw == _U32_SENTINEL
    if np.any(raw[~empty] >= n):
        raise CorruptPayloadError(f"{what}: neighbor id >= n={n}")
    if np.any(np.isnan(sims)) or np.any(np.isinf(sims) & ~(empty & (sims < 0))):
        raise CorruptPayloadError(f"{what}: invalid similarity values")
    ids = np.where(empty, SENTINEL_ID, raw.astype(np.int64))
    try:
        return NeighborIndex(ids, sims)
    except ValidationError as exc:
        raise CorruptPayloadError(f"{what}: {exc}") from exc


def write_neighbors(nbrs: NeighborIndex, path) -> None:
    Path(path).write_bytes(neighbors_to_bytes(nbrs))


def read_neighbors(path) -> NeighborIndex:
    return neighbors_from_bytes(Path(path).read_bytes(), what=str(path))


# -- JSON reports -------------------------------------------------------------

def write_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# -- synthetic benchmark ------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Gaussian mixture on the unit sphere standing in for pretext features.

    ``sep`` is the required minimum centroid distance in units of
    ``within_std``.  View 0 is the sample itself; each further view adds
    isotropic noise of scale ``view_jitter_std`` before normalization.
    """

    n: int = 5000
    d: int = 64
    c_true: int = 10
    v: int = 3
    sep: float = 10.0
    within_std: float = 0.1
    view_jitter_std: float = 0.05
    imbalance: Optional[Sequence[float]] = None
    seed: int = 0
    max_attempts: int = 10000

    def __post_init__(self):
        if self.sep <= 0 or self.within_std < 0 or self.view_jitter_std < 0:
            raise ValidationError("sep must be > 0 and standard deviations >= 0")
        if self.n < self.c_true or self.c_true < 1 or self.d < 1 or self.v < 1:
            raise ValidationError("need n >= c_true >= 1, d >= 1, v >= 1")
        if self.imbalance is not None:
            p = np.asarray(self.imbalance, dtype=np.float64)
            if p.shape != (self.c_true,) or np.any(p <= 0) or abs(p.sum() - 1) > 1e-9:
                raise ValidationError("imbalance must be c_true positive proportions summing to 1")


PRESETS = {
    "separated": SynthConfig(sep=10.0, within_std=0.1, view_jitter_std=0.05, seed=20200712),
    "overlap": SynthConfig(sep=2.5, within_std=0.3, view_jitter_std=0.05, seed=20200713),
}


def preset(name: str, **overrides) -> SynthConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return SynthConfig(**{**base.__dict__, **overrides})


def _class_sizes(cfg: SynthConfig) -> np.ndarray:
    """Largest-remainder apportionment of n samples; every class gets >= 1."""
    p = np.full(cfg.c_true, 1.0 / cfg.c_true) if cfg.imbalance is None else np.asarray(cfg.imbalance, float)
    rest = cfg.n - cfg.c_true
    raw = p * rest
    sizes = np.floor(raw).astype(np.int64)
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[: rest - sizes.sum()]] += 1
    return sizes + 1


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def generate_synthetic(cfg: SynthConfig) -> EmbeddingDataset:
    rng = seed_rng(cfg.seed)
    min_dist = cfg.sep * cfg.within_std
    centroids = []
    attempts = 0
    while len(centroids) < cfg.c_true:
        if attempts >= cfg.max_attempts:
            raise SynthesisError(
                f"could not place {cfg.c_true} centroids {min_dist:.3g} apart "
                f"in {cfg.max_attempts} attempts; lower sep or within_std"
            )
        attempts += 1
        cand = _unit(rng.standard_normal(cfg.d))
        if all(np.linalg.norm(cand - c) >= min_dist for c in centroids):
            centroids.append(cand)
    centroids = np.array(centroids)

    sizes = _class_sizes(cfg)
    labels = rng.permutation(np.repeat(np.arange(cfg.c_true), sizes))
    base = centroids[labels] + cfg.within_std * rng.standard_normal((cfg.n, cfg.d))
    views = np.repeat(base[:, None, :], cfg.v, axis=1)
    if cfg.v > 1:
        views[:, 1:, :] += cfg.view_jitter_std * rng.standard_normal((cfg.n, cfg.v - 1, cfg.d))
    feats = _unit(views).astype(np.float32)
    # re-normalize in float32 so the unit-norm invariant holds at storage precision
    feats /= np.linalg.norm(feats, axis=-1, keepdims=True)
    return EmbeddingDataset(feats, labels, cfg.c_true, normalized=True)
