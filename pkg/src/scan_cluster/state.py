"""TrainState and its checkpoint format (``.sckpt``).

Layout, little-endian throughout::

    magic "SCANCKP1"; u32 version = 1
    u8  head kind (0 linear, 1 mlp); u32 n_clusters, dim, hidden
    f64 head parameters, in order: [hidden_weight, hidden_bias,] weight, bias
    u8  optimizer kind (0 adam, 1 sgd)
    f64 lr, weight_decay, beta1, beta2, eps, momentum
    u64 optimizer step
    f64 buffers: adam m.<p> for every p, then v.<p>; sgd momentum.<p>
    u8  has_ema; f64 ema_alpha; f64 shadow parameters if has_ema
    u8  has_rng; if set: u64 state_lo, state_hi, inc_lo, inc_hi; u8 has_uint32; u32 uinteger
    u64 epochs trained

Array shapes are implied by the head header, so parameters are stored raw.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import OptimizerConfig
from .embio import FORMAT_VERSION, _Reader, check_header
from .errors import CorruptPayloadError
from .head import ClusterHead
from .optim import Optimizer

CHECKPOINT_MAGIC = b"SCANCKP1"
_MASK64 = (1 << 64) - 1


@dataclass
class TrainState:
    head: ClusterHead
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    optimizer_state: Optional[dict] = None
    ema: Optional[dict] = None
    ema_alpha: float = 0.0
    rng_state: Optional[dict] = None
    epochs: int = 0

    def __post_init__(self):
        if self.optimizer_state is None:
            self.optimizer_state = Optimizer(self.optimizer, self.head.params).state

    def prediction_head(self) -> ClusterHead:
        """The head used for predictions: EMA shadow weights when tracked."""
        return self.head.with_params(self.ema) if self.ema is not None else self.head

    def buffer_names(self) -> list:
        names = self.head.param_names
        prefixes = ("m", "v") if self.optimizer.kind == "adam" else ("momentum",)
        return [f"{pre}.{n}" for pre in prefixes for n in names]


def _shapes(head: ClusterHead) -> dict:
    c, d, h = head.n_clusters, head.dim, head.hidden
    if head.kind == "linear":
        return {"weight": (c, d), "bias": (c,)}
    return {"hidden_weight": (h, d), "hidden_bias": (h,), "weight": (c, h), "bias": (c,)}


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def state_to_bytes(st: TrainState) -> bytes:
    h = st.head
    out = [CHECKPOINT_MAGIC, struct.pack("<IBIII", FORMAT_VERSION, 0 if h.kind == "linear" else 1,
                                         h.n_clusters, h.dim, h.hidden)]
    out += [_f64(h.params[n]) for n in h.param_names]
    o = st.optimizer
    out.append(struct.pack("<B6dQ", 0 if o.kind == "adam" else 1, o.lr, o.weight_decay,
                           o.beta1, o.beta2, o.eps, o.momentum, st.optimizer_state["step"]))
    out += [_f64(st.optimizer_state["buffers"][n]) for n in st.buffer_names()]
    out.append(struct.pack("<Bd", st.ema is not None, st.ema_alpha))
    if st.ema is not None:
        out += [_f64(st.ema[n]) for n in h.param_names]
    out.append(struct.pack("<B", st.rng_state is not None))
    if st.rng_state is not None:
        s = st.rng_state
        if s.get("bit_generator") != "PCG64":
            raise ValueError("only PCG64 generator state can be checkpointed")
        state, inc = s["state"]["state"], s["state"]["inc"]
        out.append(struct.pack("<4QBI", state & _MASK64, state >> 64, inc & _MASK64, inc >> 64,
                               s["has_uint32"], s["uinteger"]))
    out.append(struct.pack("<Q", st.epochs))
    return b"".join(out)


def state_from_bytes(buf: bytes, what: str = "checkpoint") -> TrainState:
    r = _Reader(buf, what)
    check_header(r, CHECKPOINT_MAGIC)
    kind_code, c, d, hidden = r.unpack("BIII")
    if kind_code > 1:
        raise CorruptPayloadError(f"{what}: unknown head kind {kind_code}")
    kind = "linear" if kind_code == 0 else "mlp"
    skeleton = ClusterHead(kind, c, d, {}, hidden)
    shapes = _shapes(skeleton)

    def arrays(names):
        out = {}
        for n in names:
            shape = shapes[n.split(".")[-1]]
            out[n] = r.array("<f8", int(np.prod(shape))).reshape(shape).astype(np.float64)
        return out

    head = ClusterHead(kind, c, d, arrays(skeleton.param_names), hidden)
    opt_code, lr, wd, b1, b2, eps, mom, step = r.unpack("B6dQ")
    if opt_code > 1:
        raise CorruptPayloadError(f"{what}: unknown optimizer kind {opt_code}")
    opt = OptimizerConfig("adam" if opt_code == 0 else "sgd", lr, wd, b1, b2, eps, mom)
    st = TrainState(head, opt, {"step": step, "buffers": {}})
    st.optimizer_state["buffers"] = arrays(st.buffer_names())
    has_ema, st.ema_alpha = r.unpack("Bd")
    if has_ema:
        st.ema = arrays(head.param_names)
    (has_rng,) = r.unpack("B")
    if has_rng:
        s_lo, s_hi, i_lo, i_hi, has_u32, uint = r.unpack("4QBI")
        st.rng_state = {
            "bit_generator": "PCG64",
            "state": {"state": s_lo | (s_hi << 64), "inc": i_lo | (i_hi << 64)},
            "has_uint32": has_u32,
            "uinteger": uint,
        }
    (st.epochs,) = r.unpack("Q")
    r.finish()
    for arr in [*head.params.values(), *st.optimizer_state["buffers"].values(), *(st.ema or {}).values()]:
        if not np.all(np.isfinite(arr)):
            raise CorruptPayloadError(f"{what}: non-finite parameter values")
    return st


def write_state(st: TrainState, path) -> None:
    Path(path).write_bytes(state_to_bytes(st))


def read_state(path) -> TrainState:
    return state_from_bytes(Path(path).read_bytes(), what=str(path))


def restore_rng(st: TrainState) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = st.rng_state
    return np.random.Generator(bg)
