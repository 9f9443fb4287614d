"""Hand-written optimizers over dicts of float64 arrays, plus parameter EMA.

Weight decay is decoupled: it shrinks weight matrices directly
(``p -= lr * wd * p``) and never passes through the Adam moments.  Bias
vectors are not decayed.
"""

from __future__ import annotations

import numpy as np

from .core import OptimizerConfig


def _decays(name: str) -> bool:
    return name.endswith("weight")


class Optimizer:
    """Adam or SGD-with-momentum, selected by ``config.kind``.

    ``state`` holds the step counter and per-parameter buffers
    (``m``/``v`` for Adam, ``momentum`` for SGD) so it can be checkpointed.
    """

    def __init__(self, config: OptimizerConfig, params: dict, state: dict | None = None):
        self.config = config
        if state is None:
            state = {"step": 0, "buffers": {}}
            for name, p in params.items():
                if config.kind == "adam":
                    state["buffers"][f"m.{name}"] = np.zeros_like(p)
                    state["buffers"][f"v.{name}"] = np.zeros_like(p)
                else:
                    state["buffers"][f"momentum.{name}"] = np.zeros_like(p)
        self.state = state

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place."""
        cfg = self.config
        self.state["step"] += 1
        t = self.state["step"]
        buf = self.state["buffers"]
        for name, p in params.items():
            g = grads[name]
            if cfg.weight_decay and _decays(name):
                p -= cfg.lr * cfg.weight_decay * p
            if cfg.kind == "adam":
                m, v = buf[f"m.{name}"], buf[f"v.{name}"]
                m *= cfg.beta1
                m += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                m_hat = m / (1 - cfg.beta1 ** t)
                v_hat = v / (1 - cfg.beta2 ** t)
                p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
            else:
                mom = buf[f"momentum.{name}"]
                mom *= cfg.momentum
                mom += g
                p -= cfg.lr * mom


def ema_update(shadow: dict, params: dict, alpha: float) -> None:
    """shadow <- alpha * shadow + (1 - alpha) * params, in place."""
    for name, p in params.items():
        shadow[name] *= alpha
        shadow[name] += (1 - alpha) * p
