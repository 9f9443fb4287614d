"""Clustering heads: a linear layer or a one-hidden-layer ReLU MLP, then softmax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import softmax
from .errors import ValidationError

LINEAR_PARAMS = ("weight", "bias")
MLP_PARAMS = ("hidden_weight", "hidden_bias", "weight", "bias")


@dataclass
class ClusterHead:
    """Parameters of the clustering function, float64.

    ``weight`` always maps into the ``n_clusters`` logits; for ``kind="mlp"``
    a ``hidden_weight``/``hidden_bias`` ReLU layer of width ``hidden`` comes first.
    """

    kind: str
    n_clusters: int
    dim: int
    params: dict
    hidden: int = 0

    @property
    def param_names(self) -> tuple:
        return LINEAR_PARAMS if self.kind == "linear" else MLP_PARAMS

    @classmethod
    def init(cls, n_clusters: int, dim: int, rng: np.random.Generator,
             kind: str = "linear", hidden: int = 128) -> "ClusterHead":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every parameter."""
        if n_clusters < 1 or dim < 1:
            raise ValidationError("n_clusters and dim must be >= 1")

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        if kind == "linear":
            params = {"weight": uniform((n_clusters, dim), dim), "bias": uniform(n_clusters, dim)}
            hidden = 0
        elif kind == "mlp":
            params = {
                "hidden_weight": uniform((hidden, dim), dim),
                "hidden_bias": uniform(hidden, dim),
                "weight": uniform((n_clusters, hidden), hidden),
                "bias": uniform(n_clusters, hidden),
            }
        else:
            raise ValidationError(f"unknown head kind {kind!r}")
        return cls(kind, n_clusters, dim, params, hidden)

    @classmethod
    def zeros(cls, n_clusters: int, dim: int, kind: str = "linear", hidden: int = 0) -> "ClusterHead":
        head = cls.init(n_clusters, dim, np.random.default_rng(0), kind, hidden or 1)
        return head.with_params({k: np.zeros_like(v) for k, v in head.params.items()})

    def with_params(self, params: dict) -> "ClusterHead":
        return ClusterHead(self.kind, self.n_clusters, self.dim,
                           {k: np.array(params[k], dtype=np.float64) for k in self.param_names},
                           self.hidden)

    def copy(self) -> "ClusterHead":
        return self.with_params(self.params)

    def _check(self, x: np.ndarray, validate: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not validate:
            return x
        if x.shape[-1] != self.dim:
            raise ValidationError(f"input dimension {x.shape[-1]} != head dimension {self.dim}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("head input contains non-finite values")
        return x

    def forward(self, x, validate: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(logits, probabilities)`` for one vector or a batch of rows.

        ``validate=False`` skips the shape/finiteness checks (training inner loops).
        """
        x = self._check(x, validate)
        p = self.params
        if self.kind == "mlp":
            x = np.maximum(x @ p["hidden_weight"].T + p["hidden_bias"], 0.0)
        logits = x @ p["weight"].T + p["bias"]
        if not validate:
            e = np.exp(logits - logits.max(axis=-1, keepdims=True))
            return logits, e / e.sum(axis=-1, keepdims=True)
        return logits, softmax(logits)

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(x)[1]

    def backward(self, x, grad_logits: np.ndarray) -> dict:
        """Parameter gradients given d(loss)/d(logits) for a batch of rows."""
        x = self._check(x, validate=False)
        p = self.params
        if self.kind == "linear":
            return {"weight": grad_logits.T @ x, "bias": grad_logits.sum(axis=0)}
        pre = x @ p["hidden_weight"].T + p["hidden_bias"]
        h = np.maximum(pre, 0.0)
        grad_h = (grad_logits @ p["weight"]) * (pre > 0)
        return {
            "hidden_weight": grad_h.T @ x,
            "hidden_bias": grad_h.sum(axis=0),
            "weight": grad_logits.T @ h,
            "bias": grad_logits.sum(axis=0),
        }


def softmax_backward(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Chain rule through softmax, row-wise: p * (g - <g, p>)."""
    return probs * (grad_probs - np.sum(grad_probs * probs, axis=-1, keepdims=True))


def permute_clusters(head: ClusterHead, perm) -> ClusterHead:
    """Reorder output clusters so that new cluster ``i`` is old cluster ``perm[i]``."""
    perm = np.asarray(perm)
    params = dict(head.params)
    params["weight"] = head.params["weight"][perm]
    params["bias"] = head.params["bias"][perm]
    return head.with_params(params)
