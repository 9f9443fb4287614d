"""Fine-tuning a clustering head on its own confident predictions.

Each epoch re-selects confident samples on the weak view (view 0), then
fits the head to those pseudo-labels with a class-balanced cross-entropy
computed on strong views (views >= 1).  Training never sees view 0.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import EmbeddingDataset, OptimizerConfig, seed_rng
from .errors import NoConfidentSamplesError, ValidationError
from .head import ClusterHead
from .metrics import accuracy
from .optim import Optimizer, ema_update
from .state import TrainState, restore_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelfLabelConfig:
    threshold: float = 0.99
    epochs: int = 200
    batch_size: int = 128
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    ema_alpha: Optional[float] = None
    class_balance: bool = True
    plateau_window: int = 5
    plateau_growth: float = 1e-3
    noise_std: Optional[float] = None  # experimental stand-in for strong views when v == 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValidationError("threshold must lie in (0, 1)")
        if self.plateau_window < 2:
            raise ValidationError("plateau window must be >= 2")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("epochs must be >= 0 and batch_size >= 1")
        if self.ema_alpha is not None and not 0 <= self.ema_alpha < 1:
            raise ValidationError("ema_alpha must lie in [0, 1)")


def select_confident(head: ClusterHead, ds: EmbeddingDataset, threshold: float):
    """Samples whose weak-view max-probability exceeds ``threshold``.

    Returns ``(ids, pseudo_labels, confidences)``, ids ascending.
    """
    if not 0 < threshold < 1:
        raise ValidationError("threshold must lie in (0, 1)")
    probs = head.predict_proba(ds.view(0))
    pmax = probs.max(axis=1)
    ids = np.flatnonzero(pmax > threshold)
    return ids, probs[ids].argmax(axis=1), pmax[ids]


def balanced_class_weights(labels, n_clusters: int) -> np.ndarray:
    """w_c = B / (C_present * count_c) for classes present in the batch, 0 otherwise."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=n_clusters).astype(np.float64)
    present = counts > 0
    w = np.zeros(n_clusters)
    w[present] = labels.size / (present.sum() * counts[present])
    return w


def weighted_ce_loss(head: ClusterHead, x, labels, class_weights=None) -> tuple[float, dict]:
    """Weighted cross-entropy ``-sum_i w_{y_i} ln p_{y_i}(x_i) / sum_i w_{y_i}`` and its gradient.

    ``class_weights=None`` gives the plain mean cross-entropy.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ValidationError("empty batch")
    if y.min() < 0 or y.max() >= head.n_clusters:
        raise ValidationError(f"pseudo-label outside [0, {head.n_clusters})")
    w = np.ones(head.n_clusters) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    wy = w[y]
    if np.any(wy <= 0):
        raise ValidationError("class weights of present labels must be positive")
    logits, probs = head.forward(x)
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(y.size)
    total_w = wy.sum()
    loss = float(-np.sum(wy * log_p[rows, y]) / total_w)
    grad_logits = probs.copy()
    grad_logits[rows, y] -= 1.0
    grad_logits *= (wy / total_w)[:, None]
    return loss, head.backward(x, grad_logits)


def _strong_rows(rng, ds: EmbeddingDataset, ids: np.ndarray, noise_std) -> np.ndarray:
    if ds.v >= 2:
        views = rng.integers(1, ds.v, size=ids.size)
        return ds.features[ids, views].astype(np.float64)
    x = ds.features[ids, 0].astype(np.float64)
    return x + noise_std * rng.standard_normal(x.shape)


def _plateaued(counts: list, window: int, growth: float) -> bool:
    if len(counts) <= window:
        return False
    old = counts[-1 - window]
    return counts[-1] - old < growth * max(old, 1)


def self_label_train(ds: EmbeddingDataset, state: TrainState, cfg: SelfLabelConfig) -> tuple[TrainState, dict]:
    """Run self-labeling from ``state`` until the confident count plateaus.

    The returned state carries fresh optimizer buffers for ``cfg.optimizer``
    and, with ``cfg.ema_alpha`` set, an EMA shadow that is used for every
    confident-sample selection and for the final predictions.
    """
    if ds.v < 2 and cfg.noise_std is None:
        raise ValidationError("self-labeling needs strong views (v >= 2) or noise_std for the noise fallback")
    head = state.prediction_head().copy()
    ids, _, _ = select_confident(head, ds, cfg.threshold)
    if ids.size == 0:
        raise NoConfidentSamplesError(
            f"no sample exceeds confidence {cfg.threshold}: lower the threshold or train the clustering step longer")

    rng = restore_rng(state) if state.rng_state is not None else seed_rng(cfg.seed)
    opt = Optimizer(cfg.optimizer, head.params)
    ema = copy.deepcopy(head.params) if cfg.ema_alpha is not None else None

    def predictor() -> ClusterHead:
        return head.with_params(ema) if ema is not None else head

    def record(h: ClusterHead) -> tuple[int, Optional[float]]:
        sel, _, _ = select_confident(h, ds, cfg.threshold)
        if ds.labels is None:
            return sel.size, None
        pred = h.predict_proba(ds.view(0)).argmax(axis=1)
        return sel.size, accuracy(pred, ds.labels, "one_to_one" if h.n_clusters == ds.n_classes else "many_to_one",
                                  h.n_clusters, ds.n_classes)[0]

    count, acc = record(head)
    counts, accs = [count], [acc]
    stopped = "budget"
    epochs_run = 0
    for epoch in range(cfg.epochs):
        sel, pseudo, _ = select_confident(predictor(), ds, cfg.threshold)
        if sel.size == 0:
            stopped = "empty"
            break
        order = rng.permutation(sel.size)
        for start in range(0, sel.size, cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            x = _strong_rows(rng, ds, sel[b], cfg.noise_std)
            w = balanced_class_weights(pseudo[b], head.n_clusters) if cfg.class_balance else None
            _, grads = weighted_ce_loss(head, x, pseudo[b], w)
            opt.step(head.params, grads)
            if ema is not None:
                ema_update(ema, head.params, cfg.ema_alpha)
        epochs_run = epoch + 1
        count, acc = record(predictor())
        counts.append(count)
        accs.append(acc)
        log.debug("self-label epoch %d: %d confident", epochs_run, count)
        if _plateaued(counts, cfg.plateau_window, cfg.plateau_growth):
            stopped = "plateau"
            break

    new_state = TrainState(head.copy(), cfg.optimizer, opt.state, ema,
                           cfg.ema_alpha if ema is not None else 0.0,
                           rng.bit_generator.state, state.epochs + epochs_run)
    history = {
        "confident_counts": counts,
        "acc": accs,
        "epochs": epochs_run,
        "stopped": stopped,
        "monotone": bool(np.all(np.diff(counts) >= 0)),
    }
    return new_state, history
