"""Evaluation reports, prototypes and low-confidence listings for a trained head."""

from __future__ import annotations

import numpy as np

from .core import EmbeddingDataset, EvalReport
from .errors import ValidationError
from .head import ClusterHead
from .metrics import accuracy, ari, confusion_matrix, nmi


def predict(head: ClusterHead, ds: EmbeddingDataset, view: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Hard assignments and the full probability matrix for one view."""
    probs = head.predict_proba(ds.view(view))
    return probs.argmax(axis=1), probs


def evaluate(head: ClusterHead, ds: EmbeddingDataset, overcluster: bool = False,
             threshold: float = 0.99) -> EvalReport:
    """ACC/NMI/ARI against ground truth plus the confident fraction at ``threshold``.

    One-to-one Hungarian mapping by default; ``overcluster`` switches to the
    majority (many-to-one) mapping, which also applies whenever the head has
    a different number of clusters than there are classes.
    """
    if ds.labels is None:
        raise ValidationError("evaluation needs a dataset with labels")
    pred, probs = predict(head, ds)
    kind = "many_to_one" if overcluster or head.n_clusters != ds.n_classes else "one_to_one"
    acc, mapping = accuracy(pred, ds.labels, kind, head.n_clusters, ds.n_classes)
    return EvalReport(
        acc=acc,
        nmi=nmi(pred, ds.labels),
        ari=ari(pred, ds.labels),
        mapping=[int(m) for m in mapping],
        mapping_kind=kind,
        confusion=confusion_matrix(pred, ds.labels, mapping, ds.n_classes),
        confident_fraction=float(np.mean(probs.max(axis=1) > threshold)),
    )


def prototypes(head: ClusterHead, ds: EmbeddingDataset, per_cluster: int = 10) -> list:
    """Per cluster, the most typical sample among its most confident members.

    Takes the ``per_cluster`` samples assigned to the cluster with the
    highest probability for it, averages their view-0 embeddings and returns
    the member closest to that mean by cosine similarity (lower id on ties).
    Clusters with no assigned samples yield ``None``.
    """
    pred, probs = predict(head, ds)
    x = ds.view(0).astype(np.float64)
    out = []
    for c in range(head.n_clusters):
        members = np.flatnonzero(pred == c)
        if members.size == 0:
            out.append(None)
            continue
        order = np.lexsort((members, -probs[members, c]))
        top = members[order[:per_cluster]]
        mean = x[top].mean(axis=0)
        norms = np.linalg.norm(x[top], axis=1) * np.linalg.norm(mean)
        cos = np.divide(x[top] @ mean, norms, out=np.zeros(top.size), where=norms > 0)
        best = np.lexsort((top, -cos))[0]
        out.append(int(top[best]))
    return out


def low_confidence_report(head: ClusterHead, ds: EmbeddingDataset, count: int) -> np.ndarray:
    """Ids of the ``count`` samples with the smallest max-probability, ascending."""
    _, probs = predict(head, ds)
    pmax = probs.max(axis=1)
    return np.lexsort((np.arange(ds.n), pmax))[:max(count, 0)]
