"""End-to-end runs (mine, cluster, self-label, evaluate) and parameter sweeps.

Every stage writes its artifact into the output directory; with
``resume=True`` a stage whose artifact already exists is loaded instead of
recomputed.  ``report.json`` holds only deterministic content; wall-clock
timings go to ``timing.json``.
"""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

from . import config as cfgmod
from .embio import generate_synthetic, read_dataset, read_json, read_neighbors, write_dataset, write_json, write_neighbors
from .errors import ScanError, StageError
from .knn import inject_neighbor_noise, mine_neighbors, neighbor_purity, remove_false_positives
from .reports import evaluate, low_confidence_report, prototypes
from .selflabel import self_label_train
from .state import read_state, write_state
from .trainer import marginal_entropy, train_clustering

log = logging.getLogger(__name__)

REPORT_SCHEMA = "scan-report/1"
SWEEP_KEYS = {"k": ("train.k", "mine.k"), "lambda": ("train.entropy_weight",),
              "threshold": ("selflabel.threshold",)}


class _Stage:
    def __init__(self, name: str, timings: dict):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            if isinstance(exc, (ScanError, OSError, ValueError)):
                raise StageError(self.name, exc) from exc
        return False


def _cached(path: Path, resume: bool, load, build, save):
    if resume and path.exists():
        log.info("reusing %s", path)
        return load(path)
    obj = build()
    save(obj, path)
    return obj


def run_pipeline(config: dict | None, out_dir, resume: bool = False) -> dict:
    """Run every stage and return the report dict (also written to ``report.json``)."""
    cfg = cfgmod.resolve(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict = {}

    with _Stage("data", timings):
        if cfg["data"]["input"]:
            ds = read_dataset(cfg["data"]["input"])
        else:
            synth = cfgmod.synth_config(cfg)
            ds = _cached(out / "dataset.semb", resume, read_dataset,
                         lambda: generate_synthetic(synth), write_dataset)

    with _Stage("mine", timings):
        m = cfg["mine"]

        def build_neighbors():
            nbrs = mine_neighbors(ds, int(m["k"]), metric=m["metric"])
            if m["noise_fraction"]:
                nbrs = inject_neighbor_noise(nbrs, ds.labels, float(m["noise_fraction"]),
                                             int(m["noise_seed"]), m["noise_mode"])
            if m["remove_false_positives"]:
                nbrs = remove_false_positives(nbrs, ds.labels)
            return nbrs

        nbrs = _cached(out / "neighbors.sknn", resume, read_neighbors, build_neighbors, write_neighbors)

    with _Stage("train", timings):
        tcfg = cfgmod.train_config(cfg)
        hist_path = out / "cluster_history.json"
        if resume and (out / "cluster.sckpt").exists() and hist_path.exists():
            state, cluster_hist = read_state(out / "cluster.sckpt"), read_json(hist_path)
        else:
            state, cluster_hist = train_clustering(ds, nbrs, tcfg, int(cfg["train"]["clusters"]))
            write_state(state, out / "cluster.sckpt")
            write_json(cluster_hist, hist_path)

    sl_hist = None
    if cfg["selflabel"]["enabled"]:
        with _Stage("selflabel", timings):
            scfg = cfgmod.selflabel_config(cfg)
            hist_path = out / "selflabel_history.json"
            if resume and (out / "selflabel.sckpt").exists() and hist_path.exists():
                final_state, sl_hist = read_state(out / "selflabel.sckpt"), read_json(hist_path)
            else:
                final_state, sl_hist = self_label_train(ds, state, scfg)
                write_state(final_state, out / "selflabel.sckpt")
                write_json(sl_hist, hist_path)
    else:
        final_state = state

    with _Stage("eval", timings):
        report = build_report(cfg, ds, nbrs, state, final_state, cluster_hist, sl_hist)
        write_json(report, out / "report.json")
    write_json({k: round(v, 6) for k, v in timings.items()}, out / "timing.json")
    return report


def build_report(cfg, ds, nbrs, cluster_state, final_state, cluster_hist, sl_hist) -> dict:
    e = cfg["eval"]
    threshold = float(cfg["selflabel"]["threshold"])
    head = final_state.prediction_head()
    report = {
        "schema": REPORT_SCHEMA,
        "config": cfg,
        "n": ds.n,
        "n_clusters": head.n_clusters,
        "marginal_entropy": marginal_entropy(head, ds),
        "clustering_step": {
            "selected_head": cluster_hist["selected_head"],
            "best_epoch": cluster_hist["best_epoch"],
            "marginal_entropy": marginal_entropy(cluster_state.prediction_head(), ds),
        },
        "selflabel": None if sl_hist is None else {
            "epochs": sl_hist["epochs"], "stopped": sl_hist["stopped"],
            "confident_counts": sl_hist["confident_counts"], "monotone": sl_hist["monotone"],
        },
        "prototypes": prototypes(head, ds, int(e["prototypes_per_cluster"])),
        "low_confidence": [int(i) for i in low_confidence_report(head, ds, int(e["low_confidence"]))],
    }
    if ds.labels is not None:
        overcluster = bool(e["overcluster"])
        report.update(evaluate(head, ds, overcluster, threshold).to_dict())
        step = evaluate(cluster_state.prediction_head(), ds, overcluster, threshold)
        report["clustering_step"].update(acc=step.acc, nmi=step.nmi, ari=step.ari)
        if nbrs.k:
            report["neighbor_purity"] = neighbor_purity(nbrs, ds.labels)[0]
    return report


def run_sweep(parameter: str, values, base_config: dict | None, out_dir, resume: bool = False) -> list:
    """One pipeline per value; every run uses the base seeds so runs are paired.

    Writes ``sweep.json`` and ``sweep.csv`` to ``out_dir``.
    """
    if parameter not in SWEEP_KEYS:
        raise cfgmod.ConfigError(f"cannot sweep {parameter!r}; choose from {sorted(SWEEP_KEYS)}")
    base = cfgmod.resolve(base_config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        cfg = base
        for key in SWEEP_KEYS[parameter]:
            cfg = cfgmod.set_value(cfg, key, value)
        run_dir = out / f"{parameter}={cfgmod.format_value(value)}"
        report = run_pipeline(cfg, run_dir, resume=resume)
        rows.append({
            "parameter": parameter,
            "value": value,
            "acc": report.get("acc"),
            "nmi": report.get("nmi"),
            "ari": report.get("ari"),
            "clustering_acc": report["clustering_step"].get("acc"),
            "marginal_entropy": report["marginal_entropy"],
            "report": str(run_dir / "report.json"),
        })
    write_json(rows, out / "sweep.json")
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["parameter"])
        writer.writeheader()
        writer.writerows(rows)
    return rows
