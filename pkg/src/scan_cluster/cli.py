"""Command-line entry point: ``scan <subcommand> ...``.

Exit status is 0 on success, 2 for usage errors, 5 for missing files and
the ``exit_code`` of the raised :class:`~scan_cluster.errors.ScanError`
otherwise (format errors 10-14, synthesis 20, training 30-32, ...).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from .embio import (PRESETS, generate_synthetic, preset, read_dataset, read_neighbors,
                    write_dataset, write_json, write_neighbors)
from .errors import ScanError
from .kmeans import kmeans
from .knn import mine_neighbors, neighbor_purity, remove_false_positives
from .metrics import accuracy, ari, nmi
from .pipeline import run_pipeline, run_sweep
from .reports import evaluate
from .selflabel import self_label_train
from .state import read_state, write_state
from .trainer import train_clustering


def _resolved(path) -> dict:
    return cfgmod.resolve(cfgmod.load(path) if path else None)


def cmd_synth(args):
    overrides = {k: getattr(args, k) for k in ("n", "d", "c_true", "v", "sep", "within_std",
                                               "view_jitter_std", "seed") if getattr(args, k) is not None}
    ds = generate_synthetic(preset(args.preset, **overrides))
    write_dataset(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} d={ds.d} v={ds.v} classes={ds.n_classes}")


def cmd_mine(args):
    ds = read_dataset(args.input)
    nbrs = mine_neighbors(ds, args.k, metric=args.metric)
    if args.remove_false_positives:
        nbrs = remove_false_positives(nbrs, ds.labels)
    write_neighbors(nbrs, args.out)
    msg = f"wrote {args.out}: n={nbrs.n} k={nbrs.k}"
    if ds.labels is not None and nbrs.k:
        msg += f" purity={neighbor_purity(nbrs, ds.labels)[0]:.4f}"
    print(msg)


def cmd_train(args):
    cfg = _resolved(args.config)
    if args.clusters is not None:
        cfg["train"]["clusters"] = args.clusters
    ds = read_dataset(args.input)
    nbrs = read_neighbors(args.neighbors)
    state, history = train_clustering(ds, nbrs, cfgmod.train_config(cfg), int(cfg["train"]["clusters"]))
    write_state(state, args.out)
    if args.history:
        write_json(history, args.history)
    print(f"wrote {args.out}: selected head {history['selected_head']} at epoch {history['best_epoch']}")


def cmd_selflabel(args):
    cfg = _resolved(args.config)
    ds = read_dataset(args.input)
    state, history = self_label_train(ds, read_state(args.state), cfgmod.selflabel_config(cfg))
    write_state(state, args.out)
    if args.history:
        write_json(history, args.history)
    print(f"wrote {args.out}: {history['epochs']} epochs, stopped on {history['stopped']}, "
          f"{history['confident_counts'][-1]} confident")


def cmd_eval(args):
    ds = read_dataset(args.input)
    state = read_state(args.state)
    report = evaluate(state.prediction_head(), ds, overcluster=args.overcluster,
                      threshold=args.threshold).to_dict()
    write_json(report, args.report)
    print(f"acc={report['acc']:.4f} nmi={report['nmi']:.4f} ari={report['ari']:.4f} ({report['mapping_kind']})")


def cmd_kmeans(args):
    ds = read_dataset(args.input)
    assign, _, inertia = kmeans(ds, args.clusters, init=args.init, seed=args.seed)
    report = {"schema": "scan-kmeans/1", "clusters": args.clusters, "init": args.init, "seed": args.seed,
              "inertia": inertia, "cluster_sizes": [int((assign == c).sum()) for c in range(args.clusters)],
              "assignments": assign.tolist()}
    if ds.labels is not None:
        kind = "one_to_one" if args.clusters == ds.n_classes else "many_to_one"
        acc, mapping = accuracy(assign, ds.labels, kind, args.clusters, ds.n_classes)
        report.update(acc=acc, mapping=mapping.tolist(), mapping_kind=kind,
                      nmi=nmi(assign, ds.labels), ari=ari(assign, ds.labels))
    write_json(report, args.report)
    print(f"inertia={inertia:.4f}" + (f" acc={report['acc']:.4f}" if "acc" in report else ""))


def cmd_pipeline(args):
    cfg = cfgmod.load(args.config) if args.config else None
    report = run_pipeline(cfg, args.out, resume=args.resume)
    if "acc" in report:
        print(f"acc={report['acc']:.4f} nmi={report['nmi']:.4f} ari={report['ari']:.4f}")
    print(f"report: {args.out}/report.json")


def cmd_sweep(args):
    cfg = cfgmod.load(args.config) if args.config else None
    values = [cfgmod.parse_value(v) for v in args.values.split(",")]
    rows = run_sweep(args.param, values, cfg, args.out, resume=args.resume)
    for row in rows:
        print(f"{row['parameter']}={row['value']}: acc={row['acc']}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scan", description="Nearest-neighbor semantic clustering of embeddings.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    s.add_argument("--preset", choices=sorted(PRESETS), default="separated")
    for name, typ in (("n", int), ("d", int), ("c-true", int), ("v", int), ("sep", float),
                      ("within-std", float), ("view-jitter-std", float), ("seed", int)):
        s.add_argument(f"--{name}", type=typ)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("mine", help="mine exact k nearest neighbors on view 0")
    s.add_argument("--input", required=True)
    s.add_argument("--k", type=int, default=20, help="neighbors per sample (default 20)")
    s.add_argument("--metric", choices=["cosine", "l2"], default="cosine")
    s.add_argument("--remove-false-positives", action="store_true",
                   help="drop neighbors of another class (upper-bound experiments; needs labels)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mine)

    s = sub.add_parser("train", help="clustering step: train heads with the neighbor-consistency loss")
    s.add_argument("--input", required=True)
    s.add_argument("--neighbors", required=True)
    s.add_argument("--clusters", type=int)
    s.add_argument("--config", help="config file; its [train] section is used")
    s.add_argument("--out", required=True)
    s.add_argument("--history")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("selflabel", help="self-labeling step on confident predictions")
    s.add_argument("--input", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--config", help="config file; its [selflabel] section is used")
    s.add_argument("--out", required=True)
    s.add_argument("--history")
    s.set_defaults(func=cmd_selflabel)

    s = sub.add_parser("eval", help="evaluate a checkpoint against ground-truth labels")
    s.add_argument("--input", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--overcluster", action="store_true", help="many-to-one (majority) cluster mapping")
    s.add_argument("--threshold", type=float, default=0.99, help="confidence for confident_fraction")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("kmeans", help="k-means baseline on view 0")
    s.add_argument("--input", required=True)
    s.add_argument("--clusters", type=int, required=True)
    s.add_argument("--init", choices=["kmeanspp", "random"], default="kmeanspp")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_kmeans)

    s = sub.add_parser("pipeline", help="mine, cluster, self-label and evaluate")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--resume", action="store_true", help="reuse stage artifacts found in --out")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("sweep", help="one pipeline run per parameter value")
    s.add_argument("--config")
    s.add_argument("--param", choices=["k", "lambda", "threshold"], required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True)
    s.add_argument("--resume", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ScanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
