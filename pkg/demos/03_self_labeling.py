"""
Self-labeling on confident predictions
======================================

Start from a clustering head trained on a deliberately noisy neighbor prior,
then fine-tune on the samples it is already confident about, using the
strong views only.
"""

from scan_cluster import config as cfgmod
from scan_cluster import evaluate, run_pipeline
from scan_cluster.selflabel import select_confident
from scan_cluster.state import read_state
from scan_cluster.embio import read_dataset

cfg = cfgmod.resolve(cfgmod.load("configs/noisy_neighbors.cfg"))
report = run_pipeline(cfg, "demo_runs/noisy_neighbors")
print(f"neighbor purity {report['neighbor_purity']:.3f}")
print(f"clustering step ACC {report['clustering_step']['acc']:.4f} -> after self-labeling {report['acc']:.4f}")
sl = report["selflabel"]
print(f"self-labeling ran {sl['epochs']} epochs, stopped on {sl['stopped']}; "
      f"confident samples {sl['confident_counts'][0]} -> {sl['confident_counts'][-1]}")

# the confident subset is much cleaner than the whole dataset
ds = read_dataset("demo_runs/noisy_neighbors/dataset.semb")
head = read_state("demo_runs/noisy_neighbors/cluster.sckpt").prediction_head()
mapping = evaluate(head, ds).mapping
for t in (0.5, 0.9, 0.99):
    ids, pseudo, _ = select_confident(head, ds, t)
    hit = sum(mapping[p] == ds.labels[i] for i, p in zip(ids, pseudo)) / max(len(ids), 1)
    print(f"threshold {t}: {len(ids):5d} confident, pseudo-label accuracy {hit:.4f}")
