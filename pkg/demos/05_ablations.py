"""
Parameter sweeps
================

Sweep the neighbor count on the overlapping benchmark.  Every run uses the
same seeds, so differences come from the parameter alone.  Reduced sizes
keep this to about a minute.
"""

from scan_cluster import config as cfgmod
from scan_cluster import run_sweep

base = cfgmod.resolve(cfgmod.load("configs/overlap.cfg"))
base["data"]["n"] = 2000
base["train"].update(epochs=40, heads=3)
base["selflabel"]["enabled"] = False

rows = run_sweep("k", [0, 5, 20], base, "demo_runs/sweep_k")
for r in rows:
    print(f"K={r['value']:>2}: ACC {r['acc']:.4f}  NMI {r['nmi']:.4f}  marginal entropy {r['marginal_entropy']:.3f}")
print("table written to demo_runs/sweep_k/sweep.csv")
