"""
Tuning the leaf capacity
========================

Sweep powers of two for one family and watch where each flavour bottoms
out. Learned leaves can afford to be much larger, because a lookup touches
only the error band instead of the whole leaf.
"""

import sys

import numpy as np

from ifindex import bench
from ifindex.builders import Family
from ifindex.workload import gen_point_queries, make_dataset

family = sys.argv[1] if len(sys.argv) > 1 else "rtree"
ds = make_dataset("skewed", 300_000, 2, seed=7)
wl = gen_point_queries(ds, 20_000, seed=3)
spec = bench.SweepSpec(capacities=tuple(2 ** i for i in range(2, 16)),
                       families=(Family.parse(family),))

reports = bench.run_sweep(ds, spec, wl, repeats=3)
print(f"{'variant':12s} {'capacity':>8s} {'ns/query':>9s} {'footprint':>10s}")
for r in reports:
    print(f"{r.variant:12s} {r.leaf_capacity:8d} {np.median(r.pass_ms) * 1e6 / len(wl):9.0f} "
          f"{r.footprint_bytes:10d}")

best = bench.best_capacities(reports)
for (fam, learned), cap in sorted(best.items()):
    print(f"best capacity {'learned' if learned else 'plain':8s}: {cap}")
