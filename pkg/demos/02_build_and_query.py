"""
Plain and learned indexes side by side
======================================

Build every family in both flavours over the same skewed points, run the
same queries, and compare answers and internal footprint.
"""

import numpy as np

from ifindex import bench
from ifindex.builders import BuildConfig, Family, build
from ifindex.geometry import MBR
from ifindex.query_engine import point_query, range_query
from ifindex.workload import make_dataset

ds = make_dataset("skewed", 200_000, 2, seed=1)
probe = ds.points[12_345]
box = MBR([0.2, 0.2], [0.21, 0.23])

# brute-force answers to check against
expect_point = set(np.flatnonzero(np.all(ds.points == probe, axis=1)).tolist())
expect_range = set(np.flatnonzero(np.all((ds.points >= box.lo) & (ds.points <= box.hi), axis=1)).tolist())
print(f"{len(expect_point)} record(s) at the probe, {len(expect_range)} inside the box\n")

for fam in Family:
    for learned in (False, True):
        cap = 512 if learned else 16
        cfg = BuildConfig(fam, learned, cap)
        tree = build(ds.points, cfg=cfg)
        p = point_query(tree, probe)
        r = range_query(tree, box)
        assert p.ids == expect_point and r.ids == expect_range
        print(f"{cfg.label():12s} cap {cap:4d}: footprint {bench.measure_footprint(tree):9d} B, "
              f"point query read {p.stats.records_compared:4d} records, "
              f"range query {r.stats.records_compared:5d}")
