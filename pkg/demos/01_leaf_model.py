"""
Inside an interpolation-friendly leaf
=====================================

A learned leaf stores its records sorted along one dimension and keeps a
straight line from key value to array position. Lookups jump to the
predicted slot and search only inside the recorded error band.
"""

import numpy as np

from ifindex.leaf_model import SearchStrategy, build_leaf, choose_storage_dim, leaf_find_first

rng = np.random.default_rng(0)

# x is spread evenly, y piles up near zero: x should win the storage order
pts = np.column_stack([rng.random(1000), rng.exponential(0.05, 1000)]).astype(np.float32)
pdim, per_dim = choose_storage_dim(pts)
for dim, err in enumerate(per_dim):
    print(f"dim {dim}: max error {err.max_err:4d}, mean error {err.mean_err:7.2f}")
print("storage dimension:", pdim)

# fit the line and look at a few predictions
leaf = build_leaf(pts)
print(f"A = {leaf.model.A:.2f}, B = {leaf.model.B:.2f}, max error {leaf.stats.max_err}")
for i in (0, 250, 500, 999):
    key = leaf.records[i, leaf.pdim]
    print(f"record {i:4d}: key {key:.5f} predicted at {leaf.predict(key)}")

# the three local searches land on the same record
target = leaf.records[640, leaf.pdim]
for strategy in SearchStrategy:
    stats = np.zeros(3, np.int64)
    pos = leaf_find_first(leaf, target, strategy, stats=stats)
    print(f"{strategy.name.lower():12s} found position {pos} after {stats[2]} comparisons")
