"""Regenerate the committed CSV fixtures in src/ifindex/data.

The fixtures are synthetic stand-ins shaped like a street-map extract: nodes
sampled along road polylines, dense town centres and a sparse rural scatter.
Coordinates are min-max normalised to the unit square and rounded to 6
decimals. The 3D file adds a normalised edit-timestamp column.

    python tools/make_fixtures.py
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "ifindex" / "data"


def street_map(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    towns = rng.random((40, 2))
    size = rng.pareto(1.1, 40) + 1.0
    parts = rng.multinomial(n, [0.55, 0.35, 0.10])
    # roads: random walks leaving a town, nodes spaced unevenly along them
    roads = []
    per_road = 400
    for _ in range(parts[0] // per_road + 1):
        t = rng.choice(40, p=size / size.sum())
        heading = rng.uniform(0, 2 * np.pi)
        turns = np.cumsum(rng.normal(0, 0.15, per_road)) + heading
        steps = rng.exponential(0.0015, per_road)
        walk = np.cumsum(np.column_stack([np.cos(turns), np.sin(turns)]) * steps[:, None], axis=0)
        roads.append(towns[t] + walk)
    road = np.vstack(roads)[: parts[0]]
    which = rng.choice(40, size=parts[1], p=size / size.sum())
    core = towns[which] + rng.normal(size=(parts[1], 2)) * (0.004 * np.sqrt(size[which]))[:, None]
    rural = rng.random((parts[2], 2))
    xy = np.vstack([road, core, rural])
    xy = (xy - xy.min(axis=0)) / (xy.max(axis=0) - xy.min(axis=0))
    return np.round(xy, 6)[rng.permutation(n)]


def edit_times(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    # activity grows over time, with import bursts
    t = rng.beta(3.0, 1.2, n)
    burst = rng.random(n) < 0.2
    t[burst] = rng.choice([0.31, 0.58, 0.87], size=burst.sum())
    return np.round(t, 6)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    xy = street_map(100_000, seed=2019)
    np.savetxt(OUT / "osm_standin_2d.csv", xy, delimiter=",", fmt="%.6f", header="x,y", comments="")
    xyz = np.column_stack([street_map(50_000, seed=2020), edit_times(50_000, seed=2021)])
    np.savetxt(OUT / "osm_standin_3d.csv", xyz, delimiter=",", fmt="%.6f", header="x,y,t", comments="")


if __name__ == "__main__":
    main()
