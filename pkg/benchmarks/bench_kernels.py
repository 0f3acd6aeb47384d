#!/usr/bin/env python3
"""Time the hot kernels under the numba and numpy backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once per backend (so numba compilation is not
timed), then the best of N runs is reported.  The script also checks
that both backends agree.
"""

import argparse
import time

import numpy as np

from heatscatter import _accel, kernels
from heatscatter.stochastic import adapted_weights
from heatscatter.traffic import TimeGrid, TrafficModel, build_day_window, build_grid_graph
from heatscatter.graph import induce_subgraph


def best_of(fn, repeat):
    fn()  # warm up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def window_case(blocks=288):
    # a realistic day window: 5 days of blocks plus the week edges
    grid = TimeGrid(blocks, 63)
    G = build_grid_graph(grid)
    walk = TrafficModel.demo(blocks).walk_model(grid)
    sub = induce_subgraph(G, build_day_window(grid, 30).edges)
    local = walk.restrict(sub.boundary_vertices)
    w, _ = adapted_weights(local, sub.local_graph)
    g = sub.local_graph
    a = local.potential[g.dst] - local.potential[g.src]
    c = w * np.exp(2 * local.potential[g.dst])
    return g, w, a, c, local


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    g, w, a, c, local = window_case()
    rng = np.random.default_rng(0)
    F = rng.random((256, g.n_vertices))
    A = rng.standard_normal((60, 60))
    A = A + A.T

    cases = {
        "laplacian_matrix": lambda: kernels.laplacian_matrix(g.n_vertices, g.src, g.dst, w, a),
        "quadratic_forms(256)": lambda: kernels.quadratic_forms(g.src, g.dst, w, a, F),
        "pair_covariance": lambda: kernels.pair_covariance(g.src, g.dst, c, local.sigma2, local.chain)[0],
        "jacobi_eigh(60x60)": lambda: np.sort(kernels.jacobi_eigh(A)[0]),
    }
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"window graph: {g.n_vertices} vertices, {g.n_edges} edges")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases.items():
        row, outs = [], []
        for b in backends:
            with _accel.use_backend(b):
                t, out = best_of(fn, args.repeat)
            row.append(t)
            outs.append(np.asarray(out, dtype=float))
        line = f"{name:<22}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row)
        if len(row) == 2:
            diff = np.max(np.abs(outs[0] - outs[1])) / max(1.0, np.max(np.abs(outs[0])))
            line += f"  {row[0] / row[1]:>9.1f}x  (rel diff {diff:.1e})"
        print(line)
    if not _accel.HAVE_NUMBA:
        print("numba is not installed; only the numpy backend was timed")


if __name__ == "__main__":
    main()
