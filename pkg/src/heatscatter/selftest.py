"""Named invariant checks, runnable from the command line.

Algebraic checks always use :data:`ALGEBRAIC_SEED`, so their outcome does
not depend on the user seed.  Monte Carlo checks use the user seed and
are skipped in quick mode.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _accel, kernels
from .laplacian import eigh_symmetric
from .scattering import beurling_deny_check, scatter
from .semigroup import default_time, heat_operator, make_filters, semigroup_property_check
from .stochastic import (
    WalkModel,
    adapted_weights,
    cantelli_p,
    lognormal_moment,
    sample_statistic,
    statistic_moments,
)
from .graph import DirectedGraph
from .testing import random_instance

ALGEBRAIC_SEED = 20_231_117
N_INSTANCES = 40
MC_CHUNKS = 8  # fixed so results do not depend on the thread count


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _instances(count=N_INSTANCES, n_max=20):
    rng = np.random.default_rng(ALGEBRAIC_SEED)
    for _ in range(count):
        yield random_instance(rng, n_max=n_max), rng


def check_positivity():
    worst = math.inf
    for inst, _ in _instances():
        for t in (0.01, 0.1, 1.0, 10.0):
            worst = min(worst, heat_operator(inst.laplacian, t).min())
    return worst >= -1e-10, f"min heat kernel entry {worst:.3g}"


def check_semigroup():
    worst = 0.0
    for inst, rng in _instances(10):
        worst = max(worst, semigroup_property_check(inst.laplacian, rng.uniform(0.1, 2), rng.uniform(0.1, 2)))
    return worst <= 1e-10, f"max |G_s G_t - G_(s+t)| = {worst:.3g}"


def check_kernel():
    worst = 0.0
    for inst, _ in _instances():
        phi = inst.fields.potential
        v = np.exp(phi)
        worst = max(worst, np.linalg.norm(inst.laplacian.matrix @ v) / np.linalg.norm(v))
        if inst.laplacian.eigenvalues.min() < 0 or inst.laplacian.kernel_dimension() != 1:
            return False, "spectrum not nonnegative with a one-dimensional kernel"
    return worst <= 1e-9, f"max ||L e^phi|| / ||e^phi|| = {worst:.3g}"


def check_pythagoras():
    worst = 0.0
    for inst, rng in _instances():
        L = inst.laplacian
        filt = make_filters(L, default_time(L) * rng.uniform(0.2, 5))
        out = scatter(filt, rng.standard_normal(L.n), 8)
        prev = out.g0_norm**2
        for k in range(8):
            gap = abs(out.low_norms[k] ** 2 + out.layer_norms[k] ** 2 - prev)
            worst = max(worst, gap / prev if prev > 0 else gap)
            prev = out.layer_norms[k] ** 2
    return worst <= 1e-8, f"max relative defect {worst:.3g}"


def check_beurling_deny():
    worst = -math.inf
    for inst, rng in _instances():
        filt = make_filters(inst.laplacian, default_time(inst.laplacian))
        a, b = beurling_deny_check(filt, rng.standard_normal(inst.laplacian.n))
        worst = max(worst, a - b)
    return worst <= 1e-10, f"max ||S|f||| - ||S f|| = {worst:.3g}"


def check_decay():
    worst = -math.inf
    for inst, rng in _instances():
        L = inst.laplacian
        filt = make_filters(L, default_time(L) * rng.uniform(0.2, 5))
        out = scatter(filt, rng.standard_normal(L.n), 8)
        worst = max(worst, np.max(out.layer_norms - out.bound_curve), np.max(out.layer_norms - out.refined_bound))
    return worst <= 1e-8, f"max excess over the bounds {worst:.3g}"


def check_kernel_suppression():
    worst = 0.0
    for inst, rng in _instances():
        L = inst.laplacian
        v = rng.uniform(0.5, 3) * np.exp(inst.fields.potential)
        out = scatter(make_filters(L, default_time(L)), v, 5)
        worst = max(worst, out.layer_norms.sum() / np.linalg.norm(v))
    return worst <= 1e-7, f"max sum ||g_k|| / ||f|| = {worst:.3g}"


def check_jacobi():
    worst = 0.0
    for inst, _ in _instances(10, n_max=12):
        vals, _ = eigh_symmetric(inst.laplacian.matrix, method="jacobi")
        worst = max(worst, np.abs(np.sort(vals) - inst.laplacian.eigenvalues).max())
    return worst <= 1e-9, f"max eigenvalue difference {worst:.3g}"


def check_backends():
    if not _accel.HAVE_NUMBA:
        return True, "numba not installed; numpy backend only"
    worst = 0.0
    for inst, _ in _instances(10):
        g, fl = inst.graph, inst.fields
        mats = []
        for name in ("numba", "numpy"):
            with _accel.use_backend(name):
                mats.append(kernels.laplacian_matrix(g.n_vertices, g.src, g.dst, fl.weight, fl.drift))
        worst = max(worst, np.abs(mats[0] - mats[1]).max())
    return worst <= 1e-12, f"max backend difference {worst:.3g}"


def _chunk_seeds(seed, n=MC_CHUNKS):
    return np.random.SeedSequence(seed).spawn(n)


def check_moments(seed, pool):
    n_samples = 400_000
    per = n_samples // MC_CHUNKS
    worst = 0.0
    for s2 in (0.05, 0.2):
        draws = np.concatenate(
            list(
                pool.map(
                    lambda ss: np.random.default_rng(ss).normal(-s2 / 2, math.sqrt(s2), per),
                    _chunk_seeds(seed),
                )
            )
        )
        for n in (1, 2, 3):
            est = np.mean(np.exp(n * draws))
            worst = max(worst, abs(est / lognormal_moment(n, s2) - 1))
    return worst <= 0.03, f"max relative error {worst:.3g}"


def _chain(n, top=0.2):
    s2 = np.linspace(0.0, top, n + 1)
    phi = np.linspace(0.0, 1.0, n + 1)
    model = WalkModel.single_chain(phi, s2)
    g = DirectedGraph.from_edges(n + 1, [(i, i + 1) for i in range(n)])
    w, _ = adapted_weights(model, g)
    return model, g, w


def check_statistic(seed, pool):
    model, g, w = _chain(5)
    per = 20_000
    samples = np.concatenate(
        list(pool.map(lambda ss: sample_statistic(model, g, w, per, ss), _chunk_seeds(seed)))
    )
    mean, var = statistic_moments(model, g, w)
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    z = abs(samples.mean() - g.n_edges) / se
    ok = z <= 4 and abs(mean - g.n_edges) < 1e-9 and abs(samples.var() / var - 1) <= 0.1
    return ok, f"mean z-score {z:.2f}, variance ratio {samples.var() / var:.3f}"


def check_cantelli(seed, pool):
    model, g, w = _chain(5)
    per = 20_000
    samples = np.concatenate(
        list(pool.map(lambda ss: sample_statistic(model, g, w, per, ss), _chunk_seeds(seed)))
    )
    _, var = statistic_moments(model, g, w)
    worst = -math.inf
    for m in (1, 2, 5):
        delta = m * math.sqrt(var)
        p = cantelli_p(var, delta)
        emp = np.mean(samples >= g.n_edges + delta)
        worst = max(worst, emp - p - 3 * math.sqrt(p * (1 - p) / len(samples)))
    return worst <= 0, f"max excess over the Cantelli bound {worst:.3g}"


ALGEBRAIC: dict[str, Callable] = {
    "positivity": check_positivity,
    "semigroup": check_semigroup,
    "kernel": check_kernel,
    "pythagoras": check_pythagoras,
    "beurling_deny": check_beurling_deny,
    "decay_bound": check_decay,
    "kernel_suppression": check_kernel_suppression,
    "jacobi_eigensolver": check_jacobi,
    "backend_equivalence": check_backends,
}

MONTE_CARLO: dict[str, Callable] = {
    "lognormal_moments": check_moments,
    "statistic_mean_variance": check_statistic,
    "cantelli_coverage": check_cantelli,
}


def run(seed: int = 0, quick: bool = False, threads: Optional[int] = None) -> list[CheckResult]:
    results = []

    def timed(name, fn, *args):
        t0 = time.perf_counter()
        try:
            ok, detail = fn(*args)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))

    for name, fn in ALGEBRAIC.items():
        timed(name, fn)
    if not quick:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for name, fn in MONTE_CARLO.items():
                timed(name, fn, seed, pool)
    return results


def format_report(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [
        f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}  ({r.seconds:.2f} s)"
        for r in results
    ]
    n_ok = sum(r.passed for r in results)
    lines.append(f"{n_ok}/{len(results)} invariants passed")
    return "\n".join(lines)
