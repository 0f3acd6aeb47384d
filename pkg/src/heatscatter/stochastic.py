"""Log-normal multiplicative random walks and the anomaly test built on them.

A signal is modelled as ``f = exp(phi + nu)`` where, along each chain
of vertices (in increasing vertex order), ``nu`` has independent
Gaussian increments with ``E[exp(increment)] = 1``.  With the potential
``phi`` as drift and the adapted weights, ``<L f, f>`` has mean equal
to the number of edges; its variance feeds a Cantelli bound.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .graph import DirectedGraph, GraphError
from .laplacian import SpectralLaplacian, quadratic_form
from .scattering import DEFAULT_LAYERS, ScatteringOutput, scatter
from .semigroup import FilterPair, default_time, make_filters

DENOMINATOR_FLOOR = 1e-12
DELTA_SIGMAS = 3.0


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WalkModel:
    """Per-vertex potential and log-variance, plus a chain label per vertex.

    Vertices sharing a chain label form one walk, traversed in increasing
    vertex order and started from ``nu = 0`` before its first vertex.
    Different chains are independent.
    """

    potential: np.ndarray
    sigma2: np.ndarray
    chain: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.potential, dtype=float)
        s2 = np.asarray(self.sigma2, dtype=float)
        chain = np.asarray(self.chain, dtype=np.int64)
        if not (phi.ndim == 1 and phi.shape == s2.shape == chain.shape):
            raise ModelError("potential, sigma2 and chain must be 1-d arrays of equal length")
        if not np.all(np.isfinite(phi)) or not np.all(np.isfinite(s2)):
            raise ModelError("model parameters must be finite")
        if np.any(s2 < 0):
            raise ModelError("sigma2 must be nonnegative")
        inc = _increments(s2, chain)
        if np.any(inc < 0):
            v = int(np.argmax(inc < 0))
            raise ModelError(f"sigma2 decreases along chain {chain[v]} at vertex {v}")
        for name, x in (("potential", phi), ("sigma2", s2), ("chain", chain)):
            x = x.copy()
            x.flags.writeable = False
            object.__setattr__(self, name, x)

    @classmethod
    def single_chain(cls, potential, sigma2) -> "WalkModel":
        s2 = np.asarray(sigma2, dtype=float)
        return cls(potential, s2, np.zeros(s2.shape, dtype=np.int64))

    @property
    def n(self) -> int:
        return int(self.sigma2.shape[0])

    @property
    def mean_log_noise(self) -> np.ndarray:
        """``E[nu] = -sigma2 / 2``."""
        return -0.5 * self.sigma2

    def increment_variance(self) -> np.ndarray:
        return _increments(self.sigma2, self.chain)

    def restrict(self, vertices) -> "WalkModel":
        v = np.asarray(vertices)
        return WalkModel(self.potential[v], self.sigma2[v], self.chain[v])


def _increments(s2, chain):
    """Per-vertex increment variance: ``s2[v] - s2[previous vertex of v's chain]``."""
    n = s2.shape[0]
    order = np.lexsort((np.arange(n), chain))
    s_sorted = s2[order]
    c_sorted = chain[order]
    prev = np.empty(n)
    if n:
        prev[0] = 0.0
        prev[1:] = np.where(c_sorted[1:] == c_sorted[:-1], s_sorted[:-1], 0.0)
    inc = np.empty(n)
    inc[order] = s_sorted - prev
    return inc


def lognormal_moment(n: int, sigma2: float) -> float:
    """``E[exp(n nu)]`` for ``nu ~ Normal(-sigma2/2, sigma2)``."""
    return math.exp(n * (n - 1) * sigma2 / 2.0)


def simulate_walk(model: WalkModel, seed=None, size: Optional[int] = None) -> np.ndarray:
    """Draw ``f = exp(phi + nu)``; shape ``(n,)`` or ``(size, n)``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts (an
    int, a :class:`numpy.random.SeedSequence` or a ``Generator``); the
    bit generator is PCG64.
    """
    rng = np.random.default_rng(seed)
    n = model.n
    m = 1 if size is None else int(size)
    inc = model.increment_variance()
    order = np.lexsort((np.arange(n), model.chain))
    z = rng.standard_normal((m, n))
    steps = z * np.sqrt(inc[order]) - 0.5 * inc[order]
    cs = np.cumsum(steps, axis=1)
    c_sorted = model.chain[order]
    starts = np.flatnonzero(np.r_[True, c_sorted[1:] != c_sorted[:-1]])
    seg = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, n]))
    offset = np.where(starts > 0, cs[:, np.maximum(starts - 1, 0)], 0.0)
    nu_sorted = cs - offset[:, seg]
    nu = np.empty_like(nu_sorted)
    nu[:, order] = nu_sorted
    f = np.exp(model.potential + nu)
    return f[0] if size is None else f


def _edge_kinds(model: WalkModel, g: DirectedGraph):
    if g.n_vertices != model.n:
        raise ModelError(f"model has {model.n} vertices, graph has {g.n_vertices}")
    same = model.chain[g.src] == model.chain[g.dst]
    if np.any(same & (g.src > g.dst)):
        raise ModelError("edges inside a chain must point forward in vertex order")
    return same


def adapted_weights(model: WalkModel, g: DirectedGraph, floor: float = DENOMINATOR_FLOOR):
    """Weights ``1 / E[|D_a f|^2]`` with ``a`` the gradient of the model potential.

    Edges inside a chain use ``exp(2 phi_j) (exp(s2_j) - exp(s2_i))``;
    edges between independent chains use
    ``exp(2 phi_j) (exp(s2_i) + exp(s2_j) - 2)``.  Returns
    ``(weights, kept)`` where ``kept`` masks the graph's edges; an edge
    between two deterministic vertices of different chains is dropped.
    """
    same = _edge_kinds(model, g)
    si = model.sigma2[g.src]
    sj = model.sigma2[g.dst]
    scale = np.exp(2.0 * model.potential[g.dst])
    var_chain = np.expm1(sj) - np.expm1(si)
    var_indep = np.expm1(si) + np.expm1(sj)
    denom = scale * np.where(same, var_chain, var_indep)
    kept = same | (si > 0) | (sj > 0)
    if not kept.all():
        warnings.warn(
            f"dropping {int((~kept).sum())} edge(s) joining deterministic vertices "
            "of independent chains",
            RuntimeWarning,
            stacklevel=2,
        )
    w = 1.0 / np.maximum(denom[kept], floor)
    return w, kept


def fourth_moment_edge(sigma2_i: float, sigma2_j: float) -> float:
    """``E[|(M_sqrt(w) D_a f)(i, j)|^4]`` on a chain edge with adapted weight."""
    si, sj = float(sigma2_i), float(sigma2_j)
    return (
        math.exp(4 * sj)
        + 2 * math.exp(3 * sj + si)
        + 3 * math.exp(2 * sj + 2 * si)
        - 3 * math.exp(4 * si)
    )


def variance_bound_U(sigma2) -> float:
    """``exp(4 s_n) + sum_{j=1..n} (3 exp(4 s_j) - 1) - 3`` for a chain ``s_0..s_n``."""
    s = np.asarray(sigma2, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise ModelError("a chain needs at least two vertices")
    if np.any(np.diff(s) < 0):
        raise ModelError("sigma2 must be nondecreasing along the chain")
    return float(math.exp(4 * s[-1]) + np.sum(3 * np.exp(4 * s[1:]) - 1) - 3)


def _statistic_coefficients(model: WalkModel, g: DirectedGraph, weight) -> np.ndarray:
    # with a = grad phi: w (D_a f)^2 = w exp(2 phi_j) (Y_j - Y_i)^2, Y = exp(nu)
    c = np.asarray(weight, dtype=float) * np.exp(2.0 * model.potential[g.dst])
    # a chain edge without variance growth has Y_j = Y_i; zeroing it keeps
    # the floored weight from amplifying cancellation error
    flat = (model.chain[g.src] == model.chain[g.dst]) & (model.sigma2[g.src] == model.sigma2[g.dst])
    return np.where(flat, 0.0, c)


def statistic_moments(model: WalkModel, g: DirectedGraph, weight) -> tuple[float, float]:
    """Exact mean and variance of ``<L f, f>`` for ``f`` drawn from ``model``.

    The drift is taken to be the gradient of ``model.potential``.  The
    variance sums the covariance of every pair of edge terms using the
    joint log-normal moments ``E[Y_a Y_b Y_c Y_d]``.
    """
    _edge_kinds(model, g)
    c = _statistic_coefficients(model, g, weight)
    si = model.sigma2[g.src]
    sj = model.sigma2[g.dst]
    same = model.chain[g.src] == model.chain[g.dst]
    cov_ij = np.where(same, np.minimum(si, sj), 0.0)
    mean = float(np.sum(c * (np.expm1(sj) - 2.0 * np.expm1(cov_ij) + np.expm1(si))))
    total, _ = kernels.pair_covariance(g.src, g.dst, c, model.sigma2, model.chain)
    return mean, float(total)


def edge_term_variances(model: WalkModel, g: DirectedGraph, weight) -> np.ndarray:
    """Variance of each single edge term ``w_e (D_a f)_e^2``."""
    c = _statistic_coefficients(model, g, weight)
    _, diag = kernels.pair_covariance(g.src, g.dst, c, model.sigma2, model.chain)
    return diag


def chain_paths(model: WalkModel, g: DirectedGraph) -> list[np.ndarray]:
    """Maximal increasing vertex paths formed by the within-chain edges of ``g``."""
    same = _edge_kinds(model, g)
    nxt = {}
    has_pred = set()
    for i, j in zip(g.src[same].tolist(), g.dst[same].tolist()):
        if i in nxt:
            raise ModelError(f"vertex {i} starts two within-chain edges; not a path")
        nxt[i] = j
        has_pred.add(j)
    paths = []
    for start in sorted(set(nxt) - has_pred):
        path = [start]
        while path[-1] in nxt:
            path.append(nxt[path[-1]])
        paths.append(np.array(path))
    return paths


def chain_variance_bound(model: WalkModel, g: DirectedGraph, weight) -> float:
    """Sum of the closed-form chain bound over each within-chain path of ``g``.

    Edges joining independent chains are not covered by that bound; their
    single-edge variances are added exactly.
    """
    same = _edge_kinds(model, g)
    total = sum(variance_bound_U(model.sigma2[p]) for p in chain_paths(model, g))
    if np.any(~same):
        total += float(edge_term_variances(model, g, weight)[~same].sum())
    return float(total)


def cantelli_p(U: float, delta: float) -> float:
    """One-sided Chebyshev bound ``U / (U + delta^2)`` on ``P[X >= E X + delta]``."""
    if not delta > 0:
        raise ValueError("delta must be strictly positive")
    if U < 0:
        raise ValueError("variance bound must be nonnegative")
    return float(U / (U + delta * delta))


def layer_thresholds(t: float, lambda_max: float, n_edges: int, delta: float, K: int) -> np.ndarray:
    """Squared-norm thresholds ``t (1 - exp(-t lambda_max))^{k-1} (|F| + delta)``."""
    decay = -math.expm1(-t * lambda_max)
    k = np.arange(1, K + 1)
    return t * decay ** (k - 1) * (n_edges + delta)


@dataclass
class AnomalyVerdict:
    statistic: float  # S_F = <L f, f>
    expected: float  # |F|
    U: float  # variance (bound) fed to Cantelli
    delta: float
    p_bound: float
    layer_norms: np.ndarray
    thresholds: np.ndarray
    layer_flags: np.ndarray
    t: float
    variance_method: str = "exact"
    scattering: Optional[ScatteringOutput] = field(default=None, repr=False)

    @property
    def flagged(self) -> bool:
        return bool(np.any(self.layer_flags))


def statistic_variance(model: WalkModel, L: SpectralLaplacian, method: str = "exact") -> float:
    g, w = L.graph, L.fields.weight
    if method == "exact":
        return statistic_moments(model, g, w)[1]
    if method == "chain":
        return chain_variance_bound(model, g, w)
    raise ValueError(f"unknown variance method {method!r}")


def resolve_delta(delta, U: float) -> float:
    if delta is None or delta == "auto":
        if U <= 0:
            raise ValueError("automatic delta needs a positive variance; pass delta explicitly")
        return DELTA_SIGMAS * math.sqrt(U)
    delta = float(delta)
    if not delta > 0:
        raise ValueError("delta must be strictly positive")
    return delta


def anomaly_test(
    L: SpectralLaplacian,
    model: WalkModel,
    f,
    *,
    delta=None,
    layers: int = DEFAULT_LAYERS,
    t: Optional[float] = None,
    variance: str = "exact",
    U: Optional[float] = None,
    filters: Optional[FilterPair] = None,
) -> AnomalyVerdict:
    """Goodness-of-fit test of ``f`` against ``model`` on the graph of ``L``.

    ``L`` must have been built with the adapted weights and the gradient
    drift of ``model.potential``.  The day is flagged when some layer
    satisfies ``||g_k||^2 >= t decay^{k-1} (|F| + delta)``; under the
    model that happens with probability at most ``U / (U + delta^2)``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (L.n,):
        raise GraphError(f"signal of shape {f.shape} does not match {L.n} vertices")
    if not np.all(f > 0):
        raise ModelError("the log-normal model needs a strictly positive signal")
    if U is None:
        U = statistic_variance(model, L, variance)
    delta = resolve_delta(delta, U)
    if filters is None:
        filters = make_filters(L, default_time(L) if t is None else t)
    out = scatter(filters, f, layers)
    S = out.edge_energy
    nF = L.graph.n_edges
    thr = layer_thresholds(filters.t, L.lambda_max, nF, delta, layers)
    return AnomalyVerdict(
        statistic=S,
        expected=float(nF),
        U=float(U),
        delta=float(delta),
        p_bound=cantelli_p(U, delta),
        layer_norms=out.layer_norms,
        thresholds=thr,
        layer_flags=out.layer_norms**2 >= thr,
        t=filters.t,
        variance_method=variance,
        scattering=out,
    )


def sample_statistic(model: WalkModel, g: DirectedGraph, weight, n_samples: int, seed=None, batch: int = 20000):
    """Monte Carlo draws of ``<L f, f>`` under ``model`` (drift = grad potential)."""
    rng = np.random.default_rng(seed)
    a = model.potential[g.dst] - model.potential[g.src]
    out = np.empty(n_samples)
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        F = simulate_walk(model, rng, size=m)
        out[done : done + m] = quadratic_form(g, weight, a, F)
        done += m
    return out
