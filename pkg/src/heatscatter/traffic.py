"""Periodic count series on a (time block x day) grid.

Vertex ``(block, day)`` (both 1-based) has index
``(day - 1) * blocks_per_day + (block - 1)``, so chronological order is
the vertex order.  Consecutive blocks of a day are joined, and the same
block is joined across one week.  Each day ``d`` is tested on the
window ``F_d``: the day's own block chain plus the same-block edges
``(d-14, d-7), (d-7, d), (d, d+7), (d+7, d+14)``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import binom

from .graph import DirectedGraph, EdgeFields, induce_subgraph
from .laplacian import SpectralLaplacian, build
from .scattering import DEFAULT_LAYERS
from .semigroup import FilterPair, default_time, make_filters
from .stochastic import (
    AnomalyVerdict,
    ModelError,
    WalkModel,
    adapted_weights,
    anomaly_test,
    simulate_walk,
    statistic_variance,
)

log = logging.getLogger(__name__)

DAYS_PER_WEEK = 7
WEEK_OFFSETS = ((-14, -7), (-7, 0), (0, 7), (7, 14))
MIN_WEEKS = 8


@dataclass(frozen=True)
class TimeGrid:
    blocks_per_day: int = 288
    days: int = 364

    def __post_init__(self):
        if self.blocks_per_day < 2:
            raise ValueError("need at least two blocks per day")
        if self.days < DAYS_PER_WEEK or self.days % DAYS_PER_WEEK:
            raise ValueError("days must be a positive multiple of 7")

    @property
    def n_vertices(self) -> int:
        return self.blocks_per_day * self.days

    @property
    def weeks(self) -> int:
        return self.days // DAYS_PER_WEEK

    def vertex(self, block, day):
        return (np.asarray(day) - 1) * self.blocks_per_day + (np.asarray(block) - 1)

    def day_vertices(self, day: int) -> np.ndarray:
        start = (day - 1) * self.blocks_per_day
        return np.arange(start, start + self.blocks_per_day)

    @staticmethod
    def weekday(day):
        """0..6, the position of ``day`` in its week (day 1 has weekday 0)."""
        return (np.asarray(day) - 1) % DAYS_PER_WEEK


def build_grid_graph(grid: TimeGrid) -> DirectedGraph:
    B, D = grid.blocks_per_day, grid.days
    idx = np.arange(grid.n_vertices).reshape(D, B)
    within = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    weekly = np.stack([idx[:-DAYS_PER_WEEK].ravel(), idx[DAYS_PER_WEEK:].ravel()], axis=1)
    return DirectedGraph.from_edges(grid.n_vertices, np.concatenate([within, weekly]))


@dataclass(frozen=True, eq=False)
class DayWindow:
    day: int
    chain_edges: np.ndarray  # (B-1, 2)
    week_edges: np.ndarray  # (k*B, 2)
    week_pairs: tuple  # ((d1, d2), ...) present in the window

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.chain_edges, self.week_edges])

    @property
    def n_edges(self) -> int:
        return len(self.chain_edges) + len(self.week_edges)

    @property
    def days(self) -> tuple:
        return tuple(sorted({self.day, *(d for p in self.week_pairs for d in p)}))

    def key(self, grid: TimeGrid) -> tuple:
        """Days with equal keys have identical window Laplacians under a weekday model."""
        rel = tuple((d1 - self.day, d2 - self.day) for d1, d2 in self.week_pairs)
        return int(grid.weekday(self.day)), rel


def build_day_window(grid: TimeGrid, d: int, usable_days=None) -> DayWindow:
    """``F_d``; week edges leaving ``1..days`` (or ``usable_days``) are dropped."""
    if not 1 <= d <= grid.days:
        raise ValueError(f"day {d} outside 1..{grid.days}")
    usable = None if usable_days is None else set(int(x) for x in usable_days)
    blocks = np.arange(1, grid.blocks_per_day + 1)
    chain = np.stack([grid.vertex(blocks[:-1], d), grid.vertex(blocks[1:], d)], axis=1)
    pairs = []
    week = []
    for o1, o2 in WEEK_OFFSETS:
        d1, d2 = d + o1, d + o2
        if d1 < 1 or d2 > grid.days:
            continue
        if usable is not None and not (d1 in usable and d2 in usable):
            continue
        pairs.append((d1, d2))
        week.append(np.stack([grid.vertex(blocks, d1), grid.vertex(blocks, d2)], axis=1))
    week_edges = np.concatenate(week) if week else np.zeros((0, 2), dtype=np.int64)
    return DayWindow(d, chain.astype(np.int64), week_edges.astype(np.int64), tuple(pairs))


@dataclass
class CountSeries:
    """Counts indexed ``[day - 1, block - 1]``; missing cells are NaN."""

    counts: np.ndarray
    station: str = ""

    @property
    def days(self) -> int:
        return self.counts.shape[0]

    @property
    def blocks_per_day(self) -> int:
        return self.counts.shape[1]

    def check_grid(self, grid: TimeGrid):
        if self.counts.shape != (grid.days, grid.blocks_per_day):
            raise ValueError(
                f"series has shape {self.counts.shape}, grid expects "
                f"({grid.days}, {grid.blocks_per_day})"
            )

    def complete_days(self) -> np.ndarray:
        """1-based days without missing blocks."""
        return np.flatnonzero(~np.isnan(self.counts).any(axis=1)) + 1

    def signal(self) -> np.ndarray:
        """Flattened counts in vertex order, clamped below at 1."""
        clamped = np.maximum(self.counts, 1.0)
        n_low = int(np.sum(self.counts < 1))
        if n_low:
            log.info("clamped %d count(s) below 1 up to 1", n_low)
        return clamped.ravel()

    def injected(self, day: int, factor: float) -> "CountSeries":
        c = self.counts.copy()
        c[day - 1] = np.rint(c[day - 1] * factor)
        return CountSeries(c, self.station)


@dataclass
class TrafficModel:
    """Weekday profiles ``phi[weekday, block]`` and ``sigma2[weekday, block]``."""

    phi: np.ndarray
    sigma2: np.ndarray
    seed: Optional[int] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if self.phi.ndim != 2 or self.phi.shape[0] != DAYS_PER_WEEK or self.phi.shape != self.sigma2.shape:
            raise ModelError("phi and sigma2 must both have shape (7, blocks_per_day)")
        if np.any(self.sigma2 < 0) or np.any(np.diff(self.sigma2, axis=1) < 0):
            raise ModelError("sigma2 must be nonnegative and nondecreasing within each day")
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.sigma2))):
            raise ModelError("model parameters must be finite")

    @property
    def blocks_per_day(self) -> int:
        return self.phi.shape[1]

    def walk_model(self, grid: TimeGrid) -> WalkModel:
        if grid.blocks_per_day != self.blocks_per_day:
            raise ModelError(
                f"model has {self.blocks_per_day} blocks per day, grid has {grid.blocks_per_day}"
            )
        wd = grid.weekday(np.arange(1, grid.days + 1))
        chain = np.repeat(np.arange(grid.days), grid.blocks_per_day)
        return WalkModel(self.phi[wd].ravel(), self.sigma2[wd].ravel(), chain)

    @classmethod
    def demo(cls, blocks_per_day: int = 288, seed: Optional[int] = None) -> "TrafficModel":
        """Synthetic commuter profile: two rush-hour peaks on weekdays 0-4, one broad peak on 5-6."""
        hours = 24.0 * (np.arange(blocks_per_day) + 0.5) / blocks_per_day

        def bump(center, width, height):
            return height * np.exp(-0.5 * ((hours - center) / width) ** 2)

        workday = 80 + bump(8.0, 1.5, 500) + bump(17.5, 2.0, 550) + bump(12.5, 3.0, 200)
        weekend = 80 + bump(14.0, 3.5, 320)
        phi = np.log(np.array([workday] * 5 + [weekend] * 2))
        ramp = np.linspace(0.01, 0.12, blocks_per_day)
        sigma2 = np.array([ramp] * 5 + [ramp * 1.2] * 2)
        return cls(phi, sigma2, seed, {"source": "demo"})


def simulate_counts(
    model: TrafficModel, grid: TimeGrid, seed=None, injections=(), station: str = ""
) -> CountSeries:
    """Integer counts ``rint(exp(phi + nu))`` for every day of the grid.

    ``injections`` is a sequence of ``(day, factor)``; the day's counts
    are multiplied by ``factor`` before rounding.
    """
    f = simulate_walk(model.walk_model(grid), seed).reshape(grid.days, grid.blocks_per_day)
    for day, factor in injections:
        if not 1 <= day <= grid.days:
            raise ValueError(f"injection day {day} outside 1..{grid.days}")
        f[day - 1] *= factor
    return CountSeries(np.rint(f), station)


def fit_model(series: CountSeries, grid: TimeGrid, method: str = "increments", min_weeks: int = MIN_WEEKS) -> TrafficModel:
    """Estimate weekday profiles from a count series.

    Per (weekday, block) cell, over the weeks, with ``x = log(max(count, 1))``:

    * ``"running_max"``: ``sigma2`` is the sample variance of ``x``, then
      made nondecreasing within the day by a running maximum.
    * ``"increments"``: ``sigma2`` is the cumulative sum of the sample
      variances of block-to-block increments of ``x`` (first block: the
      variance of ``x`` itself), nondecreasing by construction.

    ``phi`` is the median of ``x`` plus ``sigma2 / 2``.
    """
    series.check_grid(grid)
    x = np.log(np.maximum(series.counts, 1.0))  # NaN stays NaN
    B = grid.blocks_per_day
    cells = x.reshape(grid.weeks, DAYS_PER_WEEK, B)
    present = (~np.isnan(cells)).sum(axis=0)
    if np.any(present < min_weeks):
        wd, b = np.argwhere(present < min_weeks)[0]
        raise ModelError(
            f"cell (weekday {wd}, block {b + 1}) has {present[wd, b]} observed weeks, "
            f"need at least {min_weeks}"
        )
    median = np.nanmedian(cells, axis=0)
    if method == "running_max":
        var = np.nanvar(cells, axis=0, ddof=1)
        sigma2 = np.maximum.accumulate(var, axis=1)
    elif method == "increments":
        first = np.nanvar(cells[:, :, 0], axis=0, ddof=1)
        inc = np.nanvar(np.diff(cells, axis=2), axis=0, ddof=1)
        if np.any(np.isnan(inc)):
            raise ModelError("too few complete week pairs to estimate increment variances")
        sigma2 = np.cumsum(np.concatenate([first[:, None], inc], axis=1), axis=1)
    else:
        raise ValueError(f"unknown fit method {method!r}")
    phi = median + sigma2 / 2.0
    return TrafficModel(
        phi,
        sigma2,
        provenance={"fit": method, "station": series.station, "weeks": grid.weeks},
    )


@dataclass
class _WindowOperator:
    laplacian: SpectralLaplacian
    filters: FilterPair
    model: WalkModel
    U: float


@dataclass
class DayResult:
    day: int
    verdict: AnomalyVerdict
    g1_day: np.ndarray  # |g_1| on the day's own blocks


@dataclass
class ScanResult:
    grid: TimeGrid
    days: list  # DayResult in day order, skipped days absent
    g1_grid: np.ndarray  # (blocks_per_day, days), NaN on skipped days

    @property
    def flagged_days(self) -> list[int]:
        return [r.day for r in self.days if r.verdict.flagged]


def _window_operator(grid, G, walk, window, t, variance) -> _WindowOperator:
    subset = induce_subgraph(G, window.edges)
    local = walk.restrict(subset.boundary_vertices)
    w, kept = adapted_weights(local, subset.local_graph)
    if not kept.all():
        ids = subset.edge_ids[kept]
        subset = induce_subgraph(G, np.stack([G.src[ids], G.dst[ids]], axis=1))
        if len(subset.boundary_vertices) != len(window.days) * grid.blocks_per_day:
            raise ModelError(f"window of day {window.day} lost vertices after dropping edges")
        local = walk.restrict(subset.boundary_vertices)
        w = w[kept]
    fields = EdgeFields.from_potential(subset.local_graph, w, local.potential)
    L = build(subset.local_graph, fields)
    filters = make_filters(L, default_time(L) if t is None else t)
    U = statistic_variance(local, L, variance)
    if not U > 0:
        raise ModelError(
            f"window of day {window.day} has nonpositive statistic variance {U:.3g}; "
            "the model's sigma2 profile is too flat for the adapted weights"
        )
    return _WindowOperator(L, filters, local, U)


def scan_year(
    series: CountSeries,
    grid: TimeGrid,
    model: TrafficModel,
    t=None,
    delta=None,
    layers: int = DEFAULT_LAYERS,
    variance: str = "exact",
    threads: Optional[int] = None,
) -> ScanResult:
    """Run the windowed anomaly test on every complete day.

    Windows with the same weekday and the same set of surviving week
    pairs share one Laplacian, filter pair and variance, which are built
    once.  ``t=None`` (or ``"auto"``) picks ``ln 2 / lambda_max`` per window.
    """
    series.check_grid(grid)
    t = None if t == "auto" else t
    G = build_grid_graph(grid)
    walk = model.walk_model(grid)
    f_all = series.signal()
    usable = series.complete_days()
    windows = [build_day_window(grid, int(d), usable) for d in usable]
    keys = [w.key(grid) for w in windows]
    reps = {}
    for w, k in zip(windows, keys):
        reps.setdefault(k, w)
    threads = threads or os.cpu_count() or 1

    with ThreadPoolExecutor(max_workers=threads) as pool:
        ops = dict(
            zip(reps, pool.map(lambda w: _window_operator(grid, G, walk, w, t, variance), reps.values()))
        )

        def run(item):
            w, k = item
            op = ops[k]
            subset_vertices = np.concatenate([grid.day_vertices(d) for d in w.days])
            f = f_all[subset_vertices]
            v = anomaly_test(op.laplacian, op.model, f, delta=delta, layers=layers, U=op.U, filters=op.filters)
            pos = np.searchsorted(subset_vertices, grid.day_vertices(w.day))
            g1 = np.abs(v.scattering.layers[0][1][pos])
            v.scattering = None
            return DayResult(w.day, v, g1)

        results = list(pool.map(run, zip(windows, keys)))

    g1_grid = np.full((grid.blocks_per_day, grid.days), np.nan)
    for r in results:
        g1_grid[:, r.day - 1] = r.g1_day
    log.info("scanned %d day(s) with %d distinct window operator(s)", len(results), len(ops))
    return ScanResult(grid, results, g1_grid)


def heatmap_pixels(g1_grid: np.ndarray) -> np.ndarray:
    """8-bit grayscale, dark = large ``|g_1|``; skipped days are white."""
    vals = np.nan_to_num(g1_grid, nan=0.0)
    top = vals.max()
    scaled = np.clip(vals / top, 0.0, 1.0) if top > 0 else np.zeros_like(vals)
    return (255 - np.rint(255 * scaled)).astype(np.uint8)


def null_flag_budget(result: ScanResult) -> float:
    """Expected number of flags under the model, by the per-day Cantelli bounds."""
    return float(sum(r.verdict.p_bound for r in result.days))


def binomial_upper(n_trials: int, p: float, confidence: float = 0.95) -> int:
    """Smallest ``k`` with ``P[Binomial(n, p) <= k] >= confidence``."""
    return int(binom.ppf(confidence, n_trials, min(max(p, 0.0), 1.0)))


__all__ = [
    "TimeGrid",
    "DayWindow",
    "CountSeries",
    "TrafficModel",
    "DayResult",
    "ScanResult",
    "build_grid_graph",
    "build_day_window",
    "simulate_counts",
    "fit_model",
    "scan_year",
    "heatmap_pixels",
    "null_flag_budget",
    "binomial_upper",
]
