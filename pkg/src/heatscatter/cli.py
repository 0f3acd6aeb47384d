"""``heatscatter`` command line: simulate, fit, scatter, detect, selftest.

Data goes to the ``--out`` path (``-`` is stdout); diagnostics go to
stderr.  Exit status is 0 on success, 1 on any error, and for ``detect``
2 when at least one day is flagged.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


from . import io, selftest
from .graph import GraphError
from .laplacian import SpectralError, build
from .scattering import DEFAULT_LAYERS, scatter
from .semigroup import default_time, make_filters
from .stochastic import ModelError
from .traffic import TimeGrid, TrafficModel, fit_model, heatmap_pixels, scan_year, simulate_counts

log = logging.getLogger("heatscatter")

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    inputs: dict = field(default_factory=dict)
    out: str = "-"
    heatmap: Optional[str] = None
    blocks_per_day: int = 288
    days: int = 364
    t: Optional[float] = None  # None means ln 2 / lambda_max
    layers: int = DEFAULT_LAYERS
    delta: Optional[float] = None  # None means 3 sqrt(U)
    seed: Optional[int] = None
    station: Optional[str] = None
    injections: list = field(default_factory=list)
    threads: Optional[int] = None
    quick: bool = False
    fit_first: bool = False
    fit_method: str = "increments"
    variance: str = "exact"

    def validate(self):
        for name in ("blocks_per_day", "days", "layers"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name.replace('_per_day', 's')} must be positive")
        if self.blocks_per_day < 2:
            raise UsageError("--blocks must be at least 2")
        for name in ("t", "delta"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise UsageError(f"--{name} must be a positive number or 'auto'")
        if self.threads is not None and self.threads < 1:
            raise UsageError("--threads must be positive")
        if self.seed is not None and self.seed < 0:
            raise UsageError("--seed must be nonnegative")
        for label, path in self.inputs.items():
            if path is not None and not Path(path).is_file():
                raise UsageError(f"{label} file not found: {path}")
        for path in (self.out, self.heatmap):
            if path not in (None, "-"):
                parent = Path(path).resolve().parent
                if not parent.is_dir():
                    raise UsageError(f"output directory does not exist: {parent}")
        return self

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.blocks_per_day, self.days)


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _auto_or_positive(text: str):
    if text == "auto":
        return None
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _injection(text: str):
    try:
        parts = dict(item.split("=", 1) for item in text.split(","))
        day, factor = int(parts.pop("day")), float(parts.pop("factor"))
    except (ValueError, KeyError):
        raise argparse.ArgumentTypeError(f"expected day=D,factor=F, got {text!r}") from None
    if parts:
        raise argparse.ArgumentTypeError(f"unknown injection key(s): {', '.join(parts)}")
    if not factor > 0:
        raise argparse.ArgumentTypeError("injection factor must be positive")
    return day, factor


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatscatter", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def grid_flags(sp):
        sp.add_argument("--blocks", type=int, default=288, help="time blocks per day (default 288)")
        sp.add_argument("--days", type=int, default=364, help="days in the series (default 364)")

    def out_flag(sp, what):
        sp.add_argument("--out", default="-", help=f"{what} output path, '-' for stdout (default)")

    sp = sub.add_parser("simulate", help="draw a synthetic year of counts")
    sp.add_argument("--model", help="model JSON (default: built-in demo profile)")
    grid_flags(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--inject", type=_injection, action="append", default=[], metavar="day=D,factor=F")
    sp.add_argument("--station", default="", help="station name recorded in the series")
    sp.add_argument("--write-model", help="also write the model used as JSON")
    out_flag(sp, "count CSV")

    sp = sub.add_parser("fit", help="estimate a weekday model from counts")
    sp.add_argument("counts", help="count CSV")
    grid_flags(sp)
    sp.add_argument("--station")
    sp.add_argument("--method", choices=("increments", "running_max"), default="increments")
    out_flag(sp, "model JSON")

    sp = sub.add_parser("scatter", help="scattering norms of a signal on an edge-list graph")
    sp.add_argument("graph", help="edge list, lines 'i j' or 'i j w a'")
    sp.add_argument("signal", help="vertex,value CSV")
    sp.add_argument("--t", type=_auto_or_positive, default=None, help="diffusion time or 'auto'")
    sp.add_argument("--layers", type=int, default=DEFAULT_LAYERS)
    sp.add_argument("--laplacian-out", help="also dump the Laplacian matrix as CSV")
    out_flag(sp, "scattering CSV")

    sp = sub.add_parser("detect", help="scan every day of a count series")
    sp.add_argument("counts", help="count CSV")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model JSON")
    src.add_argument("--fit-first", action="store_true", help="fit the model from the counts")
    sp.add_argument("--fit-method", choices=("increments", "running_max"), default="increments")
    grid_flags(sp)
    sp.add_argument("--station")
    sp.add_argument("--t", type=_auto_or_positive, default=None)
    sp.add_argument("--layers", type=int, default=DEFAULT_LAYERS)
    sp.add_argument("--delta", type=_auto_or_positive, default=None)
    sp.add_argument("--variance", choices=("exact", "chain"), default="exact")
    sp.add_argument("--threads", type=int)
    sp.add_argument("--heatmap", help="PGM path for the first-layer heatmap")
    out_flag(sp, "verdict CSV")

    sp = sub.add_parser("selftest", help="check the named invariants")
    sp.add_argument("--quick", action="store_true", help="skip Monte Carlo checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(ns.subcommand)
    for attr, target in (
        ("blocks", "blocks_per_day"),
        ("days", "days"),
        ("t", "t"),
        ("layers", "layers"),
        ("delta", "delta"),
        ("seed", "seed"),
        ("station", "station"),
        ("inject", "injections"),
        ("threads", "threads"),
        ("quick", "quick"),
        ("fit_first", "fit_first"),
        ("fit_method", "fit_method"),
        ("method", "fit_method"),
        ("variance", "variance"),
        ("out", "out"),
        ("heatmap", "heatmap"),
    ):
        if hasattr(ns, attr):
            setattr(cfg, target, getattr(ns, attr))
    for label in ("model", "counts", "graph", "signal"):
        if getattr(ns, label, None) is not None:
            cfg.inputs[label] = getattr(ns, label)
    return cfg.validate()


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def _load_model(cfg: RunConfig) -> TrafficModel:
    model = io.read_model(cfg.inputs["model"])
    if model.blocks_per_day != cfg.blocks_per_day:
        raise UsageError(
            f"model has {model.blocks_per_day} blocks per day but --blocks is {cfg.blocks_per_day}"
        )
    return model


def cmd_simulate(cfg: RunConfig, write_model: Optional[str] = None) -> int:
    grid = cfg.grid
    model = _load_model(cfg) if "model" in cfg.inputs else TrafficModel.demo(cfg.blocks_per_day, cfg.seed)
    for day, _ in cfg.injections:
        if not 1 <= day <= grid.days:
            raise UsageError(f"injection day {day} outside 1..{grid.days}")
    series = simulate_counts(model, grid, cfg.seed, cfg.injections, cfg.station or "")
    with io.open_text_out(cfg.out) as fh:
        io.write_counts(series, fh)
    if write_model:
        Path(write_model).write_text(io.model_to_json(model) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    series = io.read_counts(cfg.inputs["counts"], cfg.grid, cfg.station)
    model = fit_model(series, cfg.grid, cfg.fit_method)
    with io.open_text_out(cfg.out) as fh:
        fh.write(io.model_to_json(model) + "\n")
    return EXIT_OK


def cmd_scatter(cfg: RunConfig, laplacian_out: Optional[str] = None) -> int:
    g, fields = io.read_edge_list(cfg.inputs["graph"])
    f = io.read_signal(cfg.inputs["signal"], g.n_vertices)
    L = build(g, fields)
    filters = make_filters(L, default_time(L) if cfg.t is None else cfg.t)
    out = scatter(filters, f, cfg.layers)
    with io.open_text_out(cfg.out) as fh:
        io.write_scattering_csv(out, fh)
    if laplacian_out:
        with io.open_text_out(laplacian_out) as fh:
            io.write_matrix_csv(L.matrix, fh)
    return EXIT_OK


def cmd_detect(cfg: RunConfig) -> int:
    grid = cfg.grid
    series = io.read_counts(cfg.inputs["counts"], grid, cfg.station)
    model = fit_model(series, grid, cfg.fit_method) if cfg.fit_first else _load_model(cfg)
    result = scan_year(
        series, grid, model, t=cfg.t, delta=cfg.delta, layers=cfg.layers, variance=cfg.variance, threads=cfg.threads
    )
    with io.open_text_out(cfg.out) as fh:
        io.write_verdicts(result, fh, cfg.layers)
    if cfg.heatmap:
        io.write_pgm(heatmap_pixels(result.g1_grid), cfg.heatmap)
    flagged = result.flagged_days
    skipped = grid.days - len(result.days)
    print(
        f"scanned {len(result.days)} day(s), skipped {skipped}, flagged {len(flagged)}"
        + (f": {' '.join(map(str, flagged))}" if flagged else ""),
        file=sys.stderr,
    )
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_selftest(cfg: RunConfig) -> int:
    results = selftest.run(seed=cfg.seed or 0, quick=cfg.quick, threads=cfg.threads)
    # the report is the data product of this subcommand
    print(selftest.format_report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(ns.verbose, 2), format="%(levelname)s: %(message)s", stream=sys.stderr
    )
    logging.captureWarnings(True)
    try:
        cfg = config_from_args(ns)
        if cfg.subcommand == "simulate":
            return cmd_simulate(cfg, ns.write_model)
        if cfg.subcommand == "fit":
            return cmd_fit(cfg)
        if cfg.subcommand == "scatter":
            return cmd_scatter(cfg, ns.laplacian_out)
        if cfg.subcommand == "detect":
            return cmd_detect(cfg)
        return cmd_selftest(cfg)
    except (UsageError, io.DataFormatError, GraphError, SpectralError, ModelError, OSError) as exc:
        print(f"heatscatter {ns.subcommand}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
