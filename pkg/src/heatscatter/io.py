"""File formats: edge lists, vertex signals, count CSVs, model JSON, verdict CSV, PGM."""

from __future__ import annotations

import contextlib
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .graph import DirectedGraph, EdgeFields, GraphError
from .stochastic import ModelError
from .traffic import CountSeries, ScanResult, TimeGrid, TrafficModel

FLOAT_FMT = ".12g"


class DataFormatError(ValueError):
    """Malformed input file; the message names the file position."""


def fmt(x) -> str:
    return format(float(x), FLOAT_FMT)


@contextlib.contextmanager
def open_text_out(path, binary: bool = False):
    """Open ``path`` for writing; ``-`` is stdout."""
    if str(path) == "-":
        yield sys.stdout.buffer if binary else sys.stdout
        return
    mode = "wb" if binary else "w"
    kwargs = {} if binary else {"newline": "", "encoding": "utf-8"}
    with open(path, mode, **kwargs) as fh:
        yield fh


# --------------------------------------------------------------------------
# Edge lists and vertex signals
# --------------------------------------------------------------------------


def parse_edge_list(text: str, n_vertices: int | None = None):
    """Parse ``i j`` or ``i j w a`` lines (``#`` starts a comment).

    Returns ``(graph, fields)``; missing weights default to 1, missing
    drifts to 0.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 4):
            raise DataFormatError(f"line {lineno}: expected 'i j' or 'i j w a', got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w, a = (float(parts[2]), float(parts[3])) if len(parts) == 4 else (1.0, 0.0)
        except ValueError:
            raise DataFormatError(f"line {lineno}: cannot parse {raw!r}") from None
        rows.append((i, j, w, a, lineno))
    if not rows and n_vertices is None:
        raise DataFormatError("edge list is empty and no vertex count was given")
    n = n_vertices if n_vertices is not None else max(max(r[0], r[1]) for r in rows) + 1
    pairs = np.array([(r[0], r[1]) for r in rows], dtype=np.int64).reshape(-1, 2)
    try:
        g = DirectedGraph.from_edges(n, pairs)
    except GraphError as exc:
        raise DataFormatError(f"edge list: {exc}") from None
    ids = g.edge_ids(pairs) if len(pairs) else np.zeros(0, dtype=np.int64)
    w = np.empty(g.n_edges)
    a = np.empty(g.n_edges)
    for pos, r in zip(ids, rows):
        if not r[2] > 0:
            raise DataFormatError(f"line {r[4]}: weight must be strictly positive")
        w[pos], a[pos] = r[2], r[3]
    return g, EdgeFields.create(g, w, a)


def read_edge_list(path, n_vertices: int | None = None):
    return parse_edge_list(Path(path).read_text(encoding="utf-8"), n_vertices)


def read_signal(path, n_vertices: int) -> np.ndarray:
    """``vertex,value`` CSV (header optional); unlisted vertices are zero."""
    f = np.zeros(n_vertices)
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for rowno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            if rowno == 1 and row[0].strip().lower() == "vertex":
                continue
            try:
                v, x = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise DataFormatError(f"{path}: row {rowno}: expected 'vertex,value'") from None
            if not 0 <= v < n_vertices:
                raise DataFormatError(f"{path}: row {rowno}: vertex {v} outside 0..{n_vertices - 1}")
            if v in seen:
                raise DataFormatError(f"{path}: row {rowno}: vertex {v} listed twice")
            seen.add(v)
            f[v] = x
    return f


def write_signal(f, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["vertex", "value"])
    for v, x in enumerate(f):
        w.writerow([v, fmt(x)])


def write_matrix_csv(M, fh):
    w = csv.writer(fh, lineterminator="\n")
    for row in np.asarray(M):
        w.writerow([fmt(x) for x in row])


def write_scattering_csv(out, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["k", "g_norm", "bound", "refined_bound"])
    for k in range(out.K):
        w.writerow([k + 1, fmt(out.layer_norms[k]), fmt(out.bound_curve[k]), fmt(out.refined_bound[k])])


# --------------------------------------------------------------------------
# Count series
# --------------------------------------------------------------------------


def parse_counts(fh, grid: TimeGrid, station: str | None = None, source: str = "<counts>") -> CountSeries:
    """Read ``day,block,count`` or ``station,day,block,count`` rows.

    Days and blocks are 1-based.  Cells without a row stay missing.
    """
    reader = csv.reader(fh)
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise DataFormatError(f"{source}: empty file") from None
    if header == ["day", "block", "count"]:
        has_station = False
    elif header == ["station", "day", "block", "count"]:
        has_station = True
    else:
        raise DataFormatError(
            f"{source}: row 1: header must be 'day,block,count' or 'station,day,block,count'"
        )
    counts = np.full((grid.days, grid.blocks_per_day), np.nan)
    stations = set()
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataFormatError(f"{source}: row {rowno}: expected {len(header)} fields, got {len(row)}")
        if has_station:
            st = row[0].strip()
            if station is None and stations and st not in stations:
                raise DataFormatError(
                    f"{source}: row {rowno}: file holds more than one station; choose one with --station"
                )
            stations.add(st)
            if station is not None and st != station:
                continue
            row = row[1:]
        try:
            day, block, count = (int(x) for x in row)
        except ValueError:
            raise DataFormatError(f"{source}: row {rowno}: day, block and count must be integers") from None
        if not 1 <= day <= grid.days:
            raise DataFormatError(f"{source}: row {rowno}: day {day} outside 1..{grid.days}")
        if not 1 <= block <= grid.blocks_per_day:
            raise DataFormatError(f"{source}: row {rowno}: block {block} outside 1..{grid.blocks_per_day}")
        if count < 0:
            raise DataFormatError(f"{source}: row {rowno}: negative count")
        if not np.isnan(counts[day - 1, block - 1]):
            raise DataFormatError(f"{source}: row {rowno}: duplicate cell (day {day}, block {block})")
        counts[day - 1, block - 1] = count
    if has_station and station is not None and station not in stations:
        raise DataFormatError(f"{source}: station {station!r} not found")
    name = station if station is not None else (next(iter(stations)) if stations else "")
    return CountSeries(counts, name)


def read_counts(path, grid: TimeGrid, station: str | None = None) -> CountSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_counts(fh, grid, station, str(path))


def write_counts(series: CountSeries, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["day", "block", "count"])
    for d in range(series.days):
        for b in range(series.blocks_per_day):
            c = series.counts[d, b]
            if not np.isnan(c):
                w.writerow([d + 1, b + 1, int(c)])


# --------------------------------------------------------------------------
# Model JSON
# --------------------------------------------------------------------------


def model_to_json(model: TrafficModel) -> str:
    doc = {
        "blocks_per_day": model.blocks_per_day,
        "phi": model.phi.tolist(),
        "sigma2": model.sigma2.tolist(),
        "seed": model.seed,
        "provenance": model.provenance,
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def model_from_json(text: str, source: str = "<model>") -> TrafficModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{source}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataFormatError(f"{source}: top level must be an object")
    for key in ("blocks_per_day", "phi", "sigma2"):
        if key not in doc:
            raise DataFormatError(f"{source}: missing field '{key}'")
    B = doc["blocks_per_day"]
    if not isinstance(B, int) or B < 2:
        raise DataFormatError(f"{source}: field 'blocks_per_day' must be an integer >= 2")
    arrays = {}
    for key in ("phi", "sigma2"):
        try:
            arr = np.asarray(doc[key], dtype=float)
        except (TypeError, ValueError):
            raise DataFormatError(f"{source}: field '{key}' must be a 7 x {B} array of numbers") from None
        if arr.shape != (7, B):
            raise DataFormatError(f"{source}: field '{key}' has shape {arr.shape}, expected (7, {B})")
        arrays[key] = arr
    try:
        return TrafficModel(arrays["phi"], arrays["sigma2"], doc.get("seed"), doc.get("provenance") or {})
    except ModelError as exc:
        raise DataFormatError(f"{source}: {exc}") from None


def read_model(path) -> TrafficModel:
    return model_from_json(Path(path).read_text(encoding="utf-8"), str(path))


# --------------------------------------------------------------------------
# Scan outputs
# --------------------------------------------------------------------------


def write_verdicts(result: ScanResult, fh, layers: int):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(
        ["day", "S_F", "expected", "U", "delta", "p_bound", "flag"]
        + [f"g{k}_norm" for k in range(1, layers + 1)]
    )
    for r in result.days:
        v = r.verdict
        w.writerow(
            [r.day, fmt(v.statistic), fmt(v.expected), fmt(v.U), fmt(v.delta), fmt(v.p_bound), int(v.flagged)]
            + [fmt(x) for x in v.layer_norms]
        )


def pgm_bytes(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(pixels: np.ndarray, path):
    with open_text_out(path, binary=True) as fh:
        fh.write(pgm_bytes(pixels))


def read_pgm(data: bytes) -> np.ndarray:
    buf = io.BytesIO(data)
    if buf.readline().strip() != b"P5":
        raise DataFormatError("not a binary PGM")
    cols, rows = (int(x) for x in buf.readline().split())
    if int(buf.readline()) != 255:
        raise DataFormatError("only 8-bit PGM is supported")
    return np.frombuffer(buf.read(), dtype=np.uint8).reshape(rows, cols)
