"""Finite directed graphs on dense integer vertices.

Vertices are ``0 .. n-1`` and their natural order is the total order
used to orient undirected input.  Edges are kept as two parallel,
lexicographically sorted ``int64`` arrays; membership is a binary
search on the packed key ``src * n + dst``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

GRADIENT_TOL = 1e-9


class GraphError(ValueError):
    """Invalid graph input (self-loop, duplicate, out-of-range edge...)."""


def _frozen(x) -> np.ndarray:
    x = np.array(x, copy=True)
    x.flags.writeable = False
    return x


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    n_vertices: int
    src: np.ndarray
    dst: np.ndarray
    _keys: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self.n_vertices == other.n_vertices and np.array_equal(self._keys, other._keys)

    def __hash__(self):
        return hash((self.n_vertices, self._keys.tobytes()))

    @classmethod
    def from_edges(cls, n_vertices: int, edges) -> "DirectedGraph":
        """Build from an iterable of ``(i, j)`` pairs or an ``(E, 2)`` array."""
        n = int(n_vertices)
        if n < 1:
            raise GraphError("a graph needs at least one vertex")
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges)
        if arr.size == 0:
            arr = np.zeros((0, 2), dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise GraphError("edges must be ordered pairs")
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise GraphError("edge endpoints must be integers")
        arr = arr.astype(np.int64)
        src, dst = arr[:, 0], arr[:, 1]
        bad = (src < 0) | (src >= n) | (dst < 0) | (dst >= n)
        if bad.any():
            e = arr[np.argmax(bad)]
            raise GraphError(f"edge ({e[0]}, {e[1]}) has an endpoint outside 0..{n - 1}")
        loops = src == dst
        if loops.any():
            raise GraphError(f"self-loop at vertex {src[np.argmax(loops)]}")
        keys = src * n + dst
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        dup = np.flatnonzero(np.diff(keys) == 0)
        if dup.size:
            k = keys[dup[0]]
            raise GraphError(f"duplicate edge ({k // n}, {k % n})")
        return cls(n, _frozen(src[order]), _frozen(dst[order]), _frozen(keys))

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def edge_ids(self, pairs) -> np.ndarray:
        """Positions of the given ``(i, j)`` pairs in the edge arrays."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = pairs[:, 0] * self.n_vertices + pairs[:, 1]
        pos = np.searchsorted(self._keys, keys)
        pos_c = np.minimum(pos, max(self.n_edges - 1, 0))
        ok = (pos < self.n_edges) & (self._keys[pos_c] == keys) if self.n_edges else np.zeros(len(keys), bool)
        ok &= (pairs[:, 0] >= 0) & (pairs[:, 1] >= 0)
        if not ok.all():
            i, j = pairs[np.argmin(ok)]
            raise GraphError(f"({i}, {j}) is not an edge of the graph")
        return pos

    def has_edge(self, i: int, j: int) -> bool:
        key = int(i) * self.n_vertices + int(j)
        pos = np.searchsorted(self._keys, key)
        return bool(pos < self.n_edges and self._keys[pos] == key)

    def degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_vertices) + np.bincount(
            self.dst, minlength=self.n_vertices
        )

    def undirected_adjacency(self):
        n = self.n_vertices
        ones = np.ones(self.n_edges)
        return coo_matrix((ones, (self.src, self.dst)), shape=(n, n)).tocsr()


def orient_by_order(n_vertices: int, pairs: Iterable) -> DirectedGraph:
    """Orient each unordered pair ``{i, j}`` as ``(min, max)``."""
    arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs)
    if arr.size == 0:
        return DirectedGraph.from_edges(n_vertices, [])
    arr = arr.reshape(-1, 2).astype(np.int64)
    loops = arr[:, 0] == arr[:, 1]
    if loops.any():
        raise GraphError(f"pair {{{arr[np.argmax(loops), 0]}}} is a self-loop")
    oriented = np.sort(arr, axis=1)
    oriented = np.unique(oriented, axis=0)
    return DirectedGraph.from_edges(n_vertices, oriented)


def is_weakly_connected(g: DirectedGraph) -> bool:
    if g.n_vertices == 1:
        return True
    ncomp, _ = connected_components(g.undirected_adjacency(), directed=False)
    return ncomp == 1


def potential_from_drift(
    g: DirectedGraph, drift, tol: float = GRADIENT_TOL
) -> Optional[np.ndarray]:
    """Potential ``phi`` with ``phi[0] = 0`` and ``drift = phi[dst] - phi[src]``.

    The potential is assigned along a breadth-first spanning tree and
    every edge, including the ones closing cycles, is checked against
    ``tol``.  Returns ``None`` when the drift is not a gradient field.
    Raises :class:`GraphError` for graphs that are not weakly connected.
    """
    a = np.asarray(drift, dtype=float)
    if a.shape != (g.n_edges,):
        raise GraphError("drift must have one value per edge")
    if not is_weakly_connected(g):
        raise GraphError("potential is only defined on weakly connected graphs")
    n = g.n_vertices
    phi = np.zeros(n)
    if g.n_edges:
        order, pred = breadth_first_order(
            g.undirected_adjacency(), 0, directed=False, return_predecessors=True
        )
        # forward lookup: edge (p, v); backward: edge (v, p)
        for v in order[1:]:
            p = pred[v]
            if g.has_edge(p, v):
                phi[v] = phi[p] + a[g.edge_ids([(p, v)])[0]]
            else:
                phi[v] = phi[p] - a[g.edge_ids([(v, p)])[0]]
        residual = np.abs(a - (phi[g.dst] - phi[g.src]))
        if residual.max() > tol:
            return None
    return phi


def gradient_field(g: DirectedGraph, potential) -> np.ndarray:
    phi = np.asarray(potential, dtype=float)
    return phi[g.dst] - phi[g.src]


@dataclass(frozen=True, eq=False)
class EdgeFields:
    """Edge weight ``w > 0`` and drift ``a`` aligned with ``graph``'s edge order."""

    graph: DirectedGraph
    weight: np.ndarray
    drift: np.ndarray
    potential: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=float)
        a = np.asarray(self.drift, dtype=float)
        m = self.graph.n_edges
        if w.shape != (m,) or a.shape != (m,):
            raise GraphError("weight and drift need exactly one value per edge")
        if m and not np.all(w > 0):
            raise GraphError("weights must be strictly positive")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a))):
            raise GraphError("weights and drift must be finite")
        object.__setattr__(self, "weight", _frozen(w))
        object.__setattr__(self, "drift", _frozen(a))
        if self.potential is not None:
            phi = np.asarray(self.potential, dtype=float)
            if phi.shape != (self.graph.n_vertices,):
                raise GraphError("potential needs one value per vertex")
            if m and np.abs(a - gradient_field(self.graph, phi)).max() > GRADIENT_TOL:
                raise GraphError("drift is not the gradient of the given potential")
            object.__setattr__(self, "potential", _frozen(phi))

    @classmethod
    def create(cls, g: DirectedGraph, weight, drift, tol: float = GRADIENT_TOL) -> "EdgeFields":
        """Fields with the potential filled in whenever the drift is a gradient."""
        a = np.asarray(drift, dtype=float)
        phi = potential_from_drift(g, a, min(tol, GRADIENT_TOL)) if is_weakly_connected(g) else None
        return cls(g, weight, a, phi)

    @classmethod
    def from_potential(cls, g: DirectedGraph, weight, potential) -> "EdgeFields":
        phi = np.asarray(potential, dtype=float)
        return cls(g, weight, gradient_field(g, phi), phi)

    @classmethod
    def uniform(cls, g: DirectedGraph) -> "EdgeFields":
        return cls(g, np.ones(g.n_edges), np.zeros(g.n_edges), np.zeros(g.n_vertices))

    def restrict(self, subset: "EdgeSubset") -> "EdgeFields":
        """Fields on the induced graph of ``subset`` (relabelled vertices)."""
        phi = None if self.potential is None else self.potential[subset.boundary_vertices]
        return EdgeFields(
            subset.local_graph, self.weight[subset.edge_ids], self.drift[subset.edge_ids], phi
        )


@dataclass(frozen=True, eq=False)
class EdgeSubset:
    """Edge subset ``F`` of ``parent`` with its endpoint set and relabelling.

    ``boundary_vertices`` is sorted, so ``local index -> parent vertex``
    is ``boundary_vertices[k]`` and the local graph keeps the parent's
    vertex order.
    """

    parent: DirectedGraph
    edge_ids: np.ndarray
    boundary_vertices: np.ndarray
    local_graph: DirectedGraph

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.parent.src[self.edge_ids].tolist(), self.parent.dst[self.edge_ids].tolist()))

    @property
    def n_edges(self) -> int:
        return int(self.edge_ids.shape[0])

    def restrict_signal(self, f) -> np.ndarray:
        return np.asarray(f)[..., self.boundary_vertices]

    def local_index(self, vertices) -> np.ndarray:
        v = np.asarray(vertices)
        pos = np.searchsorted(self.boundary_vertices, v)
        if np.any(pos >= len(self.boundary_vertices)) or np.any(self.boundary_vertices[pos] != v):
            raise GraphError("vertex not in the subset's boundary")
        return pos


def induce_subgraph(g: DirectedGraph, F) -> EdgeSubset:
    """Graph induced by the edge subset ``F`` (pairs, or an ``(E', 2)`` array)."""
    ids = np.unique(g.edge_ids(F)) if len(F) else np.zeros(0, dtype=np.int64)
    src = g.src[ids]
    dst = g.dst[ids]
    boundary = np.unique(np.concatenate([src, dst]))
    if boundary.size == 0:
        raise GraphError("an empty edge subset induces no vertices")
    local = DirectedGraph.from_edges(
        len(boundary),
        np.stack([np.searchsorted(boundary, src), np.searchsorted(boundary, dst)], axis=1),
    )
    return EdgeSubset(g, _frozen(ids), _frozen(boundary), local)
