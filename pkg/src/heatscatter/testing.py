"""Random instances for property checks: connected graphs and gradient fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DirectedGraph, EdgeFields
from .laplacian import SpectralLaplacian, build


def random_connected_graph(rng: np.random.Generator, n: int, extra_edge_prob: float = 0.3) -> DirectedGraph:
    """A random spanning tree plus independent extra edges, randomly oriented.

    Antiparallel pairs are never produced.
    """
    if n == 1:
        return DirectedGraph.from_edges(1, [])
    perm = rng.permutation(n)
    pairs = {tuple(sorted((int(perm[k]), int(perm[rng.integers(k)])))) for k in range(1, n)}
    iu, ju = np.triu_indices(n, 1)
    extra = rng.random(len(iu)) < extra_edge_prob
    pairs.update(zip(iu[extra].tolist(), ju[extra].tolist()))
    pairs = np.array(sorted(pairs), dtype=np.int64)
    flip = rng.random(len(pairs)) < 0.5
    pairs[flip] = pairs[flip, ::-1]
    return DirectedGraph.from_edges(n, pairs)


def random_gradient_fields(
    rng: np.random.Generator, g: DirectedGraph, w_max: float = 2.0, phi_max: float = 2.0
) -> EdgeFields:
    """Weights uniform on ``(0, w_max]`` and the drift of a potential with ``|phi| <= phi_max``."""
    w = w_max * (1.0 - rng.random(g.n_edges))
    phi = rng.uniform(-phi_max, phi_max, g.n_vertices)
    return EdgeFields.from_potential(g, w, phi)


@dataclass
class Instance:
    graph: DirectedGraph
    fields: EdgeFields
    laplacian: SpectralLaplacian


def random_instance(rng: np.random.Generator, n_min: int = 2, n_max: int = 30, **kw) -> Instance:
    n = int(rng.integers(n_min, n_max + 1))
    g = random_connected_graph(rng, n, **kw)
    fields = random_gradient_fields(rng, g)
    return Instance(g, fields, build(g, fields))
