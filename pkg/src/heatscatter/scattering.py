"""The iterated transform ``f_{k+1} = T|g_k|``, ``g_{k+1} = S|g_k|``, ``g_0 = f``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import EdgeFields, GraphError
from .laplacian import SpectralLaplacian, quadratic_form
from .semigroup import FilterPair

DEFAULT_LAYERS = 5


@dataclass
class ScatteringOutput:
    signal: np.ndarray
    layers: list  # [(f_k, g_k)] for k = 1..K
    g0_norm: float
    layer_norms: np.ndarray  # ||g_k||
    low_norms: np.ndarray  # ||f_k||
    bound_curve: np.ndarray  # decay^{k/2} ||f||
    refined_bound: np.ndarray  # sqrt(t) decay^{(k-1)/2} ||M_sqrt(w) D_a f||
    t: float
    decay_factor: float
    edge_energy: float = field(default=0.0)  # ||M_sqrt(w) D_a f||^2

    @property
    def K(self) -> int:
        return len(self.layers)

    def g(self, k: int) -> np.ndarray:
        """``g_k``; ``k = 0`` is the input."""
        return self.signal if k == 0 else self.layers[k - 1][1]

    def f(self, k: int) -> np.ndarray:
        return np.zeros_like(self.signal) if k == 0 else self.layers[k - 1][0]


def _iterate(T: np.ndarray, S: np.ndarray, G: np.ndarray, K: int):
    """Rows of ``G`` are independent inputs.  Yields ``(f_k, g_k)`` stacks."""
    for _ in range(K):
        A = np.abs(G)
        F = A @ T.T
        G = A @ S.T
        yield F, G


def scatter(filters: FilterPair, f, K: int = DEFAULT_LAYERS) -> ScatteringOutput:
    f = np.asarray(f, dtype=float)
    L = filters.source
    if f.shape != (L.n,):
        raise GraphError(f"signal of shape {f.shape} does not match {L.n} vertices")
    if K < 1:
        raise ValueError("at least one layer is required")
    layers = [(Fk[0], Gk[0]) for Fk, Gk in _iterate(filters.T_matrix, filters.S_matrix, f[None, :], K)]
    norm_f = float(np.linalg.norm(f))
    ks = np.arange(1, K + 1)
    q = edge_energy(L, f)
    decay = filters.decay_factor
    return ScatteringOutput(
        signal=f,
        layers=layers,
        g0_norm=norm_f,
        layer_norms=np.array([np.linalg.norm(g) for _, g in layers]),
        low_norms=np.array([np.linalg.norm(x) for x, _ in layers]),
        bound_curve=decay ** (ks / 2) * norm_f,
        refined_bound=math.sqrt(filters.t) * decay ** ((ks - 1) / 2) * math.sqrt(q),
        t=filters.t,
        decay_factor=decay,
        edge_energy=q,
    )


def layer_norms_batch(filters: FilterPair, F, K: int = DEFAULT_LAYERS):
    """``(||f_k||, ||g_k||)`` arrays of shape ``(m, K)`` for a stack of signals."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    fn = np.empty((F.shape[0], K))
    gn = np.empty((F.shape[0], K))
    for k, (Fk, Gk) in enumerate(_iterate(filters.T_matrix, filters.S_matrix, F, K)):
        fn[:, k] = np.linalg.norm(Fk, axis=1)
        gn[:, k] = np.linalg.norm(Gk, axis=1)
    return fn, gn


def edge_energy(L: SpectralLaplacian, f) -> float:
    """``||M_sqrt(w) D_a f||^2``, i.e. the quadratic form of ``L`` at ``f``."""
    fields = L.fields
    return quadratic_form(L.graph, fields.weight, fields.drift, f)


def energy_identity_defect(out: ScatteringOutput, K: int | None = None) -> float:
    """``||f||^2 - sum_{k<=K} ||f_k||^2``.

    By the per-layer Pythagoras identity this equals ``||g_K||^2`` and so
    lies in ``[0, decay^K ||f||^2]``.
    """
    K = out.K if K is None else K
    if K > out.K:
        raise ValueError(f"only {out.K} layers were computed")
    return float(out.g0_norm**2 - np.sum(out.low_norms[:K] ** 2))


def energy_tail_bound(out: ScatteringOutput, K: int | None = None) -> float:
    K = out.K if K is None else K
    return out.decay_factor**K * out.g0_norm**2


def beurling_deny_check(filters: FilterPair, f) -> tuple[float, float]:
    """``(||S|f|||, ||S f||)``; the first never exceeds the second."""
    f = np.asarray(f, dtype=float)
    return float(np.linalg.norm(filters.high(np.abs(f)))), float(np.linalg.norm(filters.high(f)))


def refined_first_layer_bound(
    L: SpectralLaplacian, fields: EdgeFields | None, filters: FilterPair, f
) -> float:
    """``sqrt(t) ||M_sqrt(w) D_a f||``, an upper bound for ``||S f||``."""
    fields = L.fields if fields is None else fields
    q = quadratic_form(L.graph, fields.weight, fields.drift, f)
    return math.sqrt(filters.t * q)
