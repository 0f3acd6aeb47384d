"""The drift-weighted Laplacian ``D_a^* M_w D_a`` and its spectrum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import DirectedGraph, EdgeFields, GraphError

NEGATIVE_CLAMP = 1e-10
# eigenvalues this close to zero (relative to n * eps * lambda_max) are
# solver noise; left alone, the square root in S would amplify them
ROUNDOFF_FACTOR = 8.0


class SpectralError(ValueError):
    pass


def _as_batch(f):
    f = np.asarray(f, dtype=float)
    return np.atleast_2d(f), f.ndim == 1


def apply_incidence(g: DirectedGraph, drift, f) -> np.ndarray:
    """``(D_a f)(i, j) = f(j) - exp(a(i, j)) f(i)``; ``f`` may be a stack of rows."""
    F, single = _as_batch(f)
    if F.shape[1] != g.n_vertices:
        raise GraphError(f"signal has {F.shape[1]} entries, graph has {g.n_vertices} vertices")
    out = kernels.incidence(g.src, g.dst, np.asarray(drift, dtype=float), F)
    return out[0] if single else out


def quadratic_form(g: DirectedGraph, weight, drift, f):
    """``sum_{(i,j)} w(i,j) (exp(a(i,j)) f(i) - f(j))^2`` for one or many signals."""
    F, single = _as_batch(f)
    if F.shape[1] != g.n_vertices:
        raise GraphError(f"signal has {F.shape[1]} entries, graph has {g.n_vertices} vertices")
    q = kernels.quadratic_forms(
        g.src, g.dst, np.asarray(weight, dtype=float), np.asarray(drift, dtype=float), F
    )
    return float(q[0]) if single else q


def laplacian_matrix(g: DirectedGraph, fields: EdgeFields) -> np.ndarray:
    return kernels.laplacian_matrix(g.n_vertices, g.src, g.dst, fields.weight, fields.drift)


@dataclass(frozen=True, eq=False)
class SpectralLaplacian:
    """Dense symmetric Laplacian with its eigendecomposition.

    Eigenvalues are nondecreasing; ``eigenvectors[:, k]`` belongs to
    ``eigenvalues[k]``.
    """

    graph: DirectedGraph
    fields: EdgeFields
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def zero_tol(self) -> float:
        return 1e-9 * max(1.0, self.lambda_max)

    def kernel_dimension(self, zero_tol: float | None = None) -> int:
        tol = self.zero_tol if zero_tol is None else zero_tol
        return int(np.count_nonzero(self.eigenvalues <= tol))

    @property
    def lambda_1(self) -> float:
        """Smallest nonzero eigenvalue; requires a one-dimensional kernel."""
        k = self.kernel_dimension()
        if k != 1:
            raise SpectralError(f"lambda_1 needs a one-dimensional kernel, found dimension {k}")
        if self.n < 2:
            raise SpectralError("a single vertex has no nonzero eigenvalue")
        return float(self.eigenvalues[1])

    def spectral_apply(self, values, f=None) -> np.ndarray:
        """``Q diag(values) Q^T`` or, when ``f`` is given, its action on ``f``."""
        Q = self.eigenvectors
        if f is None:
            return (Q * values) @ Q.T
        return Q @ (values * (Q.T @ f))

    def reconstruction_error(self) -> float:
        return float(np.abs(self.spectral_apply(self.eigenvalues) - self.matrix).max())


def eigh_symmetric(matrix, method: str = "lapack"):
    """Ascending eigenpairs of a symmetric matrix.

    ``"lapack"`` uses tridiagonalisation via :func:`numpy.linalg.eigh`;
    ``"jacobi"`` runs the cyclic Jacobi kernel (convergence when the
    off-diagonal Frobenius norm drops below ``1e-12 * ||A||_F``).
    """
    if method == "lapack":
        return np.linalg.eigh(matrix)
    if method == "jacobi":
        vals, vecs, _ = kernels.jacobi_eigh(matrix, 1e-12, 100)
        order = np.argsort(vals, kind="stable")
        return vals[order], np.ascontiguousarray(vecs[:, order])
    raise ValueError(f"unknown eigensolver {method!r}")


def build(g: DirectedGraph, fields: EdgeFields, method: str = "lapack") -> SpectralLaplacian:
    if fields.graph is not g and fields.graph != g:
        raise GraphError("fields belong to a different graph")
    L = laplacian_matrix(g, fields)
    vals, vecs = eigh_symmetric(L, method)
    vals = np.array(vals, dtype=float)
    floor = -NEGATIVE_CLAMP * max(1.0, float(vals[-1]))
    if vals[0] < floor:
        raise SpectralError(f"eigenvalue {vals[0]:.3e} is negative beyond roundoff")
    vals[vals < 0] = 0.0
    noise = ROUNDOFF_FACTOR * len(vals) * np.finfo(float).eps * max(float(vals[-1]), 0.0)
    vals[vals <= noise] = 0.0
    for x in (L, vals, vecs):
        x.flags.writeable = False
    return SpectralLaplacian(g, fields, L, vals, vecs)
