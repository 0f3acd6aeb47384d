"""Numeric inner loops, each in a numba and a pure-numpy flavour.

The public functions dispatch on :func:`heatscatter._accel.backend` at
call time.  Both flavours take and return plain ``float64``/``int64``
arrays so they can be compared bit-for-bit-ish in the tests.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

# --------------------------------------------------------------------------
# Laplacian assembly
# --------------------------------------------------------------------------


@njit(cache=True)
def _laplacian_matrix_nb(n, src, dst, w, a):
    L = np.zeros((n, n))
    for e in range(src.shape[0]):
        i = src[e]
        j = dst[e]
        ea = np.exp(a[e])
        L[i, i] += w[e] * ea * ea
        L[j, j] += w[e]
        L[i, j] -= w[e] * ea
        L[j, i] -= w[e] * ea
    return L


def _laplacian_matrix_np(n, src, dst, w, a):
    ea = np.exp(a)
    L = np.zeros((n, n))
    np.add.at(L, (src, src), w * ea * ea)
    np.add.at(L, (dst, dst), w)
    np.add.at(L, (src, dst), -w * ea)
    np.add.at(L, (dst, src), -w * ea)
    return L


def laplacian_matrix(n, src, dst, w, a):
    """Dense matrix of the quadratic form ``sum_e w_e (exp(a_e) f_i - f_j)^2``."""
    if _accel.backend() == "numba":
        return _laplacian_matrix_nb(n, src, dst, w, a)
    return _laplacian_matrix_np(n, src, dst, w, a)


# --------------------------------------------------------------------------
# Twisted incidence operator and its energy
# --------------------------------------------------------------------------


@njit(cache=True)
def _incidence_nb(src, dst, a, F):
    m = F.shape[0]
    ne = src.shape[0]
    out = np.empty((m, ne))
    for e in range(ne):
        ea = np.exp(a[e])
        i = src[e]
        j = dst[e]
        for r in range(m):
            out[r, e] = F[r, j] - ea * F[r, i]
    return out


def _incidence_np(src, dst, a, F):
    return F[:, dst] - np.exp(a) * F[:, src]


def incidence(src, dst, a, F):
    """Rows of ``F`` (signals, shape ``(m, n)``) mapped to edge signals ``(m, E)``."""
    if _accel.backend() == "numba":
        return _incidence_nb(src, dst, a, F)
    return _incidence_np(src, dst, a, F)


@njit(cache=True)
def _quadratic_forms_nb(src, dst, w, a, F):
    m = F.shape[0]
    out = np.zeros(m)
    for e in range(src.shape[0]):
        ea = np.exp(a[e])
        i = src[e]
        j = dst[e]
        for r in range(m):
            d = F[r, j] - ea * F[r, i]
            out[r] += w[e] * d * d
    return out


def _quadratic_forms_np(src, dst, w, a, F):
    d = _incidence_np(src, dst, a, F)
    return (d * d) @ w


def quadratic_forms(src, dst, w, a, F):
    if _accel.backend() == "numba":
        return _quadratic_forms_nb(src, dst, w, a, F)
    return _quadratic_forms_np(src, dst, w, a, F)


# --------------------------------------------------------------------------
# Exact second moments of a weighted sum of squared log-normal differences
# --------------------------------------------------------------------------
#
# Y_v = exp(nu_v) with nu Gaussian, E[Y_v] = 1 and Cov(nu_p, nu_q) = C[p, q].
# Then E[Y_a Y_b Y_c Y_d] = exp(sum of C over the 6 position pairs), and
# Z_e = (Y_j - Y_i)^2 = Y_j Y_j - 2 Y_i Y_j + Y_i Y_i.
# C[p, q] = min(s2[p], s2[q]) inside a chain, 0 across chains.


@njit(cache=True)
def _cov_nb(p, q, s2, chain):
    if chain[p] != chain[q]:
        return 0.0
    return min(s2[p], s2[q])


@njit(cache=True)
def _pair_covariance_nb(src, dst, c, s2, chain):
    ne = src.shape[0]
    diag = np.zeros(ne)
    total = 0.0
    ta = np.empty(3, dtype=np.int64)
    tb = np.empty(3, dtype=np.int64)
    tw = np.array([1.0, -2.0, 1.0])
    ua = np.empty(3, dtype=np.int64)
    ub = np.empty(3, dtype=np.int64)
    for e in range(ne):
        i = src[e]
        j = dst[e]
        ta[0] = j
        tb[0] = j
        ta[1] = i
        tb[1] = j
        ta[2] = i
        tb[2] = i
        for f in range(e, ne):
            k = src[f]
            l = dst[f]
            # edges on disjoint chains are independent
            if (
                chain[i] != chain[k]
                and chain[i] != chain[l]
                and chain[j] != chain[k]
                and chain[j] != chain[l]
            ):
                continue
            ua[0] = l
            ub[0] = l
            ua[1] = k
            ub[1] = l
            ua[2] = k
            ub[2] = k
            cov = 0.0
            for x in range(3):
                p = ta[x]
                q = tb[x]
                cpq = _cov_nb(p, q, s2, chain)
                for y in range(3):
                    r = ua[y]
                    s = ub[y]
                    crs = _cov_nb(r, s, s2, chain)
                    cross = (
                        _cov_nb(p, r, s2, chain)
                        + _cov_nb(p, s, s2, chain)
                        + _cov_nb(q, r, s2, chain)
                        + _cov_nb(q, s, s2, chain)
                    )
                    cov += tw[x] * tw[y] * np.exp(cpq + crs) * np.expm1(cross)
            v = c[e] * c[f] * cov
            if f == e:
                diag[e] = v
                total += v
            else:
                total += 2.0 * v
    return total, diag


def _pair_covariance_np(src, dst, c, s2, chain):
    ne = src.shape[0]
    diag = np.zeros(ne)
    total = 0.0
    tw = (1.0, -2.0, 1.0)

    def cov(p, q):
        return np.where(chain[p] == chain[q], np.minimum(s2[p], s2[q]), 0.0)

    for e in range(ne):
        i = src[e]
        j = dst[e]
        k = src[e:]
        l = dst[e:]
        terms_e = ((j, j), (i, j), (i, i))
        terms_f = ((l, l), (k, l), (k, k))
        acc = np.zeros(ne - e)
        for x, (p, q) in enumerate(terms_e):
            cpq = cov(p, q)
            for y, (r, s) in enumerate(terms_f):
                cross = cov(p, r) + cov(p, s) + cov(q, r) + cov(q, s)
                acc += tw[x] * tw[y] * np.exp(cpq + cov(r, s)) * np.expm1(cross)
        v = c[e] * c[e:] * acc
        diag[e] = v[0]
        total += v[0] + 2.0 * v[1:].sum()
    return total, diag


def pair_covariance(src, dst, c, s2, chain):
    """Variance of ``sum_e c_e (Y_dst - Y_src)^2`` and its per-edge diagonal.

    ``s2`` holds the log-variance per vertex (nondecreasing along each
    chain) and ``chain`` an integer chain label per vertex.
    """
    if _accel.backend() == "numba":
        return _pair_covariance_nb(src, dst, c, s2, chain)
    return _pair_covariance_np(src, dst, c, s2, chain)


# --------------------------------------------------------------------------
# Cyclic Jacobi eigensolver
# --------------------------------------------------------------------------


@njit(cache=True)
def _jacobi_eigh_nb(A, rtol, max_sweeps):
    a = A.copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = np.sqrt(np.sum(a * a))
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        if np.sqrt(2.0 * off) <= rtol * norm:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return np.diag(a).copy(), v, sweeps


def _jacobi_eigh_np(A, rtol, max_sweeps):
    a = np.array(A, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    sweeps = 0
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        if np.sqrt(2.0 * np.sum(a[iu] ** 2)) <= rtol * norm:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cols = a[:, [p, q]].copy()
                a[:, p] = c * cols[:, 0] - s * cols[:, 1]
                a[:, q] = s * cols[:, 0] + c * cols[:, 1]
                rows = a[[p, q], :].copy()
                a[p, :] = c * rows[0] - s * rows[1]
                a[q, :] = s * rows[0] + c * rows[1]
                a[p, q] = a[q, p] = 0.0
                vc = v[:, [p, q]].copy()
                v[:, p] = c * vc[:, 0] - s * vc[:, 1]
                v[:, q] = s * vc[:, 0] + c * vc[:, 1]
    return np.diag(a).copy(), v, sweeps


def jacobi_eigh(A, rtol=1e-12, max_sweeps=100):
    """Cyclic Jacobi.  Returns unsorted eigenvalues, eigenvectors, sweep count."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if _accel.backend() == "numba":
        return _jacobi_eigh_nb(A, rtol, max_sweeps)
    return _jacobi_eigh_np(A, rtol, max_sweeps)
