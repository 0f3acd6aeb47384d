"""Heat semigroup ``exp(-t L)`` and the low/high-pass filter pair built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .laplacian import SpectralLaplacian, SpectralError


def heat_operator(L: SpectralLaplacian, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("diffusion time must be nonnegative")
    if t == 0:
        return np.eye(L.n)
    return L.spectral_apply(np.exp(-t * L.eigenvalues))


def semigroup_property_check(L: SpectralLaplacian, t: float, t2: float) -> float:
    """Max-norm defect of ``G_t G_t2 - G_{t+t2}``."""
    G = heat_operator(L, t) @ heat_operator(L, t2)
    return float(np.abs(G - heat_operator(L, t + t2)).max())


@dataclass(frozen=True, eq=False)
class FilterPair:
    """Low-pass ``T = exp(-tL/2)`` and high-pass ``S = (I - exp(-tL))^{1/2}``."""

    source: SpectralLaplacian
    t: float
    T_matrix: np.ndarray
    S_matrix: np.ndarray
    decay_factor: float

    def low(self, f):
        return self.T_matrix @ f

    def high(self, f):
        return self.S_matrix @ f


def make_filters(L: SpectralLaplacian, t: float) -> FilterPair:
    if not t > 0:
        raise ValueError("diffusion time must be strictly positive")
    lam = L.eigenvalues
    low = np.exp(-0.5 * t * lam)
    high = np.sqrt(np.clip(-np.expm1(-t * lam), 0.0, 1.0))
    T = L.spectral_apply(low)
    S = L.spectral_apply(high)
    T = 0.5 * (T + T.T)
    S = 0.5 * (S + S.T)
    decay = float(-math.expm1(-t * L.lambda_max))
    for x in (T, S):
        x.flags.writeable = False
    return FilterPair(L, float(t), T, S, decay)


def default_time(L: SpectralLaplacian) -> float:
    """``ln 2 / lambda_max``, the time at which the decay factor equals 1/2."""
    if L.lambda_max <= 0:
        raise SpectralError("an edgeless graph has no diffusion scale")
    return math.log(2.0) / L.lambda_max
