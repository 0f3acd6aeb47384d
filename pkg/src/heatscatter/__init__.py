"""Heat-semigroup scattering on directed graphs with drift, and a
log-normal goodness-of-fit test for periodic count series."""

from ._accel import backend, set_backend, use_backend
from .graph import (
    DirectedGraph,
    EdgeFields,
    EdgeSubset,
    GraphError,
    gradient_field,
    induce_subgraph,
    is_weakly_connected,
    orient_by_order,
    potential_from_drift,
)
from .laplacian import SpectralError, SpectralLaplacian, build, quadratic_form
from .scattering import ScatteringOutput, scatter
from .semigroup import FilterPair, default_time, heat_operator, make_filters
from .stochastic import (
    AnomalyVerdict,
    ModelError,
    WalkModel,
    adapted_weights,
    anomaly_test,
    simulate_walk,
    statistic_moments,
    variance_bound_U,
)
from .traffic import CountSeries, TimeGrid, TrafficModel, fit_model, scan_year, simulate_counts

__version__ = "0.1.0"

__all__ = [
    "backend", "set_backend", "use_backend",
    "DirectedGraph", "EdgeFields", "EdgeSubset", "GraphError", "gradient_field", "induce_subgraph",
    "is_weakly_connected", "orient_by_order", "potential_from_drift",
    "SpectralError", "SpectralLaplacian", "build", "quadratic_form",
    "ScatteringOutput", "scatter",
    "FilterPair", "default_time", "heat_operator", "make_filters",
    "AnomalyVerdict", "ModelError", "WalkModel", "adapted_weights", "anomaly_test", "simulate_walk",
    "statistic_moments", "variance_bound_U",
    "CountSeries", "TimeGrid", "TrafficModel", "fit_model", "scan_year", "simulate_counts",
]
