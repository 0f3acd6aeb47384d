import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from heatscatter import EdgeFields, build
from heatscatter.graph import DirectedGraph

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "thorough", max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@st.composite
def connected_instances(draw, n_min=2, n_max=8, with_drift=True):
    """(graph, fields) with a random spanning tree plus extra edges."""
    n = draw(st.integers(n_min, n_max))
    pairs = set()
    for k in range(1, n):
        parent = draw(st.integers(0, k - 1))
        pairs.add((parent, k))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and draw(st.booleans()) and draw(st.booleans()):
                pairs.add((i, j))
    edges = []
    for i, j in sorted(pairs):
        edges.append((j, i) if draw(st.booleans()) else (i, j))
    g = DirectedGraph.from_edges(n, edges)
    w = np.array(draw(st.lists(st.floats(0.05, 2.0), min_size=g.n_edges, max_size=g.n_edges)))
    if with_drift:
        phi = np.array(draw(st.lists(st.floats(-2.0, 2.0), min_size=n, max_size=n)))
    else:
        phi = np.zeros(n)
    return g, EdgeFields.from_potential(g, w, phi)


@st.composite
def laplacians(draw, **kw):
    g, fields = draw(connected_instances(**kw))
    return build(g, fields)


def signals(n):
    return st.lists(st.floats(-10, 10), min_size=n, max_size=n).map(np.array)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_edge():
    g = DirectedGraph.from_edges(2, [(0, 1)])
    return g


ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
