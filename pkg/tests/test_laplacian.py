import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatscatter.graph import DirectedGraph, EdgeFields, GraphError
from heatscatter.laplacian import (
    SpectralError,
    apply_incidence,
    build,
    eigh_symmetric,
    laplacian_matrix,
    quadratic_form,
)

from conftest import connected_instances, laplacians
from oracles import incidence_matrix, laplacian_dense

LN2 = math.log(2.0)


def edge(w=1.0, a=0.0):
    g = DirectedGraph.from_edges(2, [(0, 1)])
    return g, EdgeFields.create(g, [w], [a])


# --- incidence ------------------------------------------------------------------


@pytest.mark.parametrize(
    "a, f, expected",
    [(0.0, [1.0, 1.0], 0.0), (LN2, [1.0, 2.0], 0.0), (0.0, [1.0, 3.0], 2.0)],
)
def test_incidence_single_edge(a, f, expected):
    g, _ = edge(a=a)
    assert apply_incidence(g, [a], f) == pytest.approx([expected], abs=1e-15)


def test_incidence_batch_matches_rows(rng):
    g = DirectedGraph.from_edges(4, [(0, 1), (1, 2), (3, 2)])
    a = rng.normal(size=3)
    F = rng.normal(size=(5, 4))
    D = incidence_matrix(4, g.edges, a)
    np.testing.assert_allclose(apply_incidence(g, a, F), F @ D.T, rtol=1e-13)


def test_incidence_shape_mismatch():
    g, _ = edge()
    with pytest.raises(GraphError):
        apply_incidence(g, [0.0], [1.0, 2.0, 3.0])


# --- quadratic form ------------------------------------------------------------------


def test_quadratic_form_path():
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2)])
    assert quadratic_form(g, [1, 1], [0, 0], [0.0, 1.0, 0.0]) == 2.0


@given(connected_instances(), st.floats(-3, 3))
def test_quadratic_form_vanishes_on_kernel(inst, c):
    g, fields = inst
    f = c * np.exp(fields.potential)
    assert quadratic_form(g, fields.weight, fields.drift, f) <= 1e-20 + 1e-12 * np.dot(f, f)


def test_quadratic_form_matches_matrix_on_random_8_vertex_graph(rng):
    g = DirectedGraph.from_edges(8, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0), (2, 6)])
    fields = EdgeFields.create(g, rng.uniform(0.1, 2, 9), rng.normal(size=9))
    f = rng.normal(size=8)
    M = laplacian_dense(8, g.edges, fields.weight, fields.drift)
    assert quadratic_form(g, fields.weight, fields.drift, f) == pytest.approx(f @ M @ f, rel=1e-12)


@given(connected_instances(), st.data())
def test_quadratic_form_consistency(inst, data):
    g, fields = inst
    f = np.array(data.draw(st.lists(st.floats(-5, 5), min_size=g.n_vertices, max_size=g.n_vertices)))
    L = build(g, fields)
    q = quadratic_form(g, fields.weight, fields.drift, f)
    assert q >= 0
    assert q == pytest.approx(f @ L.matrix @ f, rel=1e-9, abs=1e-9)


# --- assembly ---------------------------------------------------------------------------


def test_build_single_edge_no_drift():
    L = build(*edge())
    np.testing.assert_array_equal(L.matrix, [[1, -1], [-1, 1]])
    np.testing.assert_allclose(L.eigenvalues, [0, 2], atol=1e-14)


def test_build_single_edge_ln2_drift():
    L = build(*edge(a=LN2))
    np.testing.assert_allclose(L.matrix, [[4, -2], [-2, 1]], rtol=1e-15)
    np.testing.assert_allclose(L.eigenvalues, [0, 5], atol=1e-14)


def test_build_empty_graph():
    g = DirectedGraph.from_edges(3, [])
    L = build(g, EdgeFields.create(g, [], []))
    np.testing.assert_array_equal(L.matrix, np.zeros((3, 3)))
    np.testing.assert_array_equal(L.eigenvalues, np.zeros(3))


def test_build_rejects_foreign_fields():
    g, fields = edge()
    other = DirectedGraph.from_edges(2, [(1, 0)])
    with pytest.raises(GraphError):
        build(other, fields)


@given(connected_instances())
def test_matrix_matches_dense_definition(inst):
    g, fields = inst
    M = laplacian_matrix(g, fields)
    np.testing.assert_allclose(M, laplacian_dense(g.n_vertices, g.edges, fields.weight, fields.drift), atol=1e-12)


@given(laplacians(n_max=10))
def test_spectral_invariants(L):
    assert np.abs(L.matrix - L.matrix.T).max() <= 1e-12
    assert np.all(np.diff(L.eigenvalues) >= 0)
    assert L.eigenvalues.min() >= 0
    assert L.reconstruction_error() <= 1e-8 * (1 + L.lambda_max)
    Q = L.eigenvectors
    np.testing.assert_allclose(Q.T @ Q, np.eye(L.n), atol=1e-10)
    assert L.kernel_dimension() == 1


@given(laplacians(n_max=10))
def test_kernel_vector_is_exp_potential(L):
    v = np.exp(L.fields.potential)
    assert np.linalg.norm(L.matrix @ v) <= 1e-8 * np.linalg.norm(L.matrix, 2) * np.linalg.norm(v)


# --- kernel dimension and lambda_1 -------------------------------------------------------


def test_kernel_dimension_path():
    g = DirectedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert build(g, EdgeFields.from_potential(g, [1, 2, 3], [0, 0.3, -1, 2])).kernel_dimension() == 1


def test_kernel_dimension_two_components():
    g = DirectedGraph.from_edges(4, [(0, 1), (2, 3)])
    assert build(g, EdgeFields.uniform(g)).kernel_dimension() == 2


def test_kernel_dimension_empty():
    g = DirectedGraph.from_edges(5, [])
    assert build(g, EdgeFields.uniform(g)).kernel_dimension() == 5


@pytest.mark.parametrize(
    "edges, a, expected",
    [([(0, 1)], [0.0], 2.0), ([(0, 1), (1, 2)], [0.0, 0.0], 1.0), ([(0, 1)], [LN2], 5.0)],
)
def test_lambda_1_closed_forms(edges, a, expected):
    n = max(max(e) for e in edges) + 1
    g = DirectedGraph.from_edges(n, edges)
    assert build(g, EdgeFields.create(g, np.ones(len(edges)), a)).lambda_1 == pytest.approx(expected, rel=1e-12)


def test_three_path_spectrum():
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2)])
    np.testing.assert_allclose(build(g, EdgeFields.uniform(g)).eigenvalues, [0, 1, 3], atol=1e-14)


def test_lambda_1_rejects_disconnected():
    g = DirectedGraph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(SpectralError):
        build(g, EdgeFields.uniform(g)).lambda_1


@given(laplacians(n_max=8), st.integers(0, 2**32 - 1))
def test_courant_fischer(L, seed):
    rng = np.random.default_rng(seed)
    v = np.exp(L.fields.potential)
    v /= np.linalg.norm(v)
    F = rng.normal(size=(200, L.n))
    F -= np.outer(F @ v, v)
    F /= np.linalg.norm(F, axis=1, keepdims=True)
    rayleigh = np.einsum("ij,jk,ik->i", F, L.matrix, F)
    assert rayleigh.min() >= L.lambda_1 - 1e-8


def test_diagonal_dominance_can_fail_with_drift():
    L = build(*edge(a=-LN2))
    # row 1: diagonal 1 versus off-diagonal |-(1/2)| holds, row 0: 1/4 < 1/2 fails
    assert abs(L.matrix[0, 0]) < abs(L.matrix[0, 1])


# --- eigensolvers -----------------------------------------------------------------------


@given(laplacians(n_max=12))
def test_jacobi_matches_lapack(L):
    vals, vecs = eigh_symmetric(L.matrix, "jacobi")
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(L.matrix), atol=1e-10 * max(1, L.lambda_max))
    np.testing.assert_allclose((vecs * vals) @ vecs.T, L.matrix, atol=1e-9 * max(1, L.lambda_max))


def test_build_with_jacobi(rng):
    g = DirectedGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
    fields = EdgeFields.from_potential(g, rng.uniform(0.5, 2, 5), rng.normal(size=5))
    a, b = build(g, fields, "jacobi"), build(g, fields)
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-12)


def test_unknown_eigensolver():
    with pytest.raises(ValueError):
        eigh_symmetric(np.eye(2), "qr")


def test_small_negative_eigenvalues_are_clamped(monkeypatch):
    import heatscatter.laplacian as lap

    monkeypatch.setattr(lap, "eigh_symmetric", lambda M, method: (np.array([-1e-12, 2.0]), np.eye(2)))
    L = build(*edge())
    assert L.eigenvalues.tolist() == [0.0, 2.0]


def test_large_negative_eigenvalue_is_an_error(monkeypatch):
    import heatscatter.laplacian as lap

    monkeypatch.setattr(lap, "eigh_symmetric", lambda M, method: (np.array([-1e-6, 2.0]), np.eye(2)))
    with pytest.raises(SpectralError, match="negative"):
        build(*edge())


def test_ill_conditioned_spectrum_stays_nonnegative():
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2)])
    L = build(g, EdgeFields.from_potential(g, [1e6, 1e-6], [0.0, 5.0, -5.0]))
    assert L.eigenvalues.min() >= 0.0


def test_roundoff_level_eigenvalues_are_zeroed(monkeypatch):
    import heatscatter.laplacian as lap

    monkeypatch.setattr(lap, "eigh_symmetric", lambda M, method: (np.array([3e-17, 2.0]), np.eye(2)))
    assert build(*edge()).eigenvalues.tolist() == [0.0, 2.0]
    # a genuine small eigenvalue survives
    monkeypatch.setattr(lap, "eigh_symmetric", lambda M, method: (np.array([1e-12, 2.0]), np.eye(2)))
    assert build(*edge()).eigenvalues[0] == 1e-12
