import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatscatter.graph import DirectedGraph, EdgeFields, GraphError
from heatscatter.laplacian import build
from heatscatter.semigroup import default_time
from heatscatter.stochastic import (
    ModelError,
    WalkModel,
    adapted_weights,
    anomaly_test,
    cantelli_p,
    chain_paths,
    chain_variance_bound,
    edge_term_variances,
    fourth_moment_edge,
    layer_thresholds,
    lognormal_moment,
    resolve_delta,
    sample_statistic,
    simulate_walk,
    statistic_moments,
    statistic_variance,
    variance_bound_U,
)

LN2 = math.log(2.0)


def chain_setup(n, top=0.2, phi=None, start=0.0):
    s2 = np.linspace(start, top, n + 1)
    phi = np.linspace(0.0, 1.0, n + 1) if phi is None else np.asarray(phi, dtype=float)
    model = WalkModel.single_chain(phi, s2)
    g = DirectedGraph.from_edges(n + 1, [(i, i + 1) for i in range(n)])
    w, _ = adapted_weights(model, g)
    return model, g, w


def windowed_laplacian(model, g, w):
    return build(g, EdgeFields.from_potential(g, w, model.potential))


# --- model validation ----------------------------------------------------------------


def test_model_rejects_decreasing_sigma2():
    with pytest.raises(ModelError, match="decreases"):
        WalkModel.single_chain(np.zeros(3), [0.0, 0.2, 0.1])


def test_model_allows_decrease_across_chains():
    m = WalkModel(np.zeros(4), [0.0, 0.3, 0.0, 0.1], [0, 0, 1, 1])
    np.testing.assert_allclose(m.increment_variance(), [0.0, 0.3, 0.0, 0.1])


def test_model_rejects_negative_and_nonfinite():
    with pytest.raises(ModelError):
        WalkModel.single_chain(np.zeros(2), [-0.1, 0.0])
    with pytest.raises(ModelError):
        WalkModel.single_chain([0.0, np.nan], [0.0, 0.1])


def test_mean_log_noise_is_half_variance():
    m = WalkModel.single_chain(np.zeros(3), [0.0, 0.1, 0.4])
    np.testing.assert_array_equal(m.mean_log_noise, [-0.0, -0.05, -0.2])


# --- moments -------------------------------------------------------------------------------


def test_lognormal_moment_examples():
    assert lognormal_moment(1, 0.7) == 1.0
    assert lognormal_moment(2, 0.0) == 1.0
    assert lognormal_moment(4, 0.1) == pytest.approx(math.exp(0.6))
    assert lognormal_moment(0, 3.0) == 1.0


def test_lognormal_moment_monte_carlo(rng):
    nu = rng.normal(-0.05, math.sqrt(0.1), 1_000_000)
    assert np.mean(np.exp(4 * nu)) == pytest.approx(lognormal_moment(4, 0.1), rel=0.01)


# --- simulation ---------------------------------------------------------------------------


def test_simulation_without_noise_is_exp_potential():
    phi = np.array([0.0, 1.0, -2.0])
    m = WalkModel.single_chain(phi, np.zeros(3))
    np.testing.assert_array_equal(simulate_walk(m, 1), np.exp(phi))


def test_simulation_is_deterministic_given_seed():
    m, _, _ = chain_setup(6)
    np.testing.assert_array_equal(simulate_walk(m, 7, size=3), simulate_walk(m, 7, size=3))
    assert not np.array_equal(simulate_walk(m, 7), simulate_walk(m, 8))


def test_simulated_walk_first_and_second_moments():
    m = WalkModel.single_chain(np.zeros(4), [0.0, 0.05, 0.2, 0.5])
    nu = np.log(simulate_walk(m, 3, size=100_000))
    y = np.exp(nu)
    se = y.std(axis=0, ddof=1) / math.sqrt(len(y))
    assert np.all(np.abs(y.mean(axis=0) - 1) <= 3 * se + 1e-15)
    y2 = np.exp(2 * nu)
    se2 = y2.std(axis=0, ddof=1) / math.sqrt(len(y2))
    assert np.all(np.abs(y2.mean(axis=0) - np.exp(m.sigma2)) <= 4 * se2 + 1e-15)


def test_simulated_increments_are_independent():
    m = WalkModel.single_chain(np.zeros(3), [0.1, 0.3, 0.6])
    nu = np.log(simulate_walk(m, 11, size=200_000))
    inc = np.diff(np.c_[np.zeros(len(nu)), nu], axis=1)
    np.testing.assert_allclose(inc.var(axis=0), [0.1, 0.2, 0.3], rtol=0.02)
    c = np.corrcoef(inc.T)
    assert np.abs(c[np.triu_indices(3, 1)]).max() < 0.01


def test_chains_are_independent_and_interleaving_is_respected():
    # vertices 0,2 form chain 0 and 1,3 chain 1
    m = WalkModel(np.zeros(4), [0.2, 0.3, 0.4, 0.6], [0, 1, 0, 1])
    nu = np.log(simulate_walk(m, 5, size=200_000))
    np.testing.assert_allclose(nu.var(axis=0), m.sigma2, rtol=0.02)
    c = np.cov(nu.T)
    assert c[0, 2] == pytest.approx(0.2, rel=0.03)
    assert c[1, 3] == pytest.approx(0.3, rel=0.03)
    assert abs(c[0, 1]) < 0.005 and abs(c[2, 3]) < 0.006


# --- adapted weights -----------------------------------------------------------------------


def test_weight_on_chain_edge():
    m = WalkModel.single_chain([0.0, 0.0], [0.0, LN2])
    w, kept = adapted_weights(m, DirectedGraph.from_edges(2, [(0, 1)]))
    assert w[0] == pytest.approx(1.0, rel=1e-14) and kept.all()


def test_weight_on_independent_edge():
    m = WalkModel(np.zeros(2), [LN2, LN2], [0, 1])
    w, _ = adapted_weights(m, DirectedGraph.from_edges(2, [(0, 1)]))
    assert w[0] == pytest.approx(0.5, rel=1e-14)


def test_weight_scales_with_target_potential():
    m = WalkModel.single_chain([5.0, 1.5], [0.0, LN2])
    w, _ = adapted_weights(m, DirectedGraph.from_edges(2, [(0, 1)]))
    assert w[0] == pytest.approx(math.exp(-3.0), rel=1e-14)


def test_deterministic_independent_edge_is_dropped():
    m = WalkModel(np.zeros(3), [0.0, 0.0, 0.1], [0, 1, 1])
    g = DirectedGraph.from_edges(3, [(0, 1), (0, 2)])
    with pytest.warns(RuntimeWarning, match="dropping 1 edge"):
        w, kept = adapted_weights(m, g)
    assert kept.tolist() == [False, True] and len(w) == 1


def test_flat_chain_edge_uses_floor():
    m = WalkModel.single_chain([0.0, 0.0], [0.3, 0.3])
    w, _ = adapted_weights(m, DirectedGraph.from_edges(2, [(0, 1)]))
    assert w[0] == 1e12


def test_backward_chain_edge_is_rejected():
    m = WalkModel.single_chain(np.zeros(2), [0.0, 0.1])
    with pytest.raises(ModelError, match="forward"):
        adapted_weights(m, DirectedGraph.from_edges(2, [(1, 0)]))


def test_unit_edge_energy_monte_carlo():
    # chain edges plus an independent edge between two chains
    m = WalkModel([0.3, -0.2, 0.5, 0.1], [0.05, 0.15, 0.1, 0.3], [0, 0, 1, 1])
    g = DirectedGraph.from_edges(4, [(0, 1), (2, 3), (1, 3)])
    w, _ = adapted_weights(m, g)
    a = m.potential[g.dst] - m.potential[g.src]
    F = simulate_walk(m, 9, size=200_000)
    energy = w * (F[:, g.dst] - np.exp(a) * F[:, g.src]) ** 2
    se = energy.std(axis=0, ddof=1) / math.sqrt(len(F))
    assert np.all(np.abs(energy.mean(axis=0) - 1) <= 4 * se)


def test_laplacian_image_has_mean_zero():
    model, g, w = chain_setup(4)
    L = windowed_laplacian(model, g, w)
    F = simulate_walk(model, 21, size=100_000)
    img = F @ L.matrix
    se = img.std(axis=0, ddof=1) / math.sqrt(len(F))
    assert np.all(np.abs(img.mean(axis=0)) <= 4 * se)


# --- fourth moment and U ---------------------------------------------------------------------


def test_fourth_moment_examples():
    assert fourth_moment_edge(0.0, 1e-12) == pytest.approx(3.0, rel=1e-9)
    assert fourth_moment_edge(0.0, LN2) == pytest.approx(41.0, rel=1e-13)


def test_fourth_moment_monte_carlo():
    si, sj = 0.05, 0.15
    rng = np.random.default_rng(2024)
    total, n = 0.0, 0
    for _ in range(10):
        x = rng.normal(-si / 2, math.sqrt(si), 1_000_000)
        y = x + rng.normal(-(sj - si) / 2, math.sqrt(sj - si), 1_000_000)
        w = 1 / (math.exp(sj) - math.exp(si))
        total += np.sum((w * (np.exp(y) - np.exp(x)) ** 2) ** 2)
        n += len(x)
    assert total / n == pytest.approx(fourth_moment_edge(si, sj), rel=0.02)


def test_fourth_moment_agrees_with_exact_edge_variance():
    model, g, w = chain_setup(1, top=0.3)
    var = edge_term_variances(model, g, w)[0]
    assert var + 1.0 == pytest.approx(fourth_moment_edge(0.0, 0.3), rel=1e-12)


def test_U_examples():
    assert variance_bound_U([0.0, 0.0]) == 0.0
    assert variance_bound_U([0.0, 0.0, 0.0]) == 2.0


def test_U_rejects_bad_input():
    with pytest.raises(ModelError):
        variance_bound_U([0.1, 0.0])
    with pytest.raises(ModelError):
        variance_bound_U([0.1])


@given(st.lists(st.floats(0, 0.5), min_size=2, max_size=12).map(sorted))
def test_U_nonnegative(s2):
    assert variance_bound_U(s2) >= 0


# --- exact statistic moments ------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 5])
def test_statistic_mean_is_edge_count(n):
    model, g, w = chain_setup(n)
    mean, var = statistic_moments(model, g, w)
    assert mean == pytest.approx(n, rel=1e-12)
    assert var > 0


def test_exact_variance_single_edge_closed_form():
    # one edge: Var = E[X^2] - 1 with E[X^2] the fourth moment
    model, g, w = chain_setup(1, top=0.2)
    _, var = statistic_moments(model, g, w)
    assert var == pytest.approx(fourth_moment_edge(0.0, 0.2) - 1, rel=1e-12)


def test_exact_variance_matches_monte_carlo():
    model, g, w = chain_setup(5)
    mean, var = statistic_moments(model, g, w)
    s = sample_statistic(model, g, w, 200_000, seed=4)
    assert s.mean() == pytest.approx(mean, abs=4 * s.std() / math.sqrt(len(s)))
    assert s.var() == pytest.approx(var, rel=0.05)


def test_exact_variance_with_independent_edges_matches_monte_carlo():
    m = WalkModel([0.2, 0.4, 0.1, 0.3, 0.0, 0.2], [0.0, 0.1, 0.2, 0.05, 0.15, 0.3], [0, 0, 0, 1, 1, 1])
    g = DirectedGraph.from_edges(6, [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)])
    w, _ = adapted_weights(m, g)
    mean, var = statistic_moments(m, g, w)
    s = sample_statistic(m, g, w, 1_000_000, seed=8)
    assert mean == pytest.approx(7.0, rel=1e-12)
    assert s.mean() == pytest.approx(7.0, abs=4 * s.std() / math.sqrt(len(s)))
    assert s.var() == pytest.approx(var, rel=0.05)


def test_chain_bound_undershoots_exact_variance():
    # the closed-form U leaves out the cross terms between neighbouring edges
    for n in (1, 2, 5, 10):
        model, g, w = chain_setup(n, start=0.0)
        _, var = statistic_moments(model, g, w)
        assert variance_bound_U(model.sigma2) < var


def test_chain_paths_and_bound():
    m = WalkModel(np.zeros(6), [0.0, 0.1, 0.2, 0.0, 0.1, 0.3], [0, 0, 0, 1, 1, 1])
    g = DirectedGraph.from_edges(6, [(0, 1), (1, 2), (3, 4), (4, 5), (1, 4)])
    paths = chain_paths(m, g)
    assert [p.tolist() for p in paths] == [[0, 1, 2], [3, 4, 5]]
    w, _ = adapted_weights(m, g)
    expected = (
        variance_bound_U([0.0, 0.1, 0.2])
        + variance_bound_U([0.0, 0.1, 0.3])
        + edge_term_variances(m, g, w)[g.edge_ids([(1, 4)])[0]]
    )
    assert chain_variance_bound(m, g, w) == pytest.approx(expected, rel=1e-12)


def test_chain_paths_reject_branching():
    m = WalkModel.single_chain(np.zeros(3), [0.0, 0.1, 0.2])
    with pytest.raises(ModelError, match="not a path"):
        chain_paths(m, DirectedGraph.from_edges(3, [(0, 1), (0, 2)]))


def test_statistic_variance_methods():
    model, g, w = chain_setup(3)
    L = windowed_laplacian(model, g, w)
    assert statistic_variance(model, L, "exact") == pytest.approx(statistic_moments(model, g, w)[1])
    assert statistic_variance(model, L, "chain") == pytest.approx(variance_bound_U(model.sigma2))
    with pytest.raises(ValueError):
        statistic_variance(model, L, "other")


# --- Cantelli and thresholds ---------------------------------------------------------------------


@pytest.mark.parametrize("U, delta, p", [(0.0, 1.0, 0.0), (0.0, 7.0, 0.0), (1.0, 1.0, 0.5), (2.0, 3.0, 2 / 11)])
def test_cantelli_examples(U, delta, p):
    assert cantelli_p(U, delta) == pytest.approx(p)


def test_cantelli_rejects_bad_input():
    with pytest.raises(ValueError):
        cantelli_p(1.0, 0.0)
    with pytest.raises(ValueError):
        cantelli_p(-1.0, 1.0)


def test_layer_thresholds():
    lam = 3.0
    t = LN2 / lam
    thr = layer_thresholds(t, lam, 4, 2.0, 3)
    assert thr[0] == pytest.approx(t * 6)
    assert thr[1] == pytest.approx(t * 0.5 * 6)
    np.testing.assert_allclose(thr[1:] / thr[:-1], 0.5)


def test_resolve_delta():
    assert resolve_delta(None, 4.0) == 6.0
    assert resolve_delta("auto", 4.0) == 6.0
    assert resolve_delta(2.5, 4.0) == 2.5
    with pytest.raises(ValueError):
        resolve_delta(None, 0.0)
    with pytest.raises(ValueError):
        resolve_delta(-1.0, 4.0)


# --- anomaly test ------------------------------------------------------------------------------


def test_anomaly_test_on_exp_potential():
    model, g, w = chain_setup(6)
    L = windowed_laplacian(model, g, w)
    v = anomaly_test(L, model, np.exp(model.potential))
    assert v.statistic == pytest.approx(0.0, abs=1e-18)
    assert not v.flagged
    assert v.expected == 6.0
    assert 0 < v.p_bound <= 1
    assert v.p_bound == pytest.approx(0.1)


def test_anomaly_test_rejects_nonpositive_signal():
    model, g, w = chain_setup(3)
    L = windowed_laplacian(model, g, w)
    with pytest.raises(ModelError, match="positive"):
        anomaly_test(L, model, np.array([1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(GraphError):
        anomaly_test(L, model, np.ones(3))


@pytest.mark.slow
def test_anomaly_flag_rate_within_cantelli_bound():
    model, g, w = chain_setup(8)
    L = windowed_laplacian(model, g, w)
    F = simulate_walk(model, 31, size=10_000)
    flags = np.array([anomaly_test(L, model, f).flagged for f in F])
    p = anomaly_test(L, model, F[0]).p_bound
    assert flags.mean() <= p + 3 * math.sqrt(p * (1 - p) / len(F))


def test_anomaly_injection_sets_first_layer_flag():
    # one chain of 24 blocks with two independent neighbour days
    B = 24
    s2 = np.linspace(0.01, 0.1, B)
    phi = np.tile(np.log(100 + 50 * np.sin(np.linspace(0, 3, B))), 3)
    m = WalkModel(phi, np.tile(s2, 3), np.repeat([0, 1, 2], B))
    edges = [(B + b, B + b + 1) for b in range(B - 1)]
    edges += [(b, B + b) for b in range(B)] + [(B + b, 2 * B + b) for b in range(B)]
    g = DirectedGraph.from_edges(3 * B, edges)
    w, _ = adapted_weights(m, g)
    L = windowed_laplacian(m, g, w)
    f = simulate_walk(m, 5)
    f[B : 2 * B] *= 5
    v = anomaly_test(L, m, f)
    assert v.layer_flags[0]
    assert v.statistic > v.expected + v.delta


def test_anomaly_explicit_time_and_delta():
    model, g, w = chain_setup(4)
    L = windowed_laplacian(model, g, w)
    f = simulate_walk(model, 2)
    v = anomaly_test(L, model, f, delta=1.5, t=0.2, layers=3, variance="chain")
    assert v.delta == 1.5 and v.t == 0.2 and len(v.layer_norms) == 3
    assert v.U == pytest.approx(variance_bound_U(model.sigma2))
    assert v.thresholds[0] == pytest.approx(0.2 * (4 + 1.5))
    assert anomaly_test(L, model, f).t == pytest.approx(default_time(L))


def test_flat_chain_edge_has_no_variance():
    m = WalkModel.single_chain([0.0, 3.0, 3.5, 4.0], [0.0, 0.1, 0.1, 0.2])
    g = DirectedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    w, _ = adapted_weights(m, g)
    assert w[1] == 1e12
    assert edge_term_variances(m, g, w)[1] == 0.0
    mean, var = statistic_moments(m, g, w)
    assert mean == pytest.approx(2.0, rel=1e-12)
    s = sample_statistic(m, g, w, 100_000, seed=1)
    assert s.var() == pytest.approx(var, rel=0.05)
