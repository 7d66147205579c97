import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmlearn import (AttributedGraph, CompatibilityTables, GraduatedAssignmentConfig, Matching,
                     graduated_assignment, linear_assignment, objective_value, sinkhorn)
from gmlearn.core import validate_matching
from gmlearn.features import build_graph, delaunay_adjacency
from gmlearn.solvers import (bistochastic_normalize, bistochastic_normalize_baseline, brute_force_lap,
                             brute_force_qap, exp_decay_compatibility, log_sinkhorn)

from conftest import injections, quad_oracle, random_graph


def best_value(c):
    return max(float(np.sum(c * y)) for y in injections(*c.shape))


def test_lap_identity():
    y = linear_assignment(np.eye(3))
    assert y == Matching.identity(3)
    assert float(np.sum(np.eye(3) * y.assign)) == 3.0


def test_lap_single_large_entries():
    perm = [2, 0, 3, 1]
    c = np.zeros((4, 5))
    c[np.arange(4), perm] = 10.0
    assert linear_assignment(c).perm.tolist() == perm


def test_lap_matches_enumeration_5x6(rng):
    for _ in range(100):
        c = rng.normal(size=(5, 6))
        assert float(np.sum(c * linear_assignment(c).assign)) == best_value(c)


def test_lap_errors():
    with pytest.raises(ValueError):
        linear_assignment(np.zeros((4, 3)))
    with pytest.raises(ValueError):
        linear_assignment(np.array([[np.inf, 0.0], [0.0, 0.0]]))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), extra=st.integers(0, 2),
       shift=st.floats(-100, 100))
def test_lap_shift_invariant(seed, n, extra, shift):
    c = np.random.default_rng(seed).normal(size=(n, n + extra))
    # exact ties are measure-zero for continuous costs, so the argmax itself must agree
    assert linear_assignment(c) == linear_assignment(c + shift)


def test_lap_deterministic(rng):
    c = rng.integers(0, 3, size=(6, 6)).astype(float)  # plenty of ties
    assert all(linear_assignment(c) == linear_assignment(c.copy()) for _ in range(5))


def test_brute_force_lap_lexicographic_ties():
    assert brute_force_lap(np.zeros((2, 3))).perm.tolist() == [0, 1]


def test_brute_force_qap_zero_edge_weight_is_lap(rng):
    for _ in range(20):
        g, gp = random_graph(rng, 4), random_graph(rng, 5)
        c = rng.normal(size=(4, 5))
        t = CompatibilityTables(c, 0.0)
        assert objective_value(t, g, gp, brute_force_qap(t, g, gp)) == best_value(c)


def test_brute_force_qap_identity_on_identical_graphs(rng):
    g = build_graph(rng.random((6, 2)))
    t = CompatibilityTables(100.0 * np.eye(6), 1.0)
    assert brute_force_qap(t, g, g) == Matching.identity(6)


def test_brute_force_qap_beats_random_samples(rng):
    g, gp = random_graph(rng, 5), random_graph(rng, 5)
    c, ew = rng.normal(size=(5, 5)), 0.8
    t = CompatibilityTables(c, ew)
    best = objective_value(t, g, gp, brute_force_qap(t, g, gp))
    for _ in range(1000):
        y = np.eye(5)[rng.permutation(5)]
        assert best >= quad_oracle(c, ew, g.adjacency, gp.adjacency, y) - 1e-12


def test_brute_force_qap_guard(rng):
    g = random_graph(rng, 9)
    with pytest.raises(ValueError):
        brute_force_qap(CompatibilityTables(np.zeros((9, 9))), g, g)


def test_sinkhorn_fixed_point():
    m = np.full((4, 4), 0.25)
    ds = sinkhorn(m)
    assert ds.iterations == 0 and ds.deviation == 0.0
    assert np.array_equal(ds.m, m)


def test_sinkhorn_all_ones():
    ds = sinkhorn(np.ones((5, 5)))
    assert np.allclose(ds.m, 0.2, rtol=0, atol=1e-15)


def test_sinkhorn_random_6x6(rng):
    for _ in range(20):
        ds = sinkhorn(rng.random((6, 6)) + 1e-3, tol=1e-6, max_iters=300)
        assert ds.iterations <= 300
        assert np.abs(ds.m.sum(axis=0) - 1).max() < 1e-6
        assert np.abs(ds.m.sum(axis=1) - 1).max() < 1e-6


def test_sinkhorn_errors():
    with pytest.raises(ValueError):
        sinkhorn(np.array([[1.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        sinkhorn(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8))
def test_sinkhorn_keeps_positivity(seed, k):
    m = np.random.default_rng(seed).random((k, k)) + 1e-6
    assert (sinkhorn(m, max_iters=50).m > 0).all()


def test_log_sinkhorn_agrees_with_linear(rng):
    m = rng.random((6, 6)) + 0.01
    a, b = sinkhorn(m, tol=1e-12, max_iters=2000), log_sinkhorn(np.log(m), tol=1e-12, max_iters=2000)
    assert np.allclose(a.m, b.m, atol=1e-10)


def test_log_sinkhorn_warm_start_same_fixed_point(rng):
    log_m = 3 * rng.normal(size=(5, 5))
    cold = log_sinkhorn(log_m, tol=1e-10, max_iters=5000)
    warm = log_sinkhorn(log_m, tol=1e-10, max_iters=5000, log_col_scaling=cold.log_col_scaling)
    assert cold.deviation < 1e-10
    assert warm.iterations < cold.iterations
    assert np.allclose(cold.m, warm.m, atol=1e-8)


def test_ga_diagonal_without_edges(rng):
    g, gp = random_graph(rng, 6), random_graph(rng, 6)
    c = 5 * np.eye(6) + 0.1 * rng.random((6, 6))
    assert graduated_assignment(CompatibilityTables(c, 0.0), g, gp) == Matching.identity(6)


def test_ga_identical_delaunay_graphs(rng):
    hits = 0
    for _ in range(10):
        pts = rng.random((5, 2))
        g = AttributedGraph(pts, np.zeros((5, 1)), delaunay_adjacency(pts))
        c = np.eye(5) + 0.3 * rng.random((5, 5))
        t = CompatibilityTables(c, 0.5)
        hits += graduated_assignment(t, g, g) == brute_force_qap(t, g, g)
    assert hits == 10


def test_ga_beats_lap_on_most_quadratic_instances(rng):
    wins = 0
    for _ in range(100):
        pts = rng.random((6, 2))
        g = AttributedGraph(pts, np.zeros((6, 1)), delaunay_adjacency(pts))
        q = rng.permutation(6)
        gp = AttributedGraph(pts[q], np.zeros((6, 1)), g.adjacency[np.ix_(q, q)])
        t = CompatibilityTables(rng.normal(size=(6, 6)), 0.5)
        ga = objective_value(t, g, gp, graduated_assignment(t, g, gp))
        lap = objective_value(t, g, gp, linear_assignment(t.c))
        wins += ga >= lap - 1e-12
    assert wins >= 90, wins


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6), extra=st.integers(0, 3),
       scale=st.floats(0.01, 100.0))
def test_ga_output_is_valid_matching(seed, n, extra, scale):
    rng = np.random.default_rng(seed)
    g, gp = random_graph(rng, n), random_graph(rng, n + extra)
    t = CompatibilityTables(scale * rng.normal(size=(n, n + extra)), scale * rng.normal())
    cfg = GraduatedAssignmentConfig(beta_rate=1.5)
    y = graduated_assignment(t, g, gp, cfg)
    assert validate_matching(y.assign, n, n + extra) is None


def test_ga_large_beta_no_edges_equals_lap(rng):
    cfg = GraduatedAssignmentConfig(beta_max=2000.0, beta_rate=1.5)
    for _ in range(20):
        g, gp = random_graph(rng, 5), random_graph(rng, 6)
        c = rng.normal(size=(5, 6))
        ga = graduated_assignment(CompatibilityTables(c, 0.0), g, gp, cfg)
        assert float(np.sum(c * ga.assign)) == best_value(c)


def test_ga_errors(rng):
    g, gp = random_graph(rng, 4), random_graph(rng, 3)
    with pytest.raises(ValueError):
        graduated_assignment(CompatibilityTables(np.zeros((4, 3))), g, gp)
    with pytest.raises(ValueError):
        graduated_assignment(CompatibilityTables(np.full((3, 3), np.nan)), gp, gp)
    with pytest.raises(ValueError):
        GraduatedAssignmentConfig(beta0=20.0)
    with pytest.raises(ValueError):
        GraduatedAssignmentConfig(beta_rate=1.0)


def test_bistochastic_identical_graphs_diagonal(rng):
    g = build_graph(rng.random((7, 2)))
    raw = exp_decay_compatibility(g, g)
    assert np.array_equal(np.diag(raw), np.ones(7))
    assert (raw.max(axis=1) == 1.0).all()


def test_bistochastic_converges_on_random_pairs(rng):
    for _ in range(5):
        g, gp = build_graph(rng.random((10, 2))), build_graph(rng.random((10, 2)))
        sq = ((g.node_attrs[:, None] - gp.node_attrs[None]) ** 2).sum(axis=2)
        m, changes = bistochastic_normalize(np.exp(-(sq - sq.min(axis=1, keepdims=True))), 1e-5)
        assert changes[-1] < 1e-5
        # the last half-sweep fixes the columns; rows are only close
        assert np.allclose(m.sum(axis=0), 1.0, atol=1e-12)
        assert np.allclose(m.sum(axis=1), 1.0, atol=1e-2)
        t = bistochastic_normalize_baseline(g, gp, 1e-5)
        assert (t.c >= 0).all()
        assert np.array_equal(t.c, m)


def test_bistochastic_rectangular_column_target(rng):
    m, changes = bistochastic_normalize(rng.random((3, 5)) + 0.1, 1e-9)
    assert np.allclose(m.sum(axis=1), 1.0, atol=1e-6)
    assert np.allclose(m.sum(axis=0), 3 / 5, atol=1e-6)


def test_bistochastic_edge_weight(rng):
    g = build_graph(rng.random((8, 2)))
    deg = g.adjacency.sum() / 8
    assert bistochastic_normalize_baseline(g, g).edge_weight == pytest.approx(1 / deg)
    assert bistochastic_normalize_baseline(g, g, edge_weight=0.0).edge_weight == 0.0
