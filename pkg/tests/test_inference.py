import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patternnav.inference import (
    BpSettings,
    FactorGraph,
    InferenceError,
    argmax_free_ties,
    clamp,
    map_configuration,
    run_bp,
    run_bp_batch,
)

from oracles import exact_map, exact_marginals, exact_marginals_fast, random_tree


def random_tree_graph(rng, n, clamp_prob=0.2):
    g = FactorGraph(n, rng.uniform(0.1, 1, (n, 2)))
    for a, b in random_tree(rng, n):
        g.add_pair(a, b, rng.uniform(0.1, 3, (2, 2)))
    for v in range(n):
        if rng.random() < clamp_prob:
            g.clamp(v, int(rng.integers(2)))
    return g


def test_single_variable():
    g = FactorGraph(1, [[0.3, 0.7]])
    r = run_bp(g)
    assert r.converged
    assert r.p_free[0] == pytest.approx(0.7)


def test_two_variable_closed_form():
    g = FactorGraph(2, [[1, 1], [1, 1]], [(0, 1)], [[[2, 1], [1, 2]]])
    assert np.allclose(run_bp(g).marginals, 0.5)
    g.clamp(0, 1)
    # p(x1 = 1 | x0 = 1) = 2 / 3
    assert run_bp(g).p_free[1] == pytest.approx(2 / 3, abs=1e-6)


def test_clamp_conflict_and_idempotence():
    g = FactorGraph(2)
    clamp(g, 0, 1)
    clamp(g, 0, 1)
    assert g.clamps == {0: 1}
    with pytest.raises(InferenceError):
        g.clamp(0, 0)


def test_clamped_beliefs_are_point_masses():
    rng = np.random.default_rng(3)
    g = random_tree_graph(rng, 6, clamp_prob=0.0)
    g.clamp(2, 0)
    b = run_bp(g).marginals
    assert b[2].tolist() == [1.0, 0.0]


@pytest.mark.parametrize("table", [np.ones((3, 3)), [[1, 0], [1, 1]], [[1, -1], [1, 1]]])
def test_bad_pair_tables(table):
    with pytest.raises(InferenceError):
        FactorGraph(2).add_pair(0, 1, table)


def test_self_pair_and_duplicates():
    g = FactorGraph(3)
    with pytest.raises(InferenceError):
        g.add_pair(1, 1, np.ones((2, 2)))
    g.add_pair(0, 1, np.ones((2, 2)))
    with pytest.raises(InferenceError):
        g.add_pair(1, 0, np.ones((2, 2)))


def test_reversed_pair_is_transposed():
    t = np.array([[1.0, 3.0], [2.0, 5.0]])
    a = FactorGraph(2, [[1, 2], [3, 1]])
    a.add_pair(0, 1, t)
    b = FactorGraph(2, [[1, 2], [3, 1]])
    b.add_pair(1, 0, t.T)
    assert np.allclose(run_bp(a).marginals, run_bp(b).marginals)


def test_bad_settings():
    for kw in ({"max_iter": 0}, {"tol": 0}, {"damping": 1.0}, {"schedule": "random"}):
        with pytest.raises(InferenceError):
            BpSettings(**kw)


def test_default_settings_on_trees():
    rng = np.random.default_rng(11)
    for _ in range(40):
        g = random_tree_graph(rng, int(rng.integers(2, 12)))
        r = run_bp(g)
        assert r.converged
        assert np.abs(r.marginals - exact_marginals_fast(g)).max() < 5e-6


@pytest.mark.parametrize("schedule", ["flooding", "sequential"])
def test_tree_exact_undamped(schedule):
    rng = np.random.default_rng(5)
    s = BpSettings(damping=0.0, schedule=schedule)
    for _ in range(30):
        g = random_tree_graph(rng, int(rng.integers(2, 10)))
        assert np.allclose(run_bp(g, s).marginals, exact_marginals(g), atol=1e-10)


def test_fast_oracle_agrees_with_slow():
    rng = np.random.default_rng(9)
    g = loopy_graph(rng, 7)
    g.clamp(4, 1)
    assert np.allclose(exact_marginals(g), exact_marginals_fast(g))


def loopy_graph(rng, n):
    g = FactorGraph(n, rng.uniform(0.5, 2, (n, 2)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.4:
                g.add_pair(i, j, rng.uniform(0.5, 2, (2, 2)))
    return g


def test_damping_reaches_same_fixed_point():
    rng = np.random.default_rng(21)
    for _ in range(20):
        g = loopy_graph(rng, int(rng.integers(3, 9)))
        a = run_bp(g, BpSettings(damping=0.0))
        b = run_bp(g, BpSettings(damping=0.5))
        if a.converged and b.converged:
            assert np.abs(a.marginals - b.marginals).max() < 1e-5


def test_nonconvergence_is_flagged():
    # strongly frustrated triangle oscillates without damping
    t = np.array([[1e-3, 1.0], [1.0, 1e-3]])
    g = FactorGraph(3, [[1, 3], [1, 1], [2, 1]], [(0, 1), (1, 2), (0, 2)], [t, t, t])
    r = run_bp(g, BpSettings(max_iter=3, damping=0.0))
    assert r.iterations == 3 and not r.converged
    assert np.all((r.marginals >= 0) & (r.marginals <= 1))


def test_batch_matches_single():
    rng = np.random.default_rng(2)
    g = loopy_graph(rng, 7)
    idx, tabs = g.pair_arrays()
    clamps = np.full((4, 7), -1, dtype=np.int8)
    clamps[1, 0] = 1
    clamps[2, [3, 5]] = [0, 1]
    clamps[3] = [1, 0, 1, 0, 1, 0, 1]
    beliefs, conv, _, _ = run_bp_batch(g.unary, idx, tabs, clamps)
    for row, c in enumerate(clamps):
        h = loopy_graph(np.random.default_rng(2), 7)
        for v, s in enumerate(c):
            if s >= 0:
                h.clamp(v, int(s))
        # batch members stop together, so compare loosely
        assert np.abs(beliefs[row] - run_bp(h).marginals).max() < 1e-5


def test_argmax_prefers_free_on_ties():
    b = np.array([[0.5, 0.5], [0.7, 0.3], [0.2, 0.8]])
    assert argmax_free_ties(b).tolist() == [1, 0, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 9))
def test_map_on_trees_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    g = random_tree_graph(rng, n)
    assert tuple(map_configuration(g).tolist()) == exact_map(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10))
def test_tree_marginals_property(seed, n):
    g = random_tree_graph(np.random.default_rng(seed), n)
    r = run_bp(g, BpSettings(tol=1e-10))
    assert np.abs(r.marginals - exact_marginals_fast(g)).max() < 1e-6
    assert np.allclose(r.marginals.sum(axis=1), 1.0)


def test_debug_document():
    g = FactorGraph(2, None, [(0, 1)], [np.ones((2, 2))])
    g.clamp(1, 0)
    doc = g.to_document()
    assert doc["variables"] == 2 and doc["clamps"] == {"1": 0}
    assert doc["pairs"][0]["i"] == 0
