import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patternnav.model import (
    CountStore,
    FactorGraphModel,
    FullJointModel,
    IndependentModel,
    ModelError,
    ObservationSet,
    configuration_table,
)

from oracles import empirical_conditional


def test_observation_set_basics():
    obs = ObservationSet({3: 1})
    assert obs.observe(1, 0) is True
    assert obs.observe(1, 0) is False
    with pytest.raises(ModelError):
        obs.observe(1, 1)
    ids, vals = obs.arrays()
    assert ids.tolist() == [1, 3] and vals.tolist() == [0, 1]
    assert obs.clamp_vector(4).tolist() == [-1, 0, -1, 1]
    with pytest.raises(ModelError):
        obs.clamp_vector(2)


def test_update_touches_only_observed_pairs():
    m = FactorGraphModel(4)
    m.update(ObservationSet({0: 1, 1: 0}))
    c = m.counts
    assert c.unary[0].tolist() == [0, 1] and c.unary[1].tolist() == [1, 0]
    assert c.pair[0, 1].tolist() == [[0, 0], [1, 0]]
    assert c.pair[1, 0].tolist() == [[0, 1], [0, 0]]
    assert c.pair[0, 2].sum() == 0 and c.pair[1, 3].sum() == 0
    assert c.unary[2:].sum() == 0


def test_empty_update_is_noop():
    m = FactorGraphModel(3)
    m.update(ObservationSet())
    assert m.revision == 0 and m.counts == CountStore(3)


def test_laplace_arithmetic():
    m = FactorGraphModel(2)
    for s in (1, 1, 1, 0):
        m.update(ObservationSet({0: s}))
    assert m.unary_probs()[0, 1] == pytest.approx(4 / 6)


def test_fresh_factors_are_independent():
    m = FactorGraphModel(13)
    phi, pairs, psi = m.factors()
    assert len(pairs) == 78 and len(phi) == 13
    assert len(pairs) + len(phi) == 91
    assert np.allclose(psi, 1.0)
    assert np.allclose(m.mi_matrix(), 0.0)


def test_perfect_co_observation_psi():
    m = FactorGraphModel(2)
    for k in range(2000):
        s = k % 2
        m.update(ObservationSet({0: s, 1: s}))
    _, _, psi = m.factors()
    # closed form from the smoothed tables
    c = m.counts
    joint = (c.pair[0, 1] + 0.25) / (c.pair[0, 1].sum() + 1.0)
    assert np.allclose(psi[0], joint / np.outer(joint.sum(axis=1), joint.sum(axis=0)))
    assert psi[0][1, 1] == pytest.approx(2.0, abs=0.01)
    assert psi[0][1, 0] < 0.01
    assert m.pairwise_mi(0, 1) == pytest.approx(1.0, abs=0.01)


def test_pairwise_mi_rejects_self():
    with pytest.raises(ModelError):
        FactorGraphModel(3).pairwise_mi(1, 1)


def entropy(p):
    return -sum(x * math.log2(x) for x in p if x > 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=4, max_size=4))
def test_mi_bounds(cells):
    m = FactorGraphModel(2)
    m.counts.pair[0, 1] = np.array(cells).reshape(2, 2)
    m.counts.pair[1, 0] = np.array(cells).reshape(2, 2).T
    m.revision += 1
    joint = (np.array(cells).reshape(2, 2) + 0.25) / (sum(cells) + 1.0)
    want = sum(
        joint[a, b] * math.log2(joint[a, b] / (joint[a].sum() * joint[:, b].sum()))
        for a in (0, 1) for b in (0, 1)
    )
    mi = m.pairwise_mi(0, 1)
    assert mi == pytest.approx(max(want, 0.0), abs=1e-12)
    assert -1e-12 <= mi <= min(entropy(joint.sum(1)), entropy(joint.sum(0))) + 1e-12


def test_predict_fully_observed_is_exact():
    m = FactorGraphModel(3)
    obs = ObservationSet({0: 1, 1: 0, 2: 1})
    b = m.predict(obs)
    assert b.p_free.tolist() == [1.0, 0.0, 1.0]
    assert b.observed.all()


def test_fresh_prediction_is_half():
    b = FactorGraphModel(5).predict(ObservationSet())
    assert np.allclose(b.p_free, 0.5)


def test_chain_correlated_prediction():
    # exact conditioning on the empirical joint gives p(e2 = 1 | e0 = 0) near 0
    m = FactorGraphModel(3, structure=[(0, 1), (1, 2)])
    for k in range(200):
        s = k % 2
        m.update(ObservationSet({0: s, 1: s, 2: s}))
    b = m.predict(ObservationSet({0: 0}))
    assert b.p_free[2] < 0.2
    assert b.p_free[0] == 0.0


def test_independent_data_gives_unary_marginals():
    m = FactorGraphModel(6)
    # every pattern once: a balanced design whose pair tables factorize
    for row in configuration_table(6):
        m.update(ObservationSet.from_bits(row))
    assert np.allclose(m.factors()[2], 1.0)
    b = m.predict(ObservationSet())
    assert np.abs(b.p_free - m.unary_probs()[:, 1]).max() < 1e-6


def test_independent_model_ignores_observations():
    m = IndependentModel(4)
    m.update(ObservationSet({0: 1, 1: 1, 2: 0}))
    base = m.predict(ObservationSet()).p_free
    cond = m.predict(ObservationSet({0: 1}))
    assert np.allclose(cond.p_free[1:], base[1:])
    assert cond.p_free[0] == 1.0


def test_independent_matches_fresh_factor_graph():
    ind, fg = IndependentModel(5), FactorGraphModel(5)
    obs = ObservationSet({1: 0, 3: 1})
    assert np.allclose(ind.predict(obs).p_free, fg.predict(obs).p_free)


def test_full_joint_sizes():
    fj = FullJointModel(13)
    assert fj.n_cells == 8192
    with pytest.raises(ModelError):
        FullJointModel(21)
    with pytest.raises(ModelError):
        fj.update(ObservationSet({0: 1}))


def test_full_joint_point_mass():
    fj = FullJointModel(4)
    fj.update(ObservationSet.from_bits([1, 0, 1, 1]))
    assert fj.predict(ObservationSet.from_bits([0, 0, 1, 0])).p_free.tolist() == [0, 0, 1, 0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(0, 30))
def test_full_joint_equals_enumeration(seed, n, k):
    rng = np.random.default_rng(seed)
    configs = rng.integers(0, 2, size=(k, n))
    fj = FullJointModel(n, cell_prior=0.3)
    fj.update_bits(configs)
    observed = {int(e): int(rng.integers(2)) for e in rng.choice(n, int(rng.integers(0, n)), replace=False)}
    got = fj.predict(ObservationSet(observed)).p_free
    want = empirical_conditional(configs, observed, 0.3, n)
    for e, s in observed.items():
        want[e] = s
    assert np.allclose(got, want, atol=1e-12)


def test_factor_product_identity():
    """The unnormalized product of phi and psi evaluated directly on configurations."""
    rng = np.random.default_rng(8)
    m = FactorGraphModel(4)
    for _ in range(30):
        ids = rng.choice(4, int(rng.integers(1, 5)), replace=False)
        m.update(ObservationSet({int(e): int(rng.integers(2)) for e in ids}))
    phi, pairs, psi = m.factors()
    g = m.factor_graph()
    for x in configuration_table(4):
        a = np.prod([phi[v, x[v]] for v in range(4)])
        a *= np.prod([t[x[i], x[j]] for (i, j), t in zip(pairs, psi)])
        b = np.prod([g.unary[v, x[v]] for v in range(4)])
        b *= np.prod([t[x[i], x[j]] for (i, j), t in zip(g.pairs, g.tables)])
        assert a == pytest.approx(b, rel=1e-12)


def random_stream(rng, n, length):
    out = []
    for _ in range(length):
        k = int(rng.integers(0, n + 1))
        ids = rng.choice(n, k, replace=False)
        out.append(ObservationSet({int(e): int(rng.integers(2)) for e in ids}))
    return out


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_update_order_is_irrelevant(seed):
    rng = np.random.default_rng(seed)
    stream = random_stream(rng, 6, 25)
    a, b = FactorGraphModel(6), FactorGraphModel(6)
    for obs in stream:
        a.update(obs)
    for k in rng.permutation(len(stream)):
        b.update(stream[k])
    assert a.counts == b.counts


def test_count_invariants():
    rng = np.random.default_rng(1)
    m = FactorGraphModel(5)
    for obs in random_stream(rng, 5, 40):
        m.update(obs)
    c = m.counts
    assert np.array_equal(c.pair, c.pair.transpose(1, 0, 3, 2))
    assert np.all(c.smoothed_unary() >= c.unary_prior)
    p = m.unary_probs()[:, 1]
    assert np.all((p > 0) & (p < 1))
    assert np.allclose(m.pair_joints().sum(axis=(2, 3)), 1.0)


def test_persistence_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    m = FactorGraphModel(6)
    for obs in random_stream(rng, 6, 30):
        m.update(obs)
    path = tmp_path / "counts.json"
    m.save(path)
    m2 = FactorGraphModel.load(path)
    assert m2.counts == m.counts
    obs = ObservationSet({0: 1})
    assert np.array_equal(m.predict(obs).p_free, m2.predict(obs).p_free)


def test_bad_document():
    with pytest.raises(ModelError):
        CountStore.from_document({"format": "other"})


def test_predict_is_cached_by_revision():
    m = FactorGraphModel(4)
    first = m.factors()
    assert m.factors() is first
    m.update(ObservationSet({0: 1}))
    assert m.factors() is not first


def test_mi_threshold_sparsifies():
    m = FactorGraphModel(3, mi_threshold=0.1)
    for k in range(100):
        s = k % 2
        m.update(ObservationSet({0: s, 1: s, 2: int(k % 3 == 0)}))
    g = m.factor_graph()
    assert (0, 1) in g.pairs and (0, 2) not in g.pairs
