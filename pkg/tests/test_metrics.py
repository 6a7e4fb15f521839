import logging
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from khopfair.exceptions import DomainGapError, MetricUndefinedError
from khopfair.graph import AttributedGraph, load_graph
from khopfair.khop import khop_index
from khopfair.metrics import (ScoreMatrix, assortativity, assortativity_binary, auc, auc_from_values,
                              dp_decomposition, dyadic_metrics, format_scores, group_exposure,
                              load_scores, mixing_matrix, nb, nb_binary, nb_profile, nf,
                              node_exposure)
from khopfair.toygen import gen_star, gen_toy
from oracles import exact_exposure, exact_gap, random_connected


def _graph(n, edges, groups):
    return AttributedGraph(n=n, edges=np.array(edges).reshape(-1, 2), groups=np.array(groups))


def _random_graph(seed, n=None, groups=2):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(6, 40))
    edges = random_connected(rng, n, int(rng.integers(0, 2 * n)))
    labels = rng.integers(0, groups, n)
    labels[:groups] = np.arange(groups)
    return _graph(n, edges, labels)


def _dense_scores(seed, n):
    p = np.random.default_rng(seed).random((n, n))
    np.fill_diagonal(p, 0)
    return ScoreMatrix.from_dense(p)


# -- node and group exposure ------------------------------------------------

def test_star_center_exposure():
    g = gen_star(12, "2/3")
    f = node_exposure(g, khop_index(g, 1), None, 0)
    assert f == pytest.approx([2 / 3, 1 / 3], abs=1e-15)


def test_zero_scores_give_zero_exposure(path3):
    zero = ScoreMatrix.from_dense(np.zeros((3, 3)))
    assert np.all(node_exposure(path3, khop_index(path3, 1), zero, 1) == 0)


def test_path_exposure_by_hand(path3):
    s = ScoreMatrix(3, [1, 1], [0, 2], [0.4, 0.8])
    f = node_exposure(path3, khop_index(path3, 1), s, 1)
    assert f == pytest.approx([0.6, 0.0], abs=1e-15)


def test_empty_neighborhood_and_domain_gap(path3):
    idx2 = khop_index(path3, 2)
    with pytest.raises(MetricUndefinedError, match="empty k-neighborhood"):
        node_exposure(path3, idx2, None, 1)
    s = ScoreMatrix(3, [1], [0], [0.4])
    with pytest.raises(DomainGapError, match=r"domain gap at \(1,2\)"):
        node_exposure(path3, khop_index(path3, 1), s, 1)
    with pytest.raises(DomainGapError, match=r"domain gap at \(0,1\)"):
        nf(path3, 1, s)


def test_toy_a_second_hop_phi():
    t = group_exposure(gen_toy("a", 5), k=2)
    assert t.phi[0, 0] == pytest.approx(5 / 11, abs=1e-14)
    assert t.phi[1, 1] == pytest.approx(5 / 11, abs=1e-14)


def test_uniform_scores_scale_indicator_phi():
    g = gen_toy("c", 4)
    idx = khop_index(g, 2)
    c = 0.35
    r, col = idx.pairs.nonzero()
    s = ScoreMatrix(g.n, r, col, np.full(r.size, c))
    assert np.allclose(group_exposure(g, idx, s).phi, c * group_exposure(g, idx).phi, atol=1e-15)


@pytest.mark.parametrize("seed", range(8))
def test_matrix_path_matches_loop_path(seed):
    g = _random_graph(seed, n=30, groups=3)
    s = _dense_scores(seed, g.n)
    for k in (1, 2, 3):
        idx = khop_index(g, k)
        if idx.is_empty():
            continue
        t = group_exposure(g, idx, s)
        for v in idx.v_k:
            assert np.abs(t.f[v] - node_exposure(g, idx, s, v)).max() <= 1e-14


def test_undefined_group_rows_are_flagged(caplog):
    # P5 with groups 2,0,1,0,1: only the endpoints (groups 2 and 1) are 4 hops apart
    edges = [(0, 1), (1, 2), (2, 3), (3, 4)]
    g = _graph(5, edges, [2, 0, 1, 0, 1])
    t = group_exposure(g, k=4)
    assert t.undefined_groups == [0]
    assert t.defined_groups.tolist() == [1, 2]
    assert np.all(np.isnan(t.phi[0]))
    with caplog.at_level(logging.WARNING):
        value = nb(g, 4)
    assert "excluded" in caplog.text
    assert value == pytest.approx(float(exact_gap(5, edges, [2, 0, 1, 0, 1], 4)), abs=1e-15)
    with pytest.raises(MetricUndefinedError):
        nb(_graph(3, [(0, 1), (1, 2)], [0, 1, 0]), 2)


# -- NF and NB ----------------------------------------------------------------

def test_nf_path_by_hand(path3):
    s = ScoreMatrix(3, [0, 1, 1, 2], [1, 0, 2, 1], [1, 1, 0, 0])
    assert nf(path3, 1, s) == pytest.approx(0.5, abs=1e-15)


def test_constant_scores_on_toy_a_scale_structural_bias():
    # swapping colors and bridges maps toy (a) to itself, which forces
    # phi_00 = phi_11 but not phi_00 = phi_10; NF is c * NB, zero only at k = 3
    g = gen_toy("a", 5)
    c = 0.3
    s = ScoreMatrix.from_dense(np.full((g.n, g.n), c))
    assert [nf(g, k, s) for k in (1, 2, 3)] == pytest.approx([c / 121, c / 11, 0.0], abs=1e-15)
    t = group_exposure(g, k=1)
    assert t.phi[0, 0] == pytest.approx(t.phi[1, 1], abs=1e-15)


def test_indicator_scores_reproduce_nb():
    g = gen_toy("b", 5)
    s = ScoreMatrix.from_dense(np.ones((g.n, g.n)))
    for k in (1, 2, 3):
        assert nf(g, k, s) == nb(g, k)


def test_nb_known_values():
    assert nb(gen_star(12, "2/3"), 1) == pytest.approx(1 / 27, abs=1e-15)
    a = gen_toy("a", 5)
    assert [nb(a, k) for k in (1, 2, 3)] == pytest.approx([1 / 121, 1 / 11, 0], abs=1e-15)
    c = gen_toy("c", 5)
    assert [nb(c, k) for k in (1, 2, 3)] == pytest.approx([1 / 6, 13 / 66, 3 / 11], abs=1e-15)


def test_nb_binary_examples():
    assert nb_binary(gen_toy("b", 5), 1) == pytest.approx(13 / 33, abs=1e-15)
    bip = _graph(6, [(i, j) for i in range(3) for j in range(3, 6)], [0, 0, 0, 1, 1, 1])
    assert nb_binary(bip, 1) == pytest.approx(1.0)
    with pytest.raises(MetricUndefinedError):
        nb_binary(_random_graph(1, n=12, groups=3), 1)


def test_fewer_than_two_groups_is_undefined():
    g = _graph(3, [(0, 1), (1, 2)], [0, 0, 0])
    with pytest.raises(MetricUndefinedError):
        nb(g, 1)


def test_nb_profile_lists_every_level():
    prof = nb_profile(gen_toy("b", 5))
    assert sorted(prof) == [1, 2, 3, 4, 5]
    assert prof[3] == pytest.approx(7 / 11)


def test_weighted_mode_with_unit_weights_matches_count_mode():
    g = gen_toy("c", 3)
    w = AttributedGraph(n=g.n, edges=g.edges, groups=g.groups, weights=np.ones(g.m))
    # with unit weights the walk-weight normalizer is the degree at k = 1
    assert nb(w, 1, weighted=True) == pytest.approx(nb(g, 1), abs=1e-15)
    assert 0.0 <= nb(w, 2, weighted=True) <= 1.0


def test_presence_normalizer_differs_from_count():
    g = gen_toy("a", 3)
    assert nb(g, 1, normalizer="presence") != pytest.approx(nb(g, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(1, 3))
def test_nf_and_nb_match_fraction_oracle(seed, groups, k):
    g = _random_graph(seed, groups=groups)
    rng = np.random.default_rng(seed + 1)
    q = rng.integers(0, 8, (g.n, g.n))
    frac = lambda i, j: Fraction(int(q[i, j]), 7)
    s = ScoreMatrix.from_dense(np.minimum(q / 7.0, 1.0))
    edges = [tuple(e) for e in g.edges.tolist()]
    _, phi = exact_exposure(g.n, edges, g.groups.tolist(), k)
    if len({a for a, _ in phi}) < 2:
        return
    assert nb(g, k) == pytest.approx(float(exact_gap(g.n, edges, g.groups.tolist(), k)), abs=1e-12)
    q = np.minimum(q, 7)
    assert nf(g, k, s) == pytest.approx(float(exact_gap(g.n, edges, g.groups.tolist(), k, frac)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_indicator_rows_are_stochastic(seed, k):
    g = _random_graph(seed, groups=3)
    idx = khop_index(g, k)
    if idx.is_empty():
        return
    t = group_exposure(g, idx)
    assert np.abs(t.f[idx.v_k].sum(axis=1) - 1).max() <= 1e-12
    defined = t.defined_groups
    assert np.abs(t.phi[defined].sum(axis=1) - 1).max() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.integers(1, 2))
def test_nf_is_positively_homogeneous(seed, c, k):
    g = _random_graph(seed)
    p = np.random.default_rng(seed).random((g.n, g.n))
    np.fill_diagonal(p, 0)
    try:
        base = nf(g, k, ScoreMatrix.from_dense(p))
    except MetricUndefinedError:
        return
    assert nf(g, k, ScoreMatrix.from_dense(c * p)) == pytest.approx(c * base, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations([0, 1, 2]), st.integers(1, 2))
def test_group_relabeling_is_equivariant(seed, perm, k):
    g = _random_graph(seed, groups=3)
    relabeled = _graph(g.n, g.edges, np.array(perm)[g.groups])
    s = _dense_scores(seed, g.n)
    t, u = group_exposure(g, k=k, scores=s), group_exposure(relabeled, k=k, scores=s)
    assert np.allclose(u.phi[np.ix_(perm, perm)], t.phi, equal_nan=True, atol=1e-14)
    try:
        assert nf(relabeled, k, s) == pytest.approx(nf(g, k, s), abs=1e-14)
    except MetricUndefinedError:
        pass


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_nb_binary_equals_nb(seed, k):
    g = _random_graph(seed)
    try:
        ref = nb(g, k)
    except MetricUndefinedError:
        return
    t = group_exposure(g, k=k)
    if t.undefined_groups:
        return
    assert nb_binary(g, k) == pytest.approx(ref, abs=1e-12)


# -- assortativity --------------------------------------------------------------

def test_assortativity_examples():
    assert assortativity(gen_star(12, "2/3")) == pytest.approx(-1 / 5, abs=1e-15)
    for v in "abc":
        assert assortativity(gen_toy(v, 5)) == pytest.approx(-1 / 21, abs=1e-15)
    homo = _graph(4, [(0, 1), (2, 3)], [0, 0, 1, 1])
    assert assortativity(homo) == pytest.approx(1.0)
    with pytest.raises(MetricUndefinedError):
        assortativity(_graph(3, [(0, 1), (1, 2)], [0, 0, 0]))


def test_mixing_matrix_is_symmetric_distribution():
    e = mixing_matrix(gen_toy("b", 4))
    assert np.allclose(e, e.T) and e.sum() == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_binary_assortativity_closed_form(seed):
    g = _random_graph(seed)
    try:
        ref = assortativity(g)
    except MetricUndefinedError:
        return
    assert assortativity_binary(g) == pytest.approx(ref, abs=1e-12)
    assert -1 - 1e-12 <= ref <= 1 + 1e-12


# -- dyadic, AUC, decomposition ------------------------------------------------------

def test_dyadic_examples():
    groups = np.array([0, 0, 1, 1])
    pairs = [(0, 1), (2, 3), (0, 2), (1, 3)]
    p = np.zeros((4, 4))
    p[0, 1], p[2, 3], p[0, 2], p[1, 3] = 0.8, 0.6, 0.3, 0.1
    rep = dyadic_metrics(ScoreMatrix.from_dense(p), pairs, [1, 1, 1, 1], groups)
    assert rep.dp == pytest.approx(0.5) and rep.eo == pytest.approx(0.5)
    const = ScoreMatrix.from_dense(np.full((4, 4), 0.4))
    assert dyadic_metrics(const, pairs, [1, 0, 1, 0], groups).dp == pytest.approx(0.0)
    ind = ScoreMatrix.from_dense((groups[:, None] == groups[None, :]).astype(float))
    assert dyadic_metrics(ind, pairs, [0, 0, 0, 0], groups).dp == pytest.approx(1.0)


def test_dyadic_empty_stratum_reported():
    groups = np.array([0, 0, 1, 1])
    rep = dyadic_metrics(ScoreMatrix.from_dense(np.full((4, 4), 0.5)), [(0, 1), (0, 2)], [1, 0], groups)
    assert rep.eo is None and rep.undefined == ["eo"] and rep.dp == pytest.approx(0.0)


def test_auc_examples():
    assert auc_from_values([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert auc_from_values([0.5, 0.5], [0.5, 0.5]) == 0.5
    assert auc_from_values([0.9, 0.4], [0.5, 0.1]) == 0.75
    s = ScoreMatrix(3, [0, 1], [1, 2], [0.9, 0.1])
    assert auc(s, [(0, 1)], [(1, 2)]) == 1.0
    with pytest.raises(DomainGapError):
        auc(s, [(0, 2)], [(1, 2)])


def test_decomposition_constant_scores():
    g = gen_toy("b", 3)
    d = dp_decomposition(g, ScoreMatrix.from_dense(np.full((g.n, g.n), 0.7)))
    assert d.direct_dp == pytest.approx(0.0, abs=1e-15) and d.decomposed_dp == pytest.approx(0.0, abs=1e-14)


def test_decomposition_on_path_seed_3(path3):
    d = dp_decomposition(path3, _dense_scores(3, 3))
    assert d.residual <= 1e-12
    assert sum(t["omega"] for t in d.terms.values()) == pytest.approx(1.0, abs=1e-15)


def test_decomposition_preconditions():
    with pytest.raises(MetricUndefinedError):
        dp_decomposition(_graph(4, [(0, 1), (2, 3)], [0, 1, 0, 1]), _dense_scores(0, 4))
    with pytest.raises(MetricUndefinedError):
        dp_decomposition(_random_graph(0, n=10, groups=3), _dense_scores(0, 10))
    g = gen_toy("a", 3)
    with pytest.raises(DomainGapError):
        dp_decomposition(g, ScoreMatrix.from_graph(g))
    assert dp_decomposition(g, ScoreMatrix.from_graph(g), fill=0.0).residual <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decomposition_identity(seed):
    g = _random_graph(seed, n=int(np.random.default_rng(seed).integers(3, 40)))
    d = dp_decomposition(g, _dense_scores(seed, g.n))
    assert d.residual <= 1e-10
    assert sum(t["omega"] for t in d.terms.values()) == pytest.approx(1.0, abs=1e-12)


# -- ScoreMatrix --------------------------------------------------------------

def test_score_matrix_validation():
    with pytest.raises(ValueError):
        ScoreMatrix(2, [0], [1], [1.5])
    with pytest.raises(ValueError):
        ScoreMatrix(2, [0], [0], [0.5])
    s = ScoreMatrix(3, [0, 0], [1, 1], [0.2, 0.9], symmetric=True)
    assert s.get(0, 1) == 0.9 and s.get(1, 0) == 0.9
    zero = ScoreMatrix(3, [0], [1], [0.0])
    assert zero.get(0, 1) == 0.0
    with pytest.raises(DomainGapError):
        zero.get(1, 0)


def test_score_file_round_trip():
    g = load_graph("5 6\n6 7\n", "5 0\n6 1\n7 0\n")
    s = load_scores(g, "5 6 0.25\n6 7 1\n")
    assert s.get(1, 0) == 0.25
    again = load_scores(g, format_scores(g, s))
    assert again.triplets() == s.triplets()
