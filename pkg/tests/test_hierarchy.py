import itertools
from math import factorial

import numpy as np
import pytest
from scipy.stats import binom
from hypothesis import given, settings
from hypothesis import strategies as st

import brute
from mfjp.errors import AllInfinite, CapExceeded, ValidationError
from mfjp.hierarchy import (
    build_cycle_hierarchy,
    enumerate_wgraphs,
    fw_quantities,
    lambda_constant,
    min_wgraph_cost,
    stationary_rate,
)


def close(a, b, tol=1e-9):
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def random_cost(rng, l, ties=False, infs=False):
    C = rng.integers(1, 6, size=(l, l)).astype(float) if ties else rng.exponential(1.0, size=(l, l))
    if infs:
        C[rng.random((l, l)) < 0.15] = np.inf
    np.fill_diagonal(C, 0.0)
    return C


# ------------------------------------------------------------------ examples
def test_enumeration_counts():
    assert len(enumerate_wgraphs(3, {0})) == 3
    assert [g.arrows for g in enumerate_wgraphs(2, {0, 1})] == [()]
    assert [g.arrows for g in enumerate_wgraphs(2, {0})] == [((1, 0),)]
    # Cayley: rooted forests into a single root on l nodes number l^(l-2)
    for l in range(2, 7):
        assert len(enumerate_wgraphs(l, {0})) == l ** (l - 2)


def test_enumeration_matches_brute_force():
    for l in range(2, 6):
        for r in range(1, l + 1):
            for W in itertools.combinations(range(l), r):
                mine = {g.arrows for g in enumerate_wgraphs(l, set(W))}
                ref = {tuple(sorted(a.items())) for a in brute.graphs(l, W)}
                assert mine == ref


def test_enumeration_cap():
    with pytest.raises(CapExceeded):
        enumerate_wgraphs(9, {0})


def test_min_wgraph_cost_example():
    C = [[0, 1, 4], [2, 0, 3], [5, 6, 0]]
    value, g = min_wgraph_cost(C, {0})
    assert value == 7 and g.arrows == ((1, 0), (2, 0))
    assert min_wgraph_cost(C, {0, 1, 2})[0] == 0


def test_min_wgraph_single_finite_option():
    inf = np.inf
    C = [[0, inf, inf], [inf, 0, 2.5], [1.5, inf, 0]]
    assert min_wgraph_cost(C, {0})[0] == 4.0
    with pytest.raises(AllInfinite):
        min_wgraph_cost([[0, inf], [inf, 0]], {0})


def test_cost_validation():
    with pytest.raises(ValidationError):
        min_wgraph_cost([[0, -1], [1, 0]], {0})


def test_two_attractor_W_values():
    q = fw_quantities([[0, 2], [5, 0]])
    np.testing.assert_array_equal(q.W, [5, 2])
    assert q.I_i[(0, frozenset({1}))] == 2
    assert q.I_ij[(0, 1, frozenset({1}))] == 0


def test_lambda_examples():
    assert lambda_constant([[0.0]]).value == 0.0
    r = lambda_constant([[0, 2], [5, 0]])
    assert r.value == 2 and r.cross_check == 2 and r.agree


def test_hierarchy_single():
    r = build_cycle_hierarchy([[0.0]])
    assert r.m == 0 and r.c_star == 0 and r.L_tilde_0 == [0] and r.Lambda == 0


def test_hierarchy_two_symmetric():
    r = build_cycle_hierarchy([[0, 1.3], [1.3, 0]])
    assert r.L_tilde_0 == [0, 1]
    top = r.levels[-1][0]
    assert top.is_cycle and sorted(top.leaves) == [0, 1]
    assert r.c_star == 0.0


def test_hierarchy_two_asymmetric():
    r = build_cycle_hierarchy([[0, 2], [5, 0]])
    assert r.L_tilde_0 == [1]
    # A_1 is the 2-cycle, A_0 = {K_1}; the other child exits at cost 2
    assert r.A0_leaves == [1]
    assert r.c == [2.0] and r.c_star == 2.0 and r.Lambda == 2.0


def test_hierarchy_three_level_example():
    r = build_cycle_hierarchy([[0, 1, 4], [2, 0, 3], [5, 6, 0]])
    assert r.m == 1 and r.Lambda == 3 and r.c == [0.0, 3.0] and r.L_tilde_0 == [2]
    txt = r.tree_text()
    assert "{0,1}" in txt and "K2" in txt


def test_report_serialises():
    from mfjp.io import dumps

    d = build_cycle_hierarchy([[0, 1, 4], [2, 0, 3], [5, 6, 0]]).to_dict()
    assert "tree" in d and d["Lambda"] == 3.0
    assert dumps(d) == dumps(build_cycle_hierarchy([[0, 1, 4], [2, 0, 3], [5, 6, 0]]).to_dict())


def test_stationary_rate_zero_at_deep_well():
    C = np.array([[0, 2.0], [5.0, 0]])
    vf = lambda i, xi: 0.0 if np.allclose(xi, [i, 1 - i]) else 1.0
    assert stationary_rate(C, vf, [1.0, 0.0]) == 0.0
    # at K_0: min(W(0) + 0, W(1) + 1) - W(1) = min(5, 3) - 2
    assert stationary_rate(C, vf, [0.0, 1.0]) == pytest.approx(1.0)


def test_stationary_rate_nonint_relative_entropy():
    from mfjp.dynamics import find_attractors
    from mfjp.model import nonint
    from mfjp.quasipotential import hj_cost_matrix, hj_oracle_1d
    from mfjp.spectral import build_generator, invariant_measure

    m = nonint()
    A = find_attractors(m)
    C = hj_cost_matrix(m, A)
    K = A.locations
    vf = lambda i, xi: hj_oracle_1d(m, float(K[i][1]), float(xi[1]))
    # exact multinomial: -(1/N) log p_N converges to s at rate log(N)/N
    N = 100_000
    for x in np.linspace(0.02, 0.98, 50):
        k = int(round(x * N))
        xi = np.array([1 - k / N, k / N])
        s = stationary_rate(C, vf, xi)
        ent = xi[1] * np.log(3 * xi[1]) + xi[0] * np.log(1.5 * xi[0])
        assert s == pytest.approx(ent, rel=1e-6, abs=1e-12)
        emp = -binom.logpmf(k, N, 1 / 3) / N
        assert abs(emp - s) <= 0.02 * s + 1e-3
    # the package's measure reproduces the same exponent where representable
    N = 400
    p = invariant_measure(build_generator(m, N))
    k = np.arange(N + 1)
    ok = p[N - k] >= 1e-250
    np.testing.assert_allclose(np.log(p[N - k][ok]), binom.logpmf(k[ok], N, 1 / 3), atol=1e-9)


def test_stationary_rate_cw_shallow_positive(m_cw01, att_cw01, hj_cw01):
    from mfjp.quasipotential import hj_oracle_1d

    K = att_cw01.locations
    vf = lambda i, xi: hj_oracle_1d(m_cw01, float(K[i][1]), float(xi[1]))
    assert stationary_rate(hj_cw01, vf, K[1]) > 0.03
    assert stationary_rate(hj_cw01, vf, K[0]) == 0.0


# ------------------------------------------------------------- random oracles
@pytest.mark.parametrize("l", [2, 3, 4])
def test_I_values_match_brute_force(l):
    rng = np.random.default_rng(l)
    for trial in range(6):
        C = random_cost(rng, l, ties=trial % 2 == 1, infs=trial % 3 == 2)
        q = fw_quantities(C)
        try:
            Wref = brute.W_values(C)
        except Exception:  # pragma: no cover
            raise
        assert all(close(a, b) for a, b in zip(q.W, Wref))
        Iij, Ii = brute.I_values(C)
        assert set(Iij) == set(q.I_ij) and set(Ii) == set(q.I_i)
        for k, v in Iij.items():
            if np.isnan(v):
                assert np.isnan(q.I_ij[k]) or np.isinf(q.I_ij[k])
            else:
                assert close(q.I_ij[k], v), k
                assert q.I_ij[k] >= 0
        for k, v in Ii.items():
            if not np.isnan(v):
                assert close(q.I_i[k], v), k


@pytest.mark.parametrize("l", [2, 3, 4, 5, 6])
def test_lambda_formulas_and_A0(l):
    rng = np.random.default_rng(100 + l)
    for trial in range(20):
        C = random_cost(rng, l, ties=trial % 2 == 0)
        r = build_cycle_hierarchy(C)
        assert r.Lambda >= 0
        assert abs(r.Lambda - r.Lambda_check) <= 1e-9
        if l <= 5:
            assert close(r.Lambda, brute.lambda_graph(C))
        Wv = brute.W_values(C) if l <= 5 else list(fw_quantities(C, with_I=False).W)
        w0 = min(Wv)
        assert r.L_tilde_0 == [i for i, w in enumerate(Wv) if w - w0 <= 1e-12 * max(1.0, w0)]
        assert sorted(r.A0_leaves) == r.L_tilde_0
        assert r.c_star == max(r.c) >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.booleans())
def test_hierarchy_deterministic_and_idempotent(l, seed, ties):
    C = random_cost(np.random.default_rng(seed), l, ties=ties)
    a, b = build_cycle_hierarchy(C), build_cycle_hierarchy(C.copy())
    assert a.to_dict() == b.to_dict()
    # relabelling the attractors permutes the deep set accordingly
    perm = np.random.default_rng(seed + 1).permutation(l)
    Cp = C[np.ix_(perm, perm)]
    rp = build_cycle_hierarchy(Cp)
    assert sorted(perm[i] for i in rp.L_tilde_0) == a.L_tilde_0
    assert rp.Lambda == pytest.approx(a.Lambda, abs=1e-12)
    assert rp.c_star == pytest.approx(a.c_star, abs=1e-12)
