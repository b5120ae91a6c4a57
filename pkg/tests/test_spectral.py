import mpmath as mp
import numpy as np
import pytest
from scipy.linalg import eigvalsh
from scipy.stats import binom, multinomial

from mfjp.errors import CapExceeded, NotIrreducible, NotReversible
from mfjp.lattice import lattice_enumerate
from mfjp.model import curie_weiss, cyc3, make_model, nonint
from mfjp.spectral import (
    build_generator,
    check_reversibility,
    full_spectrum,
    invariant_measure,
    lambda2_scan,
    second_eigenvalue,
    spectral_report,
    tv_mixing_curve,
)

from conftest import three_well


def nonint3():
    """Three independent states with reversible single-particle rates."""
    return make_model(
        ["a", "b", "c"],
        [("a", "b"), ("b", "a"), ("b", "c"), ("c", "b"), ("a", "c"), ("c", "a")],
        {"a->b": "1", "b->a": "2", "b->c": "1", "c->b": "3", "a->c": "0.5", "c->a": "3"},
        name="NONINT3",
    )


def mp_lambda2(up, down, dps=60):
    """Smallest nonzero eigenvalue of a birth-death generator by Sturm counts in mpmath."""
    mp.mp.dps = dps
    n = len(up)
    diag = [mp.mpf(up[i]) + mp.mpf(down[i]) for i in range(n)]
    off2 = [mp.mpf(up[i]) * mp.mpf(down[i + 1]) for i in range(n - 1)]

    def below(s):
        c, q = 0, None
        for i in range(n):
            q = diag[i] - s if i == 0 else diag[i] - s - off2[i - 1] / q
            if q == 0:
                q = mp.mpf(10) ** (-dps)
            c += q < 0
        return c

    lo, hi = mp.mpf(10) ** -80, mp.mpf(max(diag)) * 4
    while hi / lo > 1 + mp.mpf(10) ** -20:
        mid = mp.sqrt(lo * hi)
        if below(mid) >= 2:
            hi = mid
        else:
            lo = mid
    return float(lo)


# ------------------------------------------------------------- generator
def test_nonint_single_particle_generator():
    G = build_generator(nonint(), 1)
    # states ordered (0,1), (1,0): swapping them gives [[-1,1],[2,-2]]
    assert [tuple(s) for s in G.states] == [(0, 1), (1, 0)]
    Q = G.Q.toarray()
    np.testing.assert_array_equal(Q[::-1, ::-1], [[-1, 1], [2, -2]])


@pytest.mark.parametrize("N", [1, 7, 30])
def test_two_state_generator_is_tridiagonal(N):
    G = build_generator(curie_weiss(), N)
    Q = G.Q.toarray()
    assert Q.shape == (N + 1, N + 1) and G.is_birth_death
    assert np.all(np.triu(Q, 2) == 0) and np.all(np.tril(Q, -2) == 0)


def test_row_sums_zero():
    Q = build_generator(curie_weiss(1.5, 0.0), 50).Q
    assert np.max(np.abs(np.asarray(Q.sum(axis=1)))) <= 1e-12
    Q3 = build_generator(cyc3(), 12).Q
    assert np.max(np.abs(np.asarray(Q3.sum(axis=1)))) <= 1e-12


def test_generator_cap():
    with pytest.raises(CapExceeded):
        build_generator(cyc3(), 50, cap=100)


def test_not_irreducible():
    m = make_model(["a", "b"], [("a", "b"), ("b", "a")], {"a->b": "1", "b->a": "0*xi[a]"})
    with pytest.raises(NotIrreducible):
        invariant_measure(build_generator(m, 3))


# ------------------------------------------------------------- invariant measure
@pytest.mark.parametrize("N", [1, 5, 80, 300])
def test_nonint_binomial(N):
    G = build_generator(nonint(), N)
    p = invariant_measure(G)
    down = np.array([s[0] for s in G.states])
    np.testing.assert_allclose(p, binom.pmf(down, N, 2 / 3), atol=1e-10, rtol=0)


def test_single_particle_measure():
    p = invariant_measure(build_generator(nonint(), 1))
    np.testing.assert_allclose(p, [1 / 3, 2 / 3], atol=1e-15)


def test_nonint3_multinomial_and_reversible():
    N = 12
    G = build_generator(nonint3(), N)
    p = invariant_measure(G)
    # single-particle stationary law of a->b 1, b->a 2, b->c 1, c->b 3, a->c .5, c->a 3
    Q1 = np.array([[-1.5, 1, 0.5], [2, -3, 1], [3, 3, -6]])
    w, v = np.linalg.eig(Q1.T)
    pi1 = np.real(v[:, np.argmin(np.abs(w))])
    pi1 /= pi1.sum()
    ref = multinomial.pmf(np.array(G.states), N, pi1)
    np.testing.assert_allclose(p, ref, atol=1e-10)
    rev = check_reversibility(G, p)
    assert rev.reversible and rev.residual <= 1e-10


def test_cw_measure_residual():
    G = build_generator(curie_weiss(1.5, 0.0), 100)
    p = invariant_measure(G)
    assert np.max(np.abs(G.Q.T @ p)) <= 1e-10
    assert p.sum() == pytest.approx(1.0, abs=1e-14)


# ------------------------------------------------------------- reversibility
@pytest.mark.parametrize("model", [nonint(), curie_weiss(1.5, 0.1), three_well()], ids=["nonint", "cw", "w3"])
def test_two_state_models_reversible(model):
    G = build_generator(model, 60)
    assert check_reversibility(G, invariant_measure(G)).residual <= 1e-10


def test_cyc3_not_reversible():
    G = build_generator(cyc3(), 10)
    p = invariant_measure(G)
    r = check_reversibility(G, p)
    assert not r.reversible and r.residual > 1e-6
    with pytest.raises(NotReversible):
        second_eigenvalue(G, p)
    rep = spectral_report(cyc3(), 10)
    assert np.isnan(rep.lambda2) and rep.to_dict()["lambda2"] is None


# ------------------------------------------------------------- second eigenvalue
@pytest.mark.parametrize("N", [5, 20, 80, 200])
def test_nonint_gap_is_three(N):
    G = build_generator(nonint(), N)
    assert second_eigenvalue(G, invariant_measure(G)) == pytest.approx(3.0, abs=1e-8)


def test_nonint_dense_spectrum_n5():
    G = build_generator(nonint(), 5)
    Q = G.Q.toarray()
    p = invariant_measure(G)
    S = np.diag(np.sqrt(p)) @ Q @ np.diag(1 / np.sqrt(p))
    ev = np.sort(-eigvalsh(0.5 * (S + S.T)))
    np.testing.assert_allclose(ev, 3 * np.arange(6), atol=1e-10)
    np.testing.assert_allclose(full_spectrum(G, p, True), 3 * np.arange(6), atol=1e-12)


def test_single_particle_gap():
    m = make_model(["a", "b"], [("a", "b"), ("b", "a")], {"a->b": "0.7", "b->a": "2.2"})
    G = build_generator(m, 1)
    assert second_eigenvalue(G, invariant_measure(G)) == pytest.approx(2.9, rel=1e-14)


def test_nonint3_gap():
    G = build_generator(nonint3(), 6)
    p = invariant_measure(G)
    Q1 = np.array([[-1.5, 1, 0.5], [2, -3, 1], [3, 3, -6]])
    single = np.sort(-np.real(np.linalg.eigvals(Q1)))[1]
    assert second_eigenvalue(G, p) == pytest.approx(single, rel=1e-9)


@pytest.mark.parametrize("N", [40, 160, 400])
def test_cw_gap_against_high_precision(N):
    G = build_generator(curie_weiss(1.5, 0.0), N)
    up, down = G.birth_death_rates()
    got = second_eigenvalue(G, invariant_measure(G))
    assert got == pytest.approx(mp_lambda2(up, down), rel=1e-9)


def test_lambda2_scan_decreasing(m_cw):
    scan = lambda2_scan(m_cw, list(range(40, 201, 40)))
    assert np.all(np.diff(scan.lambda2) < 0)
    assert scan.slope < 0
    assert scan.to_csv().splitlines()[0].startswith("N,")


# ------------------------------------------------------------- TV curves
def test_tv_endpoints():
    G = build_generator(curie_weiss(1.5, 0.1), 60)
    p = invariant_measure(G)
    nu = (50, 10)
    c = tv_mixing_curve(G, p, nu, [0.0, 1.0, 1e300])
    assert c.tv[0] == pytest.approx(1 - p[G.index_of(nu)], abs=1e-12)
    assert c.tv[-1] <= 1e-12
    assert c.monotone


@pytest.mark.parametrize("model", [nonint(), curie_weiss(1.5, 0.1), three_well(), nonint3()], ids=["nonint", "cw", "w3", "nonint3"])
def test_tv_monotone_from_point_masses(model):
    N = 30 if model.d == 2 else 8
    G = build_generator(model, N)
    p = invariant_measure(G)
    times = np.concatenate([[0.0], np.geomspace(1e-3, 1e8, 60)])
    rng = np.random.default_rng(0)
    states = lattice_enumerate(N, model.d)
    for k in rng.choice(len(states), size=5, replace=False):
        c = tv_mixing_curve(G, p, tuple(states[k]), times)
        assert np.all(np.diff(c.tv) <= 1e-12)
        assert c.monotone


def test_tv_agrees_with_expm():
    from scipy.linalg import expm

    G = build_generator(curie_weiss(1.5, 0.1), 25)
    p = invariant_measure(G)
    Q = G.Q.toarray()
    nu = (20, 5)
    times = [0.1, 1.0, 10.0, 50.0]
    c = tv_mixing_curve(G, p, nu, times)
    e = np.zeros(len(p))
    e[G.index_of(nu)] = 1
    ref = [0.5 * np.abs(e @ expm(t * Q) - p).sum() for t in times]
    np.testing.assert_allclose(c.tv, ref, atol=1e-10)


def test_tv_from_improbable_start_agrees_with_expm():
    # start in the shallow well at N=150: p(start) ~ 1e-11, so both the
    # uniformised early branch and the slow-mode late branch are exercised
    from scipy.linalg import expm

    G = build_generator(curie_weiss(1.5, 0.1), 150)
    p = invariant_measure(G)
    nu = (135, 15)
    assert p[G.index_of(nu)] < 1e-8
    times = [0.0, 0.3, 3.0, 30.0, 300.0, 3000.0]
    c = tv_mixing_curve(G, p, nu, times)
    e = np.zeros(len(p))
    e[G.index_of(nu)] = 1
    Q = G.Q.toarray()
    ref = [0.5 * np.abs(e @ expm(t * Q) - p).sum() for t in times]
    np.testing.assert_allclose(c.tv, ref, atol=1e-9)
    assert c.monotone


def test_tv_late_time_tracks_slowest_mode():
    # once the fast modes are gone, TV from the shallow well decays as
    # exp(-lambda_2 t) up to an O(1) prefactor; checked at a huge N where
    # p(start) ~ 1e-50 and the naive expansion breaks down
    G = build_generator(curie_weiss(1.5, 0.1), 700)
    p = invariant_measure(G)
    lam2 = second_eigenvalue(G, p)
    t = np.array([0.5, 1.0, 2.0, 3.0]) / lam2
    c = tv_mixing_curve(G, p, (630, 70), t)
    assert np.all(np.diff(c.tv) < 0)
    np.testing.assert_allclose(c.tv, np.exp(-lam2 * t), rtol=0.05)
