import numpy as np
import pytest

from mfjp.dynamics import drift
from mfjp.errors import DomainError
from mfjp.model import curie_weiss, nonint
from mfjp.quasipotential import (
    CostMatrix,
    build_cost_lattice,
    hj_cost_matrix,
    hj_oracle_1d,
    quasipotential,
    segment_cost,
    vtilde_matrix,
)


def bin_entropy(x, p):
    """Relative entropy of (1-x, x) with respect to (1-p, p)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(x > 0, x * np.log(x / p), 0.0)
        b = np.where(x < 1, (1 - x) * np.log((1 - x) / (1 - p)), 0.0)
    return a + b


@pytest.fixture(scope="module")
def lat_nonint():
    return build_cost_lattice(nonint(), 200)


@pytest.fixture(scope="module")
def lat_cw():
    return build_cost_lattice(curie_weiss(1.5, 0.0), 100)


def test_hj_oracle_examples():
    m = nonint()
    assert hj_oracle_1d(m, 0.4, 0.4) == 0.0
    # antiderivative x log x + (1-x) log(1-x) + x log 2 between 1/3 and 1
    F = lambda x: (x * np.log(x) if x > 0 else 0) + ((1 - x) * np.log(1 - x) if x < 1 else 0) + x * np.log(2)
    assert F(1.0) - F(1 / 3) == pytest.approx(np.log(3), abs=1e-14)
    assert hj_oracle_1d(m, 1 / 3, 1.0) == pytest.approx(np.log(3), rel=1e-9)
    for x in np.linspace(0, 1, 21):
        assert hj_oracle_1d(m, 1 / 3, x) == pytest.approx(bin_entropy(x, 1 / 3), abs=1e-9)
    # downhill along the flow is free
    assert hj_oracle_1d(m, 0.9, 1 / 3) == 0.0


def test_hj_oracle_rejects_outside():
    with pytest.raises(DomainError):
        hj_oracle_1d(nonint(), -0.1, 0.5)


def test_segment_cost_along_drift_is_small():
    m = curie_weiss(1.5, 0.1)
    rng = np.random.default_rng(0)
    M = 100
    for _ in range(10):
        x = rng.integers(10, 90) / M
        X0 = np.array([[1 - x, x]])
        step = np.sign(drift(m, X0[0])[1]) / M
        X1 = X0 + np.array([[-step, step]])
        cost, _ = segment_cost(m, X0, X1)
        assert cost[0] <= 1e-3


def test_segment_cost_asymmetric_uphill():
    m = curie_weiss(1.5, 0.0)
    a, b = np.array([[0.3, 0.7]]), np.array([[0.32, 0.68]])
    up = segment_cost(m, a, b)[0][0]    # against the flow towards x=0.93
    down = segment_cost(m, b, a)[0][0]
    assert up > down
    assert up == pytest.approx(hj_oracle_1d(m, 0.7, 0.68), rel=0.1)


def test_forbidden_ball_removes_nodes():
    m = nonint()
    lat = build_cost_lattice(m, 40, forbidden=[((0.5, 0.5), 0.05)])
    assert not lat.has_point([0.5, 0.5])
    assert lat.has_point([0.2, 0.8])
    pts = lat.points[lat.alive]
    assert np.all(np.max(np.abs(pts - 0.5), axis=1) > 0.05 - 1e-12)
    assert np.all(lat.arc_cost >= 0)


def test_resolution_floor():
    with pytest.raises(DomainError):
        build_cost_lattice(nonint(), 10)


def test_V_zero_on_diagonal(lat_nonint):
    assert quasipotential(nonint(), [0.5, 0.5], [0.5, 0.5], lattice=lat_nonint).value == 0.0


def test_V_nonint_log3(lat_nonint):
    r = quasipotential(nonint(), [2 / 3, 1 / 3], [0.0, 1.0], lattice=lat_nonint)
    assert r.value == pytest.approx(np.log(3), rel=0.02)
    assert r.reachable and len(r.path) >= 2


def test_V_cw_symmetric_wells(lat_cw, att_cw):
    m = curie_weiss(1.5, 0.0)
    K0, K1 = att_cw.locations
    a = quasipotential(m, K0, K1, lattice=lat_cw).value
    b = quasipotential(m, K1, K0, lattice=lat_cw).value
    assert a == pytest.approx(b, rel=0.02)
    assert a == pytest.approx(hj_oracle_1d(m, K0[1], K1[1]), rel=0.02)


@pytest.mark.parametrize("factory", [nonint, curie_weiss])
def test_V_triangle_inequality(factory):
    m = factory()
    lat = build_cost_lattice(m, 100)
    rng = np.random.default_rng(11)
    for _ in range(200):
        x, y, z = rng.dirichlet([1, 1], 3)
        vxy = quasipotential(m, x, y, lattice=lat).value
        vyz = quasipotential(m, y, z, lattice=lat).value
        vxz = quasipotential(m, x, z, lattice=lat).value
        assert vxz <= vxy + vyz + 5e-3


def test_V_self_is_zero(lat_cw):
    m = curie_weiss(1.5, 0.0)
    for nu in np.random.default_rng(12).dirichlet([1, 1], 100):
        assert quasipotential(m, nu, nu, lattice=lat_cw).value == 0.0


@pytest.mark.parametrize("h", [0.0, 0.1])
def test_V_refinement(h):
    from mfjp.dynamics import find_attractors

    m = curie_weiss(1.5, h)
    pts = list(find_attractors(m).locations)
    lats = [build_cost_lattice(m, M) for M in (100, 200)]
    for i, a in enumerate(pts):
        for j, b in enumerate(pts):
            if i != j:
                v1, v2 = (quasipotential(m, a, b, lattice=lat).value for lat in lats)
                assert abs(v1 - v2) <= 0.05 * v2 + 1e-12


def test_vtilde_two_wells_equals_v(m_cw01, att_cw01, hj_cw01):
    C = vtilde_matrix(m_cw01, att_cw01, M=100)
    assert C.size == 2
    off = ~np.eye(2, dtype=bool)
    np.testing.assert_allclose(C.vtilde[off], C.v[off], rtol=1e-12)
    np.testing.assert_allclose(C.vtilde[off], hj_cw01.vtilde[off], rtol=0.03)
    # the upper well is the deeper one: leaving it costs more
    assert C.vtilde[0, 1] > C.vtilde[1, 0] > 0


def test_vtilde_single_attractor():
    from mfjp.dynamics import find_attractors

    C = vtilde_matrix(nonint(), find_attractors(nonint()), M=40)
    assert C.vtilde.shape == (1, 1)


def test_vtilde_three_wells_strict_gap(m_w3, att_w3, hj_w3):
    mats = [vtilde_matrix(m_w3, att_w3, M=M) for M in (100, 200)]
    for C in mats:
        off = ~np.eye(3, dtype=bool)
        assert np.all(C.vtilde[off] >= C.v[off] - 1e-12)
        # the corridor between the outer wells passes the middle one
        assert np.isinf(C.vtilde[0, 2]) and np.isinf(C.vtilde[2, 0])
        assert np.isfinite(C.v[0, 2]) and C.v[0, 2] > 0
    a, b = mats
    assert b.v[0, 2] == pytest.approx(a.v[0, 2], rel=0.05)
    fin = np.isfinite(a.vtilde) & ~np.eye(3, dtype=bool)
    np.testing.assert_allclose(b.vtilde[fin], a.vtilde[fin], rtol=0.05)
    np.testing.assert_allclose(b.vtilde[fin], hj_w3.vtilde[fin], rtol=0.05)


def test_cost_matrix_round_trip(tmp_path, hj_cw01):
    p = tmp_path / "cost.json"
    from mfjp.io import dumps

    p.write_text(dumps(hj_cw01.to_dict()))
    C = CostMatrix.load(p)
    np.testing.assert_array_equal(C.vtilde, hj_cw01.vtilde)


def test_cost_matrix_short_form():
    C = CostMatrix.from_dict({"vtilde": {"0->1": 2, "1->0": 5}})
    np.testing.assert_array_equal(C.vtilde, [[0, 2], [5, 0]])
