from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfjp.errors import CapExceeded, DomainError
from mfjp.lattice import (
    LatticeMeasure,
    lattice_enumerate,
    lattice_rank,
    lattice_size,
    round_to_lattice,
    simplex_point,
)


def test_enumerate_n2_d2():
    assert lattice_enumerate(2, 2).tolist() == [[0, 2], [1, 1], [2, 0]]


def test_enumerate_n3_d3_size():
    assert len(lattice_enumerate(3, 3)) == 10


def test_enumerate_rejects_n0():
    with pytest.raises(DomainError):
        lattice_enumerate(0, 2)


def test_cap():
    with pytest.raises(CapExceeded):
        lattice_enumerate(1000, 4)
    assert lattice_size(1000, 4) == comb(1003, 3)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("N", [1, 2, 7, 20, 50])
def test_enumeration_complete_sorted_and_rank_inverse(N, d):
    X = lattice_enumerate(N, d)
    assert len(X) == comb(N + d - 1, d - 1)
    assert np.all(X.sum(axis=1) == N) and np.all(X >= 0)
    rows = [tuple(r) for r in X]
    assert rows == sorted(rows) and len(set(rows)) == len(rows)
    np.testing.assert_array_equal(lattice_rank(X, N), np.arange(len(X)))


def test_lattice_measure():
    m = LatticeMeasure((1, 2, 1))
    assert m.N == 4
    np.testing.assert_allclose(m.point, [0.25, 0.5, 0.25])
    with pytest.raises(DomainError):
        LatticeMeasure((0, 0))
    with pytest.raises(DomainError):
        LatticeMeasure((-1, 2))


def test_simplex_point_validation():
    np.testing.assert_allclose(simplex_point([0.25, 0.75]).sum(), 1.0, atol=1e-15)
    for bad in ([0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], [1.0]):
        with pytest.raises(DomainError):
            simplex_point(bad)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_simplex_and_rounding_invariants(d, N, seed):
    p = np.random.default_rng(seed).dirichlet(np.ones(d))
    q = simplex_point(p)
    assert abs(q.sum() - 1.0) <= 1e-12 and np.all(q >= 0)
    c = round_to_lattice(q, N)
    assert c.sum() == N and np.all(c >= 0)
    assert np.max(np.abs(c / N - q)) < 1.0 / N + 1e-12
