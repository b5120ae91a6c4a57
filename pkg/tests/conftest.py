"""Shared fixtures and test-only models."""
import numpy as np
import pytest

from mfjp.dynamics import find_attractors
from mfjp.model import curie_weiss, cyc3, make_model, nonint
from mfjp.quasipotential import hj_cost_matrix


def three_well(a=0.3, b=5.5, c=-7.5, h=0.03):
    """Two-state model with three stable points.

    With ``m = 2x - 1`` the up-rate is ``exp(g(m))`` and the down-rate
    ``exp(-g(m))`` for the quintic ``g(m) = a m + b m^3 + c m^5 + h``;
    fixed points solve ``g(m) = atanh(m)``.  The defaults give stable points
    near ``x = 0.16, 0.52, 0.85``.
    """
    m = "(2*xi[up]-1)"
    g = f"a*{m} + b*{m}*{m}*{m} + c*{m}*{m}*{m}*{m}*{m} + h"
    return make_model(
        ["down", "up"],
        [("down", "up"), ("up", "down")],
        {"down->up": f"exp({g})", "up->down": f"exp(-({g}))"},
        name="W3",
        params=dict(a=a, b=b, c=c, h=h),
    )


def random_simplex(rng, d, n):
    return rng.dirichlet(np.ones(d), size=n)


@pytest.fixture(scope="session")
def m_nonint():
    return nonint()


@pytest.fixture(scope="session")
def m_cw():
    return curie_weiss(1.5, 0.0)


@pytest.fixture(scope="session")
def m_cw01():
    return curie_weiss(1.5, 0.1)


@pytest.fixture(scope="session")
def m_cyc3():
    return cyc3()


@pytest.fixture(scope="session")
def m_w3():
    return three_well()


@pytest.fixture(scope="session")
def att_cw(m_cw):
    return find_attractors(m_cw)


@pytest.fixture(scope="session")
def att_cw01(m_cw01):
    return find_attractors(m_cw01)


@pytest.fixture(scope="session")
def att_w3(m_w3):
    return find_attractors(m_w3)


@pytest.fixture(scope="session")
def hj_cw01(m_cw01, att_cw01):
    return hj_cost_matrix(m_cw01, att_cw01)


@pytest.fixture(scope="session")
def hj_w3(m_w3, att_w3):
    return hj_cost_matrix(m_w3, att_w3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
