import numpy as np
import pytest

from divband.errors import ConfigError, NoConvergence
from divband.gridfn import Grid
from divband.model import ExponentialClaims, ModelParams
from divband.oracle import MAX_CELLS, default_grid, policy_iteration_solve

from conftest import EX1


@pytest.fixture(scope="module")
def orc1(ex1):
    return policy_iteration_solve(ex1.params, ex1.dist)


@pytest.fixture(scope="module")
def orc2(ex2):
    return policy_iteration_solve(ex2.params, ex2.dist)


def test_default_grid():
    g = default_grid(EX1)
    assert g.n == MAX_CELLS and g.x_max == pytest.approx(EX1.p / (EX1.c - EX1.r))


def test_example1_agrees_with_barrier(ex1, orc1):
    v = ex1.barrier
    x = np.linspace(0.0, v.a_star, 400)
    gap = np.max(np.abs(orc1.value(x) - v.value(x)))
    assert gap <= 0.01 * v.value_at_a
    assert orc1.residual <= 1e-8


def test_example2_agrees_with_bands(ex2, ex2_bands, orc2):
    cand = ex2_bands[2]
    x = np.linspace(0.0, cand.a_star, 400)
    assert np.max(np.abs(orc2.value(x) - cand.value(x))) <= 0.01 * cand.value_at_a


def test_example2_pay_probes(orc2):
    assert orc2.pay_at(0.1) and orc2.pay_at(3.2)
    assert not orc2.pay_at(1.0) and not orc2.pay_at(2.0)


def test_example1_pays_only_above_barrier(ex1, orc1):
    a = ex1.barrier.a_star
    assert not np.any(orc1.pay[orc1.x < a - 0.05])
    assert np.all(orc1.pay[orc1.x > a + 0.05])


@pytest.mark.parametrize("name", ["ex1", "ex2"])
def test_value_bounds(name, request):
    ex = request.getfixturevalue(name)
    o = request.getfixturevalue("orc1" if name == "ex1" else "orc2")
    p = ex.params
    tol = 1e-3 * p.cb * float(o.v.max())
    assert np.all(o.v >= o.x + p.p / p.cb - tol)
    assert np.all(o.v <= o.x + p.p / p.c + tol)


def test_no_claims_no_investment_closed_form():
    # with gamma = 0 and no claims W = e^{cx/p} has its smallest slope at 0,
    # so the barrier sits at 0 and V = x + p/c
    p = ModelParams(4.0, 0.0, 0.5, 0.3, 2.0)
    o = policy_iteration_solve(p, ExponentialClaims(1.0), force_gamma=0.0)
    probes = np.array([0.0, 1.0, 5.0])
    np.testing.assert_allclose(o.value(probes), probes + p.p / p.c, rtol=1e-10)
    # p V'(0) = c V(0) at the degenerate node
    assert p.p * (o.v[1] - o.v[0]) / o.h == pytest.approx(p.c * o.v[0], rel=1e-10)


def test_grid_checks():
    with pytest.raises(ConfigError):
        policy_iteration_solve(EX1, ExponentialClaims(1.0), Grid.from_extent(20.0, 20.0 / 2500))
    with pytest.raises(ConfigError):
        policy_iteration_solve(EX1, ExponentialClaims(1.0), Grid(h=0.1, n=100, origin=1.0))


def test_no_convergence_reported(ex2):
    with pytest.raises(NoConvergence):
        policy_iteration_solve(ex2.params, ex2.dist, max_iter=2)


def test_history_recorded(orc1, orc2):
    for o in (orc1, orc2):
        assert len(o.history) == o.iterations
        assert o.history[-1] == o.residual <= 1e-8


def test_as_gridfn(orc1):
    f = orc1.as_gridfn()
    np.testing.assert_allclose(f.values, orc1.v)
    assert f.grid.n == orc1.x.size - 1
