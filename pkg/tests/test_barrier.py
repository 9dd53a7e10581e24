import numpy as np
import pytest

from divband.barrier import (
    Band,
    BandStructure,
    argmin_wprime,
    barrier_value,
    optimal_barrier,
    zero_barrier,
)
from divband.errors import GridTooShort
from divband.gridfn import Grid, GridFn
from divband.model import ExponentialClaims
from divband.wsolve import WSolution, hjb_residual, solve_w

from conftest import EX1


def test_example1_argmin(ex1):
    w1, xs = argmin_wprime(ex1.ws)
    assert 4.80 <= xs <= 4.90
    assert abs(xs - 4.846) <= 0.05
    assert w1 == pytest.approx(float(ex1.ws.w.eval_deriv(xs)), abs=1e-9)
    assert w1 <= ex1.ws.w.deriv.min() + 1e-12


def test_example2_argmin_at_zero(ex2):
    w1, xs = argmin_wprime(ex2.ws)
    assert xs == 0.0
    assert w1 == pytest.approx(0.8125, abs=1e-12)


def test_increasing_derivative_gives_zero():
    g = Grid(h=0.1, n=40)
    x = g.x
    fake = WSolution(GridFn(g, 1 + x + x**2, 1 + 2 * x), np.full(x.size, 2.0), np.ones(x.size), EX1, ExponentialClaims(1.0))
    assert argmin_wprime(fake) == (1.0, 0.0)


def test_short_grid_detected():
    ws = solve_w(EX1, ExponentialClaims(1.0), Grid.from_extent(3.0, 1e-3))
    with pytest.raises(GridTooShort):
        argmin_wprime(ws)


def test_barrier_value_at_optimum(ex1):
    w1, xs = argmin_wprime(ex1.ws)
    v = barrier_value(ex1.ws, xs)
    assert v.value(0.0) == pytest.approx(1.0 / w1, rel=1e-9)
    assert v.deriv(xs) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("y", [0.5, 2.0, 4.0, 7.5])
def test_barrier_value_is_a_rescaling(ex1, y):
    v = barrier_value(ex1.ws, y)
    x = np.linspace(0.0, y, 57)
    wy = float(ex1.ws.w.eval_deriv(y))
    np.testing.assert_allclose(v.value(x) * wy, ex1.ws.w.eval(x), rtol=1e-9)
    assert v.deriv(y) == pytest.approx(1.0, abs=1e-9)
    # slope one above the barrier
    assert v.value(y + 1.3) == pytest.approx(v.value(y) + 1.3, abs=1e-12)
    assert v.bands == BandStructure((Band(0.0, y),))


def test_barrier_at_zero_closed_form(ex1):
    v = barrier_value(ex1.ws, 0.0)
    x = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(v.value(x), x + EX1.p / EX1.cb, rtol=1e-12)
    z = zero_barrier(EX1)
    np.testing.assert_allclose(z.value(x), x + EX1.p / EX1.cb)


def test_optimal_barrier_probes(ex1):
    v1 = ex1.barrier
    for y in np.linspace(0.0, ex1.grid.x_max, 50):
        assert v1.value(0.0) >= 1.0 / float(ex1.ws.w.eval_deriv(y)) - 1e-12


def test_optimal_barrier_example2(ex2):
    v1 = ex2.barrier
    assert v1.a_star == 0.0
    x = np.linspace(0, 5, 11)
    np.testing.assert_allclose(v1.value(x), x + ex2.params.p / ex2.params.cb, rtol=1e-12)


def test_barrier_within_payout_bound(ex1, ex2):
    for ex in (ex1, ex2):
        assert ex.barrier.a_star <= ex.params.payout_bound + 1e-9


def test_second_derivative_vanishes_at_interior_barrier(ex1):
    tol = hjb_residual(ex1.ws).tol
    assert abs(float(np.interp(ex1.barrier.a_star, ex1.ws.x, ex1.ws.w2))) <= 10 * tol


@pytest.mark.parametrize("ex_name", ["ex1", "ex2"])
def test_candidate_bounds(ex_name, request):
    ex = request.getfixturevalue(ex_name)
    p = ex.params
    x = np.linspace(0.0, 25.0, 2001)
    v = ex.barrier.value(x)
    assert np.all(v >= x + p.p / p.cb - 1e-9)
    assert np.all(v <= x + p.p / p.c + 1e-9)


def test_band_structure_rules():
    b = BandStructure.from_pairs([(0.3, 2.9)])
    assert b.zero_absorbing and b.a_star == 2.9
    assert b.a0_points() == [0.0, 2.9]
    np.testing.assert_allclose(b.payout_target([0.0, 0.2, 0.3, 0.31, 2.0, 3.5]), [0.0, 0.0, 0.0, 0.31, 2.0, 2.9])
    bar = BandStructure.from_pairs([(0.0, 4.8)])
    assert not bar.zero_absorbing
    np.testing.assert_allclose(bar.payout_target([0.0, 1.0, 6.0]), [0.0, 1.0, 4.8])
    two = BandStructure.from_pairs([(0.0, 1.0), (2.0, 3.0)])
    np.testing.assert_allclose(two.payout_target([1.5, 2.0, 2.5, 4.0]), [1.0, 1.0, 2.5, 3.0])
    assert BandStructure().payout_target(2.0) == 0.0
    with pytest.raises(ValueError):
        BandStructure.from_pairs([(1.0, 0.5)])
    with pytest.raises(ValueError):
        BandStructure.from_pairs([(0.0, 2.0), (1.0, 3.0)])
