import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divband.errors import MonotonicityLost
from divband.gridfn import Grid, self_convolve
from divband.model import ExponentialClaims, ModelParams, UniformClaims
from divband.wsolve import (
    GAMMA_FLOOR,
    gamma_tilde,
    hjb_residual,
    l_gamma,
    solve_w,
    sup_over_gamma,
    taylor_seed,
)

from conftest import EX1, EX2


def test_gamma_tilde_cases():
    p = EX1
    wp, x = 0.5, 2.0
    assert gamma_tilde(p.p * wp, wp, x, p) == GAMMA_FLOOR
    # ratio 0.5: 2 (M - p w') = 0.5 r x w'
    M = p.p * wp + 0.25 * p.r * x * wp
    assert gamma_tilde(M, wp, x, p) == pytest.approx(0.5)
    assert gamma_tilde(M + 10.0, wp, x, p) == 1.0
    with pytest.raises(MonotonicityLost):
        gamma_tilde(1.0, 0.0, x, p)


def test_taylor_seed_values():
    W, Wp, W2 = taylor_seed(EX1, ExponentialClaims(1.0), 0.0)
    assert (W, Wp) == (1.0, 0.375)
    assert W2 == pytest.approx(-0.1375, abs=1e-15)
    _, Wp2, W22 = taylor_seed(EX2, UniformClaims(0.7, 1.0), 0.0)
    assert Wp2 == pytest.approx(0.8125, abs=1e-15)
    assert W22 == pytest.approx(1.1 * 1.3 / 1.6**2, abs=1e-15)


def test_w_boundary_values(ex1, ex2):
    for ex, wp0 in ((ex1, 0.375), (ex2, 0.8125)):
        assert ex.ws.w.values[0] == 1.0
        assert abs(ex.ws.w.deriv[0] - wp0) <= 1e-12
        assert abs(ex.ws.w.deriv[0] - ex.params.cb / ex.params.p) <= 1e-12


def test_w_increasing(ex1, ex2):
    for ex in (ex1, ex2):
        assert np.all(ex.ws.w.deriv > 0)
        assert np.all(np.diff(ex.ws.w.values) > 0)


def test_gamma_range_and_initial_segment(ex1, ex2):
    for ex in (ex1, ex2):
        g = ex.ws.gamma
        assert np.all((g > 0) & (g <= 1))
        assert g[0] == 1.0 and np.all(g[:11] == 1.0)


def test_gamma_ratio_tends_to_two(ex1):
    ws, p = ex1.ws, ex1.params
    x, W, Wp = ws.x[1:101], ws.w.values, ws.w.deriv
    M = p.cb * W - p.beta * self_convolve(W, ws.dist, ws.grid.h)
    ratio = 2 * (M[1:101] - p.p * Wp[1:101]) / (p.r * x * Wp[1:101])
    assert np.all(ws.gamma[1:101] == 1.0)
    # ratio = 2 + sigma^2 x W'' / (r W') along the solution
    np.testing.assert_allclose(ratio, 2 + p.sigma**2 * x * ws.w2[1:101] / (p.r * Wp[1:101]), atol=2e-3)
    assert abs(ratio[0] - 2) < 0.01


def test_example2_minimum_at_zero(ex2):
    Wp = ex2.ws.w.deriv
    assert np.all(Wp[1:] > Wp[0])


def test_residual_report(ex1, ex2):
    for ex in (ex1, ex2):
        rep = hjb_residual(ex.ws)
        assert rep.passed
        assert rep.max_abs_tilde <= 1e-4 * ex.params.cb * ex.ws.w.values.max()
        assert rep.vertex_excess <= 1e-12


def test_residual_zero_gamma_at_origin(ex1):
    p, W, Wp = ex1.params, ex1.ws.w.values, ex1.ws.w.deriv
    assert l_gamma(0.0, 0.0, W[0], Wp[0], 0.0, p.cb * W[0], p) == pytest.approx(0.0, abs=1e-15)


def test_fixed_gamma_below_sup(ex1):
    ws, p = ex1.ws, ex1.params
    x, W, Wp = ws.x, ws.w.values, ws.w.deriv
    M = p.cb * W - p.beta * self_convolve(W, ws.dist, ws.grid.h)
    W2 = np.gradient(Wp, ws.grid.h)
    lt = l_gamma(ws.gamma, x, W, Wp, W2, M, p)
    tol = 1e-4 * p.cb * W.max()
    for g in (0.0, 0.3, 0.77, 1.0):
        assert np.all(l_gamma(g, x, W, Wp, W2, M, p) <= lt + tol)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(0.0, 30.0),
    vp=st.floats(0.01, 5.0),
    vpp=st.floats(-5.0, 5.0),
    M=st.floats(-10.0, 40.0),
)
def test_sample_sup_never_exceeds_parabola_max(x, vp, vpp, M):
    sup, g = sup_over_gamma(x, vp, vpp, M, EX1)
    gs = np.linspace(0, 1, 100001)
    dense = l_gamma(gs, x, 0.0, vp, vpp, M, EX1).max()
    a = 0.5 * EX1.sigma**2 * x * x * vpp
    b = EX1.r * x * vp
    cands = [0.0, 1.0] + ([min(max(-b / (2 * a), 0.0), 1.0)] if a < 0 else [])
    exact = max(float(l_gamma(c, x, 0.0, vp, vpp, M, EX1)) for c in cands)
    assert sup[0] <= exact + 1e-12 * max(1.0, abs(exact))
    assert sup[0] >= dense - 1e-9 * max(1.0, abs(dense))
    assert 0.0 <= g[0] <= 1.0


def test_refinement_at_probes():
    d = ExponentialClaims(1.0)
    probes = [1.0, 2.0, 5.0]
    vals = [solve_w(EX1, d, Grid.from_extent(6.0, h)).w.eval(probes) for h in (4e-3, 2e-3, 1e-3)]
    d1 = np.max(np.abs(vals[1] - vals[0]))
    d2 = np.max(np.abs(vals[2] - vals[1]))
    assert d2 <= 4 * d1
    assert d2 <= d1 / 2  # at least first order observed


def test_no_claims_degenerate_input():
    p = ModelParams(4.0, 0.0, 0.5, 0.3, 2.0)
    ws = solve_w(p, ExponentialClaims(1.0), Grid.from_extent(30.0, 1e-3))
    assert np.all(ws.w.deriv > 0)
    # the minimum of g' is attained inside the grid and is positive
    k = int(np.argmin(ws.w.deriv))
    assert k < ws.grid.n and ws.w.deriv[k] > 0


def test_grid_must_start_at_zero():
    with pytest.raises(ValueError):
        solve_w(EX1, ExponentialClaims(1.0), Grid(h=0.01, n=100, origin=1.0))
