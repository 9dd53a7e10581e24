import numpy as np
import pytest

from divband.bands import (
    band_search,
    classify,
    continuation_solve,
    find_touch,
    lambda_fn,
    lambda_on_grid,
    local_min_gap,
    two_band_search,
)
from divband.barrier import affine_candidate, argmin_wprime
from divband.errors import NoBandCandidate, NotAValueFunction
from divband.gridfn import Grid, GridFn, LowerFunction
from divband.verify import default_tol


def label_at(x, labels, t):
    return labels[int(np.argmin(np.abs(x - t)))]


def restrict(fn: GridFn, k: int) -> GridFn:
    g = fn.grid
    return GridFn(Grid(h=g.h, n=k), fn.values[: k + 1], fn.deriv[: k + 1])


def test_lambda_zero_at_origin(ex1, ex2):
    for ex in (ex1, ex2):
        v = affine_candidate(ex.params.p / ex.params.cb)
        assert lambda_fn(v, ex.params, ex.dist, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_lambda_at_band_boundaries(ex1, ex2_bands, ex2):
    for ex, cand in ((ex1, ex1.barrier), (ex2, ex2_bands[2])):
        tol = default_tol(cand, ex.params)
        for a in cand.bands.a0_points() + [cand.a_star]:
            assert abs(lambda_fn(cand, ex.params, ex.dist, a)) <= tol


def test_lambda_negative_beyond_payout_bound(ex1, ex2_bands, ex2):
    for ex, cand in ((ex1, ex1.barrier), (ex2, ex2_bands[2])):
        cap = ex.params.payout_bound
        x, lam = lambda_on_grid(cand, ex.params, ex.dist, cap + 5.0)
        assert np.all(lam[x > cap + 1e-9] < 0)


def test_classify_example2(ex2, ex2_bands):
    y1, z1, cand = ex2_bands
    x, labels = classify(cand, ex2.params, ex2.dist)
    assert labels[0] == "A"
    assert label_at(x, labels, z1) == "A"
    assert set(labels[(x > 0.02) & (x < y1 - 0.01)]) == {"B"}
    assert set(labels[(x > y1 + 0.01) & (x < z1 - 0.02)]) == {"C"}
    assert set(labels[x > z1 + 0.2]) == {"B"}


def test_classify_example1(ex1):
    v = ex1.barrier
    x, labels = classify(v, ex1.params, ex1.dist)
    assert label_at(x, labels, v.a_star / 2) == "C"
    assert set(labels[(x > 0) & (x < v.a_star - 0.05)]) == {"C"}
    assert set(labels[x > v.a_star + 1.0]) == {"B"}


def test_classify_rejects_slope_below_one(ex2):
    # a barrier at 3 on the second example has V' < 1 below it
    from divband.barrier import barrier_value

    bad = barrier_value(ex2.ws, 3.0)
    with pytest.raises(NotAValueFunction):
        classify(bad, ex2.params, ex2.dist)


def test_continuation_reproduces_w(ex1):
    h = ex1.grid.h
    k = 2000
    x0 = k * h
    lower = LowerFunction(v0=1.0, core=restrict(ex1.ws.w, k))
    cs = continuation_solve(ex1.params, ex1.dist, lower, x0, Grid.stepped(x0, 12.0, h))
    assert cs.u.values[0] == pytest.approx(ex1.ws.w.values[k], abs=1e-12)
    assert cs.u.deriv[0] == pytest.approx(ex1.ws.w.deriv[k], abs=1e-12)
    ref = ex1.ws.w.eval(cs.x)
    assert np.max(np.abs(cs.u.values - ref)) <= 2e-4


def test_continuation_from_zero_is_scaled_w(ex1):
    w1, xs = argmin_wprime(ex1.ws)
    lower = LowerFunction(v0=1.0 / w1)
    cs = continuation_solve(ex1.params, ex1.dist, lower, 0.0, Grid.stepped(0.0, 8.0, ex1.grid.h))
    np.testing.assert_allclose(cs.u.values, ex1.ws.w.values[: cs.x.size] / w1, rtol=1e-12)
    z = find_touch(cs)
    assert z == pytest.approx(xs, abs=2e-3)
    assert abs(z - 4.846) <= 0.02


def test_continuation_example2_touch(ex2, ex2_bands):
    y1, z1, _ = ex2_bands
    p = ex2.params
    lower = LowerFunction(v0=p.p / p.cb)
    cs = continuation_solve(p, ex2.dist, lower, y1, Grid.stepped(y1, 6.0, ex2.grid.h))
    assert cs.u.deriv[0] == 1.0
    assert cs.u.values[0] == pytest.approx(y1 + p.p / p.cb, abs=1e-12)
    z = find_touch(cs, tol=1e-5)
    assert z is not None and abs(z - 2.926) <= 0.02


@pytest.mark.parametrize("y", [0.5, 1.0])
def test_touch_predicate_above_y1(ex2, y):
    p = ex2.params
    lower = LowerFunction(v0=p.p / p.cb)
    cs = continuation_solve(p, ex2.dist, lower, y, Grid.stepped(y, 6.0, ex2.grid.h))
    g, _ = local_min_gap(cs)
    assert g < 0


def test_touch_crossing_above_y1(ex2):
    p = ex2.params
    lower = LowerFunction(v0=p.p / p.cb)
    cs = continuation_solve(p, ex2.dist, lower, 0.5, Grid.stepped(0.5, 6.0, ex2.grid.h))
    z = find_touch(cs)
    assert z is not None and z > 1.0
    assert float(cs.u.eval_deriv(z)) == pytest.approx(1.0, abs=1e-6)


def test_two_band_example2(ex2, ex2_bands):
    y1, z1, cand = ex2_bands
    assert 0.27 <= y1 <= 0.31 and abs(y1 - 0.291) <= 0.03
    assert 2.90 <= z1 <= 2.95 and abs(z1 - 2.926) <= 0.03
    assert cand.v0 == pytest.approx(1.6 / 1.3, abs=1e-12)
    assert cand.bands.a0_points() == [0.0, z1]


def test_two_band_gap_is_bracketed(ex2_bands):
    scan = np.array(ex2_bands[2].meta["scan"])
    g = scan[:, 1]
    assert g[-1] <= 0 < g[-2]
    assert np.all(np.diff(g[-10:]) < 0)


def test_two_band_degenerate_for_example1(ex1):
    y1, z1, cand = two_band_search(ex1.params, ex1.dist, ex1.grid)
    assert y1 == 0.0
    assert z1 == pytest.approx(ex1.barrier.a_star, abs=1e-12)


def test_glue_points_are_smooth(ex2, ex2_bands):
    y1, z1, cand = ex2_bands
    p = ex2.params
    lower = LowerFunction(v0=cand.v0)
    cs = continuation_solve(p, ex2.dist, lower, y1, Grid.stepped(y1, z1 + 0.1, ex2.grid.h))
    # one-sided slopes of the two pieces meeting at y1 and at z1
    assert abs(float(lower.deriv(y1)) - 1.0) <= 1e-6
    assert abs(float(cs.u.eval_deriv(y1)) - 1.0) <= 1e-6
    assert abs(float(cs.u.eval_deriv(z1)) - 1.0) <= 1e-6
    assert abs(float(cand.deriv(z1)) - 1.0) <= 1e-6
    assert float(cand.deriv(z1 + 1e-9)) == 1.0


def test_small_surplus_identity(ex1):
    cand = band_search(ex1.params, ex1.dist, ex1.grid)
    w1, xs = argmin_wprime(ex1.ws)
    x = np.linspace(0.0, xs, 301)
    np.testing.assert_allclose(cand.value(x), ex1.ws.w.eval(x) / w1, rtol=1e-8)
    assert abs(cand.a_star - 4.846) <= 0.02
    assert cand.meta["report"].passed


def test_band_search_example2(ex2):
    cand = band_search(ex2.params, ex2.dist, ex2.grid)
    b = cand.bands.bands
    assert len(b) == 1 and abs(b[0].bottom - 0.291) <= 0.03 and abs(b[0].top - 2.926) <= 0.03
    assert cand.meta["report"].passed
    # labels agree with the band structure
    x, labels = classify(cand, ex2.params, ex2.dist)
    assert label_at(x, labels, b[0].top) == "A"


def test_band_search_needs_a_band(ex1):
    with pytest.raises(NoBandCandidate):
        band_search(ex1.params, ex1.dist, ex1.grid, max_bands=0)


def test_band_search_reports_failure(ex2):
    with pytest.raises(NoBandCandidate):
        band_search(ex2.params, ex2.dist, ex2.grid, max_bands=1)
