import numpy as np
import pytest

from divband.barrier import affine_candidate, optimal_barrier
from divband.gridfn import Grid
from divband.model import ExponentialClaims
from divband.verify import certify, default_tol
from divband.wsolve import solve_w

from conftest import EX1


def test_example1_barrier_passes(ex1):
    rep = certify(ex1.barrier, ex1.params, ex1.dist)
    assert rep.passed and not rep.witnesses
    assert rep.tol == pytest.approx(1e-3 * ex1.params.cb * ex1.barrier.value_at_a)
    assert rep.max_residual <= rep.tol


def test_example1_residual_shrinks_with_h():
    d = ExponentialClaims(1.0)
    res = []
    for h in (1e-3, 5e-4):
        v = optimal_barrier(solve_w(EX1, d, Grid.from_extent(30.0, h)))
        res.append(certify(v, EX1, d).max_positive_l)
    assert res[1] <= res[0] / 2


def test_example2_zero_barrier_fails(ex2):
    rep = certify(ex2.barrier, ex2.params, ex2.dist)
    assert not rep.passed
    assert rep.witnesses
    r = [w.residual for w in rep.witnesses]
    assert r == sorted(r, reverse=True)
    assert all(w > rep.tol for w in r)


def test_example2_two_band_passes(ex2, ex2_bands):
    rep = certify(ex2_bands[2], ex2.params, ex2.dist)
    assert rep.passed
    assert len(rep.glue) == 2


@pytest.mark.parametrize("k,ok", [(EX1.p / EX1.c, True), (EX1.p / EX1.c + 1.0, True), (EX1.p / EX1.cb / 2, False)])
def test_affine_candidates(k, ok):
    d = ExponentialClaims(1.0)
    rep = certify(affine_candidate(k), EX1, d)
    assert rep.passed is ok
    assert bool(rep.witnesses) is not ok


def test_monotone_in_tol(ex2):
    v, p, d = ex2.barrier, ex2.params, ex2.dist
    worst = certify(v, p, d).max_residual
    for tol in np.geomspace(1e-6, 10 * worst, 12):
        passed = certify(v, p, d, tol=tol).passed
        assert passed == (tol >= worst)
        if passed:
            assert certify(v, p, d, tol=2 * tol).passed


def test_default_tol_scales_with_value(ex1):
    v = ex1.barrier
    assert default_tol(v, ex1.params) == pytest.approx(1.5e-3 * float(v.value(v.a_star)), rel=1e-12)
