"""Band strategies: the Lambda function, region labels, the continuation
solver and the one/two/k-band candidate search.

A new band is found by continuing the equation from a trial bottom ``y``
above the current candidate.  With ``U_y`` the continuation and ``g(y)``
the value of ``U_y' - 1`` at the first interior local minimum of ``U_y'``,
the band bottom is the smallest root of ``g`` and the band top is the
point where ``U_y'`` touches one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .barrier import (
    Band,
    BandStructure,
    CandidateValue,
    GluePoint,
    affine_candidate,
    optimal_barrier,
    refine_min,
)
from .errors import NoBandCandidate, NoRoot, NotAValueFunction
from .gridfn import Grid, GridFn, LowerFunction
from .model import ClaimDist, ModelParams, validate
from .verify import CertReport, certify, default_tol, m_at, operator_samples
from .wsolve import march, second_derivative, solve_w, taylor_seed

__all__ = [
    "ContinuationSolution",
    "lambda_fn",
    "lambda_on_grid",
    "classify",
    "continuation_solve",
    "find_touch",
    "local_min_gap",
    "two_band_search",
    "extend_band",
    "band_search",
    "TOUCH_TOL",
]

log = logging.getLogger(__name__)

TOL_D = 1e-6
TOUCH_TOL = 1e-6
SCAN_CELLS = 10


def lambda_fn(v: CandidateValue, params: ModelParams, dist: ClaimDist, x: float) -> float:
    """``Lambda(x) = p + r x - M(V)(x)``."""
    return params.p + params.r * x - m_at(v, params, dist, x)


def lambda_on_grid(v: CandidateValue, params: ModelParams, dist: ClaimDist, x_end: Optional[float] = None):
    """``(x, Lambda(x))`` on the candidate's certification grid."""
    ops = operator_samples(v, params, dist, x_end)
    return ops.x, params.p + params.r * ops.x - ops.M


def classify(
    v: CandidateValue,
    params: ModelParams,
    dist: ClaimDist,
    x_end: Optional[float] = None,
    tol_d: float = TOL_D,
    tol_lambda: Optional[float] = None,
):
    """Label grid points ``A`` (V' = 1, Lambda = 0), ``B`` (V' = 1,
    Lambda < 0) or ``C`` (everything else).

    Returns ``(x, labels)`` with labels as a numpy array of single
    characters.
    """
    tol_lambda = default_tol(v, params) if tol_lambda is None else tol_lambda
    ops = operator_samples(v, params, dist, x_end)
    lam = params.p + params.r * ops.x - ops.M
    gap = ops.Vp - 1.0
    if np.any(gap < -tol_d):
        i = int(np.argmin(gap))
        raise NotAValueFunction(f"V' = {ops.Vp[i]:.9g} < 1 at x = {ops.x[i]:.6g}")
    flat = np.abs(gap) <= tol_d
    labels = np.full(ops.x.shape, "C")
    labels[flat & (np.abs(lam) <= tol_lambda)] = "A"
    labels[flat & (lam < -tol_lambda)] = "B"
    return ops.x, labels


@dataclass(frozen=True, eq=False)
class ContinuationSolution:
    """Continuation ``U`` on ``[x0, x_end]`` of a lower function ``w0``."""

    u: GridFn
    u2: np.ndarray
    gamma: np.ndarray
    x0: float
    w0: LowerFunction
    stopped_early: bool = False

    @property
    def x(self) -> np.ndarray:
        return self.u.grid.x


def continuation_solve(
    params: ModelParams,
    dist: ClaimDist,
    w0: LowerFunction,
    x0: float,
    grid: Grid,
    stop: Optional[Callable] = None,
) -> ContinuationSolution:
    """Solve ``L*(U, W0) = 0`` on ``grid`` (origin ``x0``), seeded with
    ``U(x0) = w0(x0)``, ``U'(x0) = w0'(x0)`` and ``U''(x0)`` from the equation.

    For ``x0 = 0`` the equation fixes ``U'(0) = (c+beta) U(0) / p``, so the
    solution is ``w0(0) W`` and ``w0'(0)`` is not used.
    """
    validate(params, allow_zero_beta=True)
    if abs(grid.origin - x0) > 1e-12 * max(1.0, abs(x0)):
        raise ValueError(f"grid origin {grid.origin} differs from x0 = {x0}")
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    if x0 == 0.0:
        k = min(10, grid.n) + 1
        W, Wp, W2 = taylor_seed(params, dist, grid.x[:k])
        s = float(w0.value(0.0))
        seed = (W * s, Wp * s, W2 * s, np.ones(k))
        m = march(params, dist, grid, seed, stop=stop)
    else:
        u0, up0 = float(w0.value(x0)), float(w0.deriv(x0))
        M0 = params.cb * u0 - params.beta * w0.integral(dist, x0, x0)
        u20, g0 = second_derivative(M0, up0, x0, params)
        seed = (np.array([u0]), np.array([up0]), np.array([u20]), np.array([g0]))
        m = march(params, dist, grid, seed, lower_conv=lambda x: w0.integral(dist, x, x0), stop=stop)
    n = len(m.x) - 1
    stopped = m.last < grid.n
    if n < 16:
        # pad very short marches so the result is still a valid grid function
        return _short(m, grid, w0, x0, stopped)
    ugrid = Grid(h=grid.h, n=n, origin=grid.origin)
    return ContinuationSolution(GridFn(ugrid, m.u, m.up), _ro(m.u2), _ro(m.gamma), x0, w0, stopped)


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _short(m, grid, w0, x0, stopped):
    n = 16
    xs = m.x
    xe = grid.origin + n * grid.h
    ext = np.linspace(grid.origin, xe, n + 1)
    up = np.interp(ext, xs, m.up)
    u = np.interp(ext, xs, m.u)
    beyond = ext > xs[-1]
    u[beyond] = m.u[-1] + m.up[-1] * (ext[beyond] - xs[-1])
    up[beyond] = m.up[-1]
    ugrid = Grid(h=grid.h, n=n, origin=grid.origin)
    return ContinuationSolution(
        GridFn(ugrid, u, up), _ro(np.interp(ext, xs, m.u2)), _ro(np.interp(ext, xs, m.gamma)), x0, w0, stopped
    )


def _first_local_min(up: np.ndarray, u2: np.ndarray, start: int = 1) -> Optional[int]:
    """Index of the first node where ``U''`` turns from negative to
    nonnegative, i.e. the node nearest a local minimum of ``U'``."""
    neg = u2[start:] < 0
    turn = np.flatnonzero(neg[:-1] & ~neg[1:])
    if turn.size == 0:
        return None
    j = start + int(turn[0]) + 1
    return j - 1 if up[j - 1] < up[j] else j


def local_min_gap(cs: ContinuationSolution) -> tuple[float, Optional[float]]:
    """``(g, z)``: ``U' - 1`` at the first interior local minimum of ``U'``
    and its location, or ``(min U' - 1 over the tail, None)`` if there is no
    interior minimum."""
    up, u2, x = cs.u.deriv, cs.u2, cs.x
    j = _first_local_min(up, u2)
    if j is None:
        if np.any(up[1:] < 1.0):
            k = int(np.argmax(up[1:] < 1.0)) + 1
            return float(up[k] - 1.0), None
        return float(up[-1] - 1.0), None
    z, umin = refine_min(x, up, u2, j, cs.u.grid.h / 100)
    return float(umin - 1.0), z


def find_touch(cs: ContinuationSolution, tol: float = TOUCH_TOL) -> Optional[float]:
    """Smallest ``z > x0 + h`` with ``U'(z) = 1``.

    A downward crossing of one is located by bisection on the Hermite
    interpolant; without a crossing, an interior local minimum of ``U'``
    within ``tol`` of one counts as a tangential touch.
    """
    x, up, u2 = cs.x, cs.u.deriv, cs.u2
    h = cs.u.grid.h
    d = up - 1.0
    idx = np.flatnonzero((d[1:-1] > 0) & (d[2:] <= 0))
    if idx.size:
        j = int(idx[0]) + 1
        a, b = x[j], x[j + 1]

        def f(t):
            return _hermite(x, up, u2, j, t) - 1.0

        return float(brentq(f, a, b, xtol=1e-12)) if f(b) < 0 else float(b)
    g, z = local_min_gap(cs)
    if z is not None and abs(g) <= tol and z > x[0] + h:
        return z
    return None


def _hermite(x, f, df, j, t):
    hh = x[j + 1] - x[j]
    s = (t - x[j]) / hh
    return (
        (2 * s**3 - 3 * s**2 + 1) * f[j]
        + (s**3 - 2 * s**2 + s) * df[j] * hh
        + (-2 * s**3 + 3 * s**2) * f[j + 1]
        + (s**3 - s**2) * df[j + 1] * hh
    )


def _lower_from(cand: CandidateValue) -> LowerFunction:
    return LowerFunction(v0=cand.v0, core=cand.core)


def _min_stop(floor: float = 0.5):
    """Stop a march at the first local minimum of ``U'`` or once ``U'``
    falls below ``floor``."""

    def stop(j, U, Up, U2):
        if j >= 2 and U2[j - 1] < 0 <= U2[j]:
            return True
        return Up[j] < floor

    return stop


def _continue_from(params, dist, lower, y, h, x_end):
    grid = Grid.stepped(y, max(x_end, y + 16 * h), h)
    return continuation_solve(params, dist, lower, y, grid, stop=_min_stop())


@dataclass(frozen=True)
class _GapEval:
    g: float
    z: Optional[float]


def _gap(params, dist, lower, y, h, x_end) -> _GapEval:
    cs = _continue_from(params, dist, lower, y, h, x_end)
    g, z = local_min_gap(cs)
    return _GapEval(g, z)


def extend_band(
    params: ModelParams,
    dist: ClaimDist,
    cand: CandidateValue,
    h: float,
    x_end: Optional[float] = None,
) -> Optional[CandidateValue]:
    """Add one band above ``cand``.

    Scans trial bottoms ``y = a* + 10h, a* + 20h, ...`` up to ``p/(c-r)``
    for the first sign change of the gap ``g(y)``, refines the root with
    Brent's method and glues the continuation up to its touch point.
    Returns None when ``g`` is already nonpositive at the first trial
    bottom (no band can start above ``a*``).

    Raises
    ------
    NoRoot
        If the scan finds no sign change below ``p/(c-r)``.
    """
    cap = params.payout_bound
    x_end = cap + 1.0 if x_end is None else x_end
    lower = _lower_from(cand)
    step = SCAN_CELLS * h
    y_prev, y = None, cand.a_star + step
    g_prev = None
    scan = []
    while y <= cap:
        ge = _gap(params, dist, lower, y, h, x_end)
        scan.append((y, ge.g))
        if ge.g <= 0:
            break
        y_prev, g_prev = y, ge.g
        y += step
    else:
        raise NoRoot(f"gap stays positive for bottoms up to p/(c-r) = {cap:.4g}")
    if y_prev is None:
        return None
    y1 = brentq(lambda t: _gap(params, dist, lower, t, h, x_end).g, y_prev, y, xtol=1e-10, rtol=1e-12)
    # take the bracket side where the touch is from above
    cs = _continue_from(params, dist, lower, y1, h, x_end)
    g1, z1 = local_min_gap(cs)
    if z1 is None:
        raise NoRoot(f"no interior minimum of U' for bottom {y1:.6g}")
    log.debug("band bottom %.6g, top %.6g, gap %.3g", y1, z1, g1)
    out = _glue(params, dist, cand, cs, y1, z1, h)
    out.meta.update(scan=scan, gap=g1)
    return out


def _glue(params, dist, cand: CandidateValue, cs: ContinuationSolution, y1: float, z1: float, h: float) -> CandidateValue:
    """Candidate equal to ``cand`` (affinely extended) below ``y1``, to the
    continuation on ``[y1, z1]`` and affine with slope one above ``z1``."""
    n = max(int(math.ceil(z1 / h - 1e-9)), 16)
    grid = Grid(h=z1 / n, n=n)
    x = grid.x
    below = x <= y1
    lower = cs.w0
    ux = np.clip(x, cs.x[0], cs.x[-1])
    V = np.where(below, lower.value(np.minimum(x, y1)), cs.u.eval(ux))
    Vp = np.where(below, lower.deriv(np.minimum(x, y1)), cs.u.eval_deriv(ux))
    # continuation second derivative and investment fraction
    u2 = np.interp(ux, cs.x, cs.u2)
    ug = np.interp(ux, cs.x, cs.gamma)
    if cand.core is not None:
        a = cand.a_star
        inner = x <= a
        l2 = np.where(inner, np.interp(np.minimum(x, a), cand.core.x, cand.v2), 0.0)
        lg = np.where(inner, np.interp(np.minimum(x, a), cand.core.x, cand.gamma), 1.0)
    else:
        l2 = np.zeros_like(x)
        lg = np.ones_like(x)
    v2 = np.where(below, l2, u2)
    gam = np.where(below, lg, ug)
    Vp[-1] = 1.0
    bands = BandStructure(cand.bands.bands + (Band(float(y1), float(z1)),))
    glue = cand.glue + (
        GluePoint(float(y1), float(cs.u.values[0]), float(cs.u2[0]), side=+1),
        GluePoint(float(z1), float(V[-1]), float(v2[-1]), side=-1),
    )
    return CandidateValue(
        core=GridFn(grid, V, Vp),
        a_star=float(z1),
        v0=float(V[0]),
        bands=bands,
        v2=v2,
        gamma=gam,
        glue=glue,
        h=h,
        meta={"kind": f"{len(bands.a0_points())}-band"},
    )


def two_band_search(params: ModelParams, dist: ClaimDist, grid: Grid):
    """Best strategy that pays everything near 0 and keeps one band above.

    Returns ``(y1, z1, candidate)``.  When the gap is already nonpositive
    at the first trial bottom the root is degenerate: the result is
    ``(0, x*, optimal barrier)``.
    """
    validate(params)
    h = grid.h
    base = affine_candidate(params.p / params.cb, h=h, meta={"kind": "barrier"})
    cand = extend_band(params, dist, base, h, x_end=grid.x_max)
    if cand is None:
        ws = solve_w(params, dist, grid)
        bar = optimal_barrier(ws)
        return 0.0, bar.a_star, bar
    b = cand.bands.bands[0]
    return b.bottom, b.top, cand


def band_search(
    params: ModelParams,
    dist: ClaimDist,
    grid: Grid,
    max_bands: int = 2,
    tol: Optional[float] = None,
) -> CandidateValue:
    """First certified candidate among the best barrier, the best two-band
    strategy and further bands stacked on top, up to ``max_bands``.

    The returned candidate carries its certificate in ``meta["report"]``.
    """
    if max_bands < 1:
        raise NoBandCandidate("max_bands must be at least 1")
    validate(params)
    tried = []
    ws = solve_w(params, dist, grid)
    cand = optimal_barrier(ws)
    rep = certify(cand, params, dist, tol=tol)
    tried.append(("1-band", rep))
    if rep.passed:
        cand.meta["report"] = rep
        return cand
    h = grid.h
    current = affine_candidate(params.p / params.cb, h=h, meta={"kind": "barrier"})
    for k in range(2, max_bands + 1):
        try:
            nxt = extend_band(params, dist, current, h, x_end=grid.x_max)
        except NoRoot as exc:
            log.info("band %d: %s", k, exc)
            break
        if nxt is None:
            break
        rep = certify(nxt, params, dist, tol=tol)
        tried.append((f"{k}-band", rep))
        if rep.passed:
            nxt.meta["report"] = rep
            return nxt
        current = nxt
    summary = ", ".join(f"{name}: max residual {r.max_residual:.3g}" for name, r in tried)
    raise NoBandCandidate(f"no candidate with at most {max_bands} bands certified ({summary})")
