"""The increasing solution ``W`` of the HJB equality ``L*(W) = 0``, ``W(0) = 1``.

The equation is written as a second-order Volterra integro-differential
system and marched forward.  At each node the optimal investment fraction
is the clamped parabola vertex

    gamma~ = min(1, 2 (M - p W') / (r x W')),

and the second derivative follows from ``L_gamma~(W) = 0``.  A Taylor seed
covers the first nodes, where the diffusion coefficient vanishes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import MonotonicityLost, ResidualTooLarge
from .gridfn import Grid, GridFn, convolution_kernel, second_difference, self_convolve
from .model import ClaimDist, ModelParams, validate

__all__ = [
    "GAMMA_FLOOR",
    "WSolution",
    "ResidualReport",
    "gamma_tilde",
    "taylor_seed",
    "second_derivative",
    "solve_w",
    "hjb_residual",
    "l_gamma",
    "sup_over_gamma",
]

log = logging.getLogger(__name__)

GAMMA_FLOOR = 1e-8
SEED_CELLS = 10
_NEWTON_MAXIT = 60


def gamma_tilde(M_val: float, wprime: float, x: float, params: ModelParams) -> float:
    """Optimal investment fraction at ``x > 0``, clamped to ``[1e-8, 1]``."""
    if not wprime > 0:
        raise MonotonicityLost(f"W' = {wprime} <= 0 at x = {x}")
    if x <= 0:
        return 1.0
    g = 2.0 * (M_val - params.p * wprime) / (params.r * x * wprime)
    return float(min(1.0, max(g, GAMMA_FLOOR)))


def second_derivative(M_val: float, wprime: float, x: float, params: ModelParams) -> tuple[float, float]:
    """``(W'', gamma~)`` solved from ``L_gamma~(W)(x) = 0``."""
    g = gamma_tilde(M_val, wprime, x, params)
    s2 = params.sigma**2 * g * g * x * x
    return 2.0 * (M_val - (params.p + params.r * g * x) * wprime) / s2, g


def taylor_seed(params: ModelParams, dist: ClaimDist, x) -> tuple:
    """Expansion of ``(W, W', W'')`` at the origin.

    ``W'(0)`` and ``W''(0)`` follow from the equation and its first
    derivative at 0 (where ``gamma~ = 1``); the cubic term comes from the
    second derivative and makes the seed residual third order in ``x``.
    """
    cb, p, r, beta = params.cb, params.p, params.r, params.beta
    f0, f1 = dist.density_at_zero(), dist.density_slope_at_zero()
    w1 = cb / p
    w2 = (cb - r) * cb / p**2 - f0 * beta / p
    w3 = ((cb - 2 * r - params.sigma**2) * w2 - beta * (f1 + w1 * f0)) / p
    x = np.asarray(x, dtype=float)
    W = 1.0 + w1 * x + 0.5 * w2 * x * x + w3 * x**3 / 6.0
    Wp = w1 + w2 * x + 0.5 * w3 * x * x
    W2 = w2 + w3 * x
    if W.ndim == 0:
        return float(W), float(Wp), float(W2)
    return W, Wp, W2


@dataclass(frozen=True, eq=False)
class WSolution:
    w: GridFn
    w2: np.ndarray
    gamma: np.ndarray
    params: ModelParams
    dist: ClaimDist

    @property
    def grid(self) -> Grid:
        return self.w.grid

    @property
    def x(self) -> np.ndarray:
        return self.w.grid.x


@dataclass(frozen=True)
class March:
    """Raw output of :func:`march`, possibly stopped early at node ``last``."""

    x: np.ndarray
    u: np.ndarray
    up: np.ndarray
    u2: np.ndarray
    gamma: np.ndarray
    last: int


def march(
    params: ModelParams,
    dist: ClaimDist,
    grid: Grid,
    seed: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    lower_conv: Optional[Callable[[float], float]] = None,
    stop: Optional[Callable[[int, np.ndarray, np.ndarray, np.ndarray], bool]] = None,
) -> March:
    """Forward-march ``L_gamma~(U) = 0`` on ``grid``.

    ``seed`` holds ``(U, U', U'', gamma)`` for the first ``k >= 1`` nodes.
    Later nodes use the two-step backward differentiation formula on
    ``(U, U')`` (backward Euler for a single seed node), with the new ``U'``
    found by Newton's method; the claim integral over the marched
    history enters through the product-integration kernel and
    ``lower_conv(x)`` adds any contribution from below the grid origin.
    ``stop(j, U, U', U'')`` may end the march after node ``j``.
    """
    n, h = grid.n, grid.h
    x = grid.x
    K, B = convolution_kernel(dist, h, n)
    p, r, beta, cb = params.p, params.r, params.beta, params.cb
    sig2 = params.sigma**2

    U = np.zeros(n + 1)
    Up = np.zeros(n + 1)
    U2 = np.zeros(n + 1)
    gam = np.ones(n + 1)
    k = len(seed[0])
    U[:k], Up[:k], U2[:k], gam[:k] = seed
    last = n
    if stop is not None:
        for j in range(k):
            if stop(j, U, Up, U2):
                return March(x[: j + 1], U[: j + 1], Up[: j + 1], U2[: j + 1], gam[: j + 1], j)

    k0 = K[0]
    for j in range(k, n + 1):
        xj = x[j]
        S = float(np.dot(K[1:j], U[j - 1 : 0 : -1])) + B[j - 1] * U[0]
        if lower_conv is not None:
            S += lower_conv(xj)
        if j >= 2:
            # BDF2: damps the stiff mode near the origin where the
            # diffusion coefficient is small
            cq = 2.0 * h / 3.0
            base_u = (4.0 * U[j - 1] - U[j - 2]) / 3.0
            rhs0 = (4.0 * Up[j - 1] - Up[j - 2]) / 3.0
        else:
            cq = h
            base_u = U[j - 1]
            rhs0 = Up[j - 1]
        D = cb - beta * k0
        x2 = xj * xj

        def resid(q):
            Uj = base_u + cq * q
            M = D * Uj - beta * S
            N = M - p * q
            g = 2.0 * N / (r * xj * q)
            if g >= 1.0:
                g = 1.0
                w2 = 2.0 * (N - r * xj * q) / (sig2 * x2)
                dw2 = 2.0 * (D * cq - p - r * xj) / (sig2 * x2)
            elif g > GAMMA_FLOOR:
                w2 = -(r * r) * q * q / (2.0 * sig2 * N)
                dN = D * cq - p
                dw2 = -(r * r) / (2.0 * sig2) * (2.0 * q * N - q * q * dN) / (N * N)
            else:
                g = GAMMA_FLOOR
                c2 = sig2 * g * g * x2
                w2 = 2.0 * (M - (p + r * g * xj) * q) / c2
                dw2 = 2.0 * (D * cq - (p + r * g * xj)) / c2
            return q - rhs0 - cq * w2, 1.0 - cq * dw2, w2, g, Uj

        q = Up[j - 1] + h * U2[j - 1]
        if q <= 0:
            q = 0.5 * Up[j - 1]
        for _ in range(_NEWTON_MAXIT):
            R, dR, *_ = resid(q)
            step = R / dR if dR != 0 else 0.0
            qn = q - step
            # damp steps that would leave the monotone branch
            while qn <= 0 and step != 0:
                step *= 0.5
                qn = q - step
            q = qn
            if abs(step) <= 1e-14 * max(1.0, abs(q)):
                break
        R, _, w2, g, Uj = resid(q)
        if not (q > 0 and np.isfinite(q) and np.isfinite(w2)):
            raise MonotonicityLost(f"derivative lost positivity at x = {xj:.6g}")
        if abs(R) > 1e-8 * max(1.0, abs(q)):
            raise ResidualTooLarge(f"implicit step did not converge at x = {xj:.6g} (|R| = {abs(R):.3g})")
        U[j], Up[j], U2[j], gam[j] = Uj, q, w2, g
        if stop is not None and stop(j, U, Up, U2):
            last = j
            break
    s = slice(0, last + 1)
    return March(x[s].copy(), U[s].copy(), Up[s].copy(), U2[s].copy(), gam[s].copy(), last)


def solve_w(
    params: ModelParams,
    dist: ClaimDist,
    grid: Grid,
    *,
    seed_cells: int = SEED_CELLS,
    check_residual: bool = True,
) -> WSolution:
    """March ``W`` over ``grid`` (which must start at 0).

    Raises
    ------
    MonotonicityLost
        If ``W'`` stops being positive.
    ResidualTooLarge
        If the recomputed equation residual exceeds ``1e-4 (c+beta) max W``.
    """
    validate(params, allow_zero_beta=True)
    if grid.origin != 0.0:
        raise ValueError("W is defined from the origin; grid.origin must be 0")
    k = min(seed_cells, grid.n) + 1
    xs = grid.x[:k]
    W, Wp, W2 = taylor_seed(params, dist, xs)
    m = march(params, dist, grid, (W, Wp, W2, np.ones(k)))
    ws = WSolution(
        w=GridFn(grid, m.u, m.up),
        w2=_readonly(m.u2),
        gamma=_readonly(m.gamma),
        params=params,
        dist=dist,
    )
    if check_residual:
        rep = hjb_residual(ws)
        if not rep.passed:
            raise ResidualTooLarge(
                f"max |L(W)| = {rep.max_abs_tilde:.3g} exceeds tolerance {rep.tol:.3g}"
            )
    log.debug("solved W on [0, %g] with %d cells", grid.x_max, grid.n)
    return ws


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def l_gamma(gamma, x, v, vp, vpp, M, params: ModelParams):
    """``L_gamma(u)(x)`` from pointwise ``u, u', u''`` and ``M(u)(x)``."""
    return (
        0.5 * params.sigma**2 * gamma**2 * x**2 * vpp
        + (params.p + params.r * gamma * x) * vp
        - M
    )


def sup_over_gamma(x, vp, vpp, M, params: ModelParams, samples: int = 41):
    """Maximum of ``L_gamma`` over a uniform ``gamma`` sample of ``[0, 1]``
    augmented with the clamped parabola vertex.

    Returns ``(sup, gamma_at_sup)`` as arrays.
    """
    x, vp, vpp, M = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(a, dtype=float)) for a in (x, vp, vpp, M))
    )
    a = 0.5 * params.sigma**2 * x**2 * vpp
    b = params.r * x * vp
    c0 = params.p * vp - M
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vert = np.where(a < 0, -b / (2 * a), 1.0)
    vert = np.clip(np.nan_to_num(vert, nan=1.0), 0.0, 1.0)
    grid = np.linspace(0.0, 1.0, max(samples, 2))
    cand = np.vstack([np.broadcast_to(grid[:, None], (grid.size, x.size)), vert[None, :]])
    vals = cand * cand * a + cand * b + c0
    idx = np.argmax(vals, axis=0)
    cols = np.arange(x.size)
    return vals[idx, cols], cand[idx, cols]


@dataclass(frozen=True)
class ResidualReport:
    max_sup: float
    max_abs_tilde: float
    argmax_sup: float
    argmax_abs_tilde: float
    tol: float
    vertex_excess: float

    @property
    def passed(self) -> bool:
        return self.max_sup <= self.tol and self.max_abs_tilde <= self.tol


def hjb_residual(ws: WSolution, gamma_samples: int = 41, tol: Optional[float] = None) -> ResidualReport:
    """Recompute ``L_gamma(W)`` on the grid.

    ``M(W)`` is reassembled from the stored values and ``W''`` comes from
    central differences of the stored ``W'`` (one-sided at the ends and
    beside density jumps, where the third derivative jumps), so
    the check does not reuse the marcher's own second derivative.  The
    seed node ``x = 0`` uses the exact limit ``p W'(0) - (c+beta) W(0)``.
    """
    params = ws.params
    g = ws.grid
    x = g.x
    W, Wp = ws.w.values, ws.w.deriv
    M = params.cb * W - params.beta * self_convolve(W, ws.dist, g.h)
    W2 = second_difference(Wp, g.h, x, ws.dist.density_jumps())
    sup, _ = sup_over_gamma(x, Wp, W2, M, params, gamma_samples)
    # analytic maximum over [0, 1] for the vertex check
    a = 0.5 * params.sigma**2 * x**2 * W2
    b = params.r * x * Wp
    c0 = params.p * Wp - M
    with np.errstate(divide="ignore", invalid="ignore"):
        gv = np.clip(np.nan_to_num(np.where(a < 0, -b / (2 * a), 1.0), nan=1.0), 0.0, 1.0)
    exact = np.maximum.reduce([c0, a + b + c0, gv * gv * a + gv * b + c0])
    gt = np.ones_like(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = 2.0 * (M - params.p * Wp) / (params.r * x * Wp)
    gt[1:] = np.clip(raw[1:], GAMMA_FLOOR, 1.0)
    lt = l_gamma(gt, x, W, Wp, W2, M, params)
    tol = 1e-4 * params.cb * float(np.max(W)) if tol is None else tol
    i_sup = int(np.argmax(sup))
    i_abs = int(np.argmax(np.abs(lt)))
    return ResidualReport(
        max_sup=float(sup[i_sup]),
        max_abs_tilde=float(abs(lt[i_abs])),
        argmax_sup=float(x[i_sup]),
        argmax_abs_tilde=float(x[i_abs]),
        tol=float(tol),
        vertex_excess=float(np.max(sup - exact)),
    )
