"""Independent finite-difference solver for the dividend HJB obstacle problem.

Howard policy iteration on a uniform grid of ``[0, L]``.  Each node either
pays (``V_i - V_{i-1} = h``) or continues with an investment fraction
``gamma_i`` and the discretised equation

    sigma^2 gamma^2 x^2 / 2 D2 V + (p + r gamma x) D+ V - (c+beta) V + beta C V = 0,

with a forward (upwind) first difference, a central second difference and
a trapezoidal claim integral ``C`` whose node weights are half the claim
mass of each adjacent cell.  At ``x = 0`` the continuation equation loses
its second-order and investment terms.  The last node always pays.

Only the model definitions and the grid containers are shared with the
rest of the package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConfigError, NoConvergence
from .gridfn import Grid, GridFn
from .model import ClaimDist, ModelParams, validate

__all__ = ["OracleResult", "policy_iteration_solve", "default_extent", "default_grid", "MAX_CELLS"]

MAX_CELLS = 2000

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OracleResult:
    x: np.ndarray
    v: np.ndarray
    pay: np.ndarray
    gamma: np.ndarray
    iterations: int
    residual: float
    history: tuple[float, ...]

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def value(self, x):
        return np.interp(x, self.x, self.v)

    def pay_at(self, x) -> bool:
        """Pay flag of the node nearest ``x``."""
        i = int(round(float(x) / self.h))
        return bool(self.pay[min(max(i, 0), self.x.size - 1)])

    def as_gridfn(self) -> GridFn:
        n = self.x.size - 1
        return GridFn(Grid(h=self.h, n=n), self.v, np.gradient(self.v, self.h))


def default_extent(params: ModelParams) -> float:
    """``p/(c-r)``: the payout region starts below this level."""
    return params.p / (params.c - params.r)


def default_grid(params: ModelParams, n: int = MAX_CELLS) -> Grid:
    """``n`` cells over ``[0, p/(c-r)]``."""
    return Grid.from_extent(default_extent(params), default_extent(params) / n)


def _claim_matrix(dist: ClaimDist, h: float, n: int) -> np.ndarray:
    edges = h * np.arange(n + 1)
    dF = np.diff(dist.cdf(edges))
    w = np.zeros(n + 1)
    w[0] = 0.5 * dF[0]
    w[1:n] = 0.5 * (dF[:-1] + dF[1:])
    i, j = np.indices((n + 1, n + 1))
    m = i - j
    C = np.where(m >= 0, w[np.clip(m, 0, n)], 0.0)
    C[np.arange(1, n + 1), 0] = 0.5 * dF[: n]
    C[0, 0] = 0.0
    return C


def policy_iteration_solve(
    params: ModelParams,
    dist: ClaimDist,
    grid: Optional[Grid] = None,
    max_iter: int = 200,
    tol: float = 1e-8,
    force_gamma: Optional[float] = None,
) -> OracleResult:
    """Solve the discrete HJB obstacle problem by policy iteration.

    Parameters
    ----------
    grid
        Uniform grid from 0 with at most ``MAX_CELLS`` cells; the default
        is :func:`default_grid`.  Its last node always pays.
    force_gamma
        Fix the investment fraction instead of optimising it.

    Raises
    ------
    NoConvergence
        If the policy has not settled with residual below ``tol`` after
        ``max_iter`` sweeps.
    """
    validate(params, allow_zero_beta=True)
    grid = default_grid(params) if grid is None else grid
    if grid.origin != 0.0:
        raise ConfigError("the oracle grid must start at 0")
    if grid.n > MAX_CELLS:
        raise ConfigError(f"the oracle uses dense matrices; {grid.n} cells exceeds {MAX_CELLS}")
    n, h = grid.n, grid.h
    x = grid.x
    p, r, cb, beta = params.p, params.r, params.cb, params.beta
    s2 = params.sigma**2
    C = _claim_matrix(dist, h, n)

    pay = np.zeros(n + 1, dtype=bool)
    pay[n] = True
    gam = np.full(n + 1, 1.0 if force_gamma is None else float(force_gamma))
    history = []
    inner = np.arange(1, n)

    for it in range(1, max_iter + 1):
        A = beta * C.copy()
        A[np.diag_indices(n + 1)] -= cb
        b = np.zeros(n + 1)
        # continuation rows
        a2 = 0.5 * s2 * gam[inner] ** 2 * x[inner] ** 2 / h**2
        a1 = (p + r * gam[inner] * x[inner]) / h
        A[inner, inner - 1] += a2
        A[inner, inner] += -2 * a2 - a1
        A[inner, inner + 1] += a2 + a1
        A[0, :] = 0.0
        A[0, 0], A[0, 1] = -p / h - cb, p / h
        # pay rows, scaled as 1 - D-V
        rows = np.flatnonzero(pay)
        A[rows, :] = 0.0
        for i in rows:
            if i == 0:
                A[0, 0], A[0, 1], b[0] = 1.0 / h, -1.0 / h, -1.0
            else:
                A[i, i], A[i, i - 1], b[i] = -1.0 / h, 1.0 / h, -1.0
        V = lu_solve(lu_factor(A), b)

        cont, gbest = _continuation_sup(V, x, h, C, params, force_gamma)
        payv = np.empty(n + 1)
        payv[1:] = 1.0 - np.diff(V) / h
        payv[0] = 1.0 - (V[1] - V[0]) / h
        res = np.maximum(cont, payv)
        res[n] = payv[n]
        resid = float(np.max(np.abs(res)))
        history.append(resid)

        new_pay = payv > cont + 1e-12
        # keep the current action on ties so the iteration cannot cycle
        tie = np.abs(payv - cont) <= 1e-12
        new_pay[tie] = pay[tie]
        new_pay[n] = True
        if new_pay[0] and new_pay[1]:
            new_pay[0] = False
        new_gam = gam if force_gamma is not None else gbest
        # gamma is re-optimised from V, so it only settles to rounding level;
        # a small residual already certifies it
        stable = np.array_equal(new_pay, pay)
        log.debug("sweep %d: residual %.3g, %d pay nodes", it, resid, int(new_pay.sum()))
        if stable and resid <= tol:
            return OracleResult(x, V, pay.copy(), gam.copy(), it, resid, tuple(history))
        pay, gam = new_pay, new_gam.copy()
    raise NoConvergence(f"policy iteration did not settle in {max_iter} sweeps (residual {history[-1]:.3g})")


def _continuation_sup(V, x, h, C, params: ModelParams, force_gamma):
    n = V.size - 1
    p, r, cb, beta = params.p, params.r, params.cb, params.beta
    s2 = params.sigma**2
    Dp = np.empty(n + 1)
    Dp[:n] = np.diff(V) / h
    Dp[n] = 1.0
    D2 = np.zeros(n + 1)
    D2[1:n] = (V[2:] - 2 * V[1:n] + V[:-2]) / h**2
    base = p * Dp - cb * V + beta * (C @ V)
    qa = 0.5 * s2 * x**2 * D2
    qb = r * x * Dp
    if force_gamma is not None:
        g = np.full(n + 1, float(force_gamma))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(qa < 0, -qb / (2 * qa), 1.0)
        g = np.clip(np.nan_to_num(g, nan=1.0), 0.0, 1.0)
        g = np.where(qa * g * g + qb * g >= 0, g, 0.0)
    g[0] = 1.0 if force_gamma is None else float(force_gamma)
    cont = base + qa * g * g + qb * g
    cont[0] = p * Dp[0] - cb * V[0]
    return cont, g
