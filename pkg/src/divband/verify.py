"""Numerical supersolution certificate for candidate value functions.

A candidate passes when ``max(1 - V', sup_gamma L_gamma(V)) <= tol`` at
every node of a grid covering ``[0, max(a*, p/(c-r)) + 1]``.  ``V''`` is
taken from central differences of the stored ``V'``; stencils that would
straddle a glue point fall back to the one-sided difference on the node's
own side, and each glue point is also checked directly with the
second derivative from its continuation side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barrier import CandidateValue
from .gridfn import Grid, pl_integral, self_convolve
from .model import ClaimDist, ModelParams
from .wsolve import sup_over_gamma

__all__ = ["Witness", "GlueCheck", "CertReport", "OperatorSamples", "operator_samples", "m_at", "certify", "default_tol"]


@dataclass(frozen=True)
class Witness:
    x: float
    gamma: float
    residual: float


@dataclass(frozen=True)
class GlueCheck:
    x: float
    residual: float
    marginal: bool


@dataclass(frozen=True)
class CertReport:
    passed: bool
    max_residual: float
    max_positive_l: float
    tol: float
    witnesses: tuple[Witness, ...] = ()
    glue: tuple[GlueCheck, ...] = ()

    @property
    def marginal(self) -> bool:
        return any(g.marginal for g in self.glue)


@dataclass(frozen=True, eq=False)
class OperatorSamples:
    """``V, V', V''`` and ``M(V)`` on the certification grid."""

    grid: Grid
    V: np.ndarray
    Vp: np.ndarray
    V2: np.ndarray
    M: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.grid.x


def default_tol(v: CandidateValue, params: ModelParams) -> float:
    return 1e-3 * params.cb * v.value_at_a


def operator_samples(v: CandidateValue, params: ModelParams, dist: ClaimDist, x_end: Optional[float] = None) -> OperatorSamples:
    if x_end is None:
        x_end = max(v.a_star, params.payout_bound) + 1.0
    grid = v.sample_grid(x_end)
    x, h = grid.x, grid.h
    V, Vp = v.samples(grid)
    V2 = np.gradient(Vp, h)
    V2[x > v.a_star] = 0.0
    for gp in v.glue:
        i = int(np.floor(gp.x / h + 1e-9))
        for j in (i - 1, i, i + 1, i + 2):
            if not 0 <= j <= grid.n:
                continue
            xj = x[j]
            if abs(xj - gp.x) <= 1e-9 * h:
                V2[j] = gp.v2
            elif xj < gp.x < x[min(j + 1, grid.n)] and j > 0:
                V2[j] = (Vp[j] - Vp[j - 1]) / h
            elif x[max(j - 1, 0)] < gp.x < xj and j < grid.n:
                V2[j] = (Vp[j + 1] - Vp[j]) / h
    M = params.cb * V - params.beta * self_convolve(V, dist, h)
    return OperatorSamples(grid, V, Vp, V2, M)


def m_at(
    v: CandidateValue,
    params: ModelParams,
    dist: ClaimDist,
    x: float,
    vx: Optional[float] = None,
) -> float:
    """``M(V)(x)`` at an arbitrary point, integrating the piecewise-linear
    interpolant of ``V`` through the grid nodes below ``x`` and ``x``
    itself.  ``vx`` overrides ``V(x)``."""
    h = v.core.grid.h if v.core is not None else v.h
    vx = float(v.value(x)) if vx is None else float(vx)
    m = int(np.floor(x / h - 1e-9))
    s = h * np.arange(max(m, 0) + 1)
    s = s[s < x]
    vals = np.append(np.asarray(v.value(s), dtype=float), vx)
    s = np.append(s, x)
    conv = pl_integral(s, vals, dist, x) if s.size > 1 else 0.0
    return params.cb * vx - params.beta * conv


def certify(
    v: CandidateValue,
    params: ModelParams,
    dist: ClaimDist,
    gamma_samples: int = 41,
    tol: Optional[float] = None,
) -> CertReport:
    """Check the supersolution inequality on a grid; see module docstring."""
    tol = default_tol(v, params) if tol is None else float(tol)
    ops = operator_samples(v, params, dist)
    x = ops.x
    sup, gbest = sup_over_gamma(x, ops.Vp, ops.V2, ops.M, params, gamma_samples)
    slope_gap = 1.0 - ops.Vp
    resid = np.maximum(slope_gap, sup)
    bad = np.flatnonzero(resid > tol)
    wit = [
        Witness(float(x[i]), float(gbest[i]) if sup[i] >= slope_gap[i] else float("nan"), float(resid[i]))
        for i in bad
    ]
    glue = []
    for gp in v.glue:
        # both one-sided slopes are one at a glue point
        vx, vpx = gp.v, 1.0
        Mx = m_at(v, params, dist, gp.x, vx)
        s, gb = sup_over_gamma(gp.x, vpx, gp.v2, Mx, params, gamma_samples)
        r = max(float(s[0]), 1.0 - vpx)
        glue.append(GlueCheck(gp.x, r, tol / 2 < r <= tol))
        if r > tol:
            wit.append(Witness(gp.x, float(gb[0]), r))
    wit.sort(key=lambda w: -w.residual)
    max_res = max([float(np.max(resid))] + [g.residual for g in glue])
    return CertReport(
        passed=not wit,
        max_residual=max_res,
        max_positive_l=max(0.0, float(np.max(sup)), *[g.residual for g in glue]),
        tol=tol,
        witnesses=tuple(wit),
        glue=tuple(glue),
    )
