"""Barrier strategies: the minimiser of ``W'`` and rescaled copies of ``W``.

Band encoding
-------------
A :class:`BandStructure` lists the continuation intervals of a stationary
band strategy as ``(bottom, top)`` pairs.  Surplus in ``(bottom, top]`` is
kept and invested; surplus above ``top`` and at most the next ``bottom`` is
paid down to ``top``; surplus at or below the first ``bottom`` is paid out
entirely, after which the premium stream is paid until the next claim
ruins the company.  A band with ``bottom = 0`` also keeps the surplus
``0`` itself, so the pure barrier at ``x*`` is ``[(0, x*)]`` and paying
everything immediately is the empty structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import GridTooShort, SolverError
from .gridfn import Grid, GridFn
from .model import ModelParams
from .wsolve import WSolution

__all__ = [
    "Band",
    "BandStructure",
    "GluePoint",
    "CandidateValue",
    "argmin_wprime",
    "refine_min",
    "barrier_value",
    "optimal_barrier",
    "zero_barrier",
    "affine_candidate",
]


@dataclass(frozen=True)
class Band:
    bottom: float
    top: float


@dataclass(frozen=True)
class BandStructure:
    bands: tuple[Band, ...] = ()

    def __post_init__(self):
        b = tuple(self.bands)
        object.__setattr__(self, "bands", b)
        for k, band in enumerate(b):
            if not (0.0 <= band.bottom < band.top):
                raise ValueError(f"band {k} needs 0 <= bottom < top, got {band}")
            if k and not b[k - 1].top <= band.bottom:
                raise ValueError("bands must be ordered and disjoint")

    @property
    def a_star(self) -> float:
        return self.bands[-1].top if self.bands else 0.0

    @property
    def zero_absorbing(self) -> bool:
        """True when surplus near 0 is paid out entirely."""
        return not self.bands or self.bands[0].bottom > 0.0

    def a0_points(self) -> list[float]:
        """Levels that payouts reduce the surplus to."""
        pts = [0.0] if self.zero_absorbing else []
        return pts + [b.top for b in self.bands]

    def payout_target(self, x):
        """Level the surplus ``x`` is paid down to (``x`` itself when kept)."""
        x = np.asarray(x, dtype=float)
        target = np.zeros_like(x)
        keep = np.zeros(x.shape, dtype=bool)
        for b in self.bands:
            above = (x > b.bottom) | ((b.bottom == 0.0) & (x >= 0.0))
            target = np.where(above, b.top, target)
            keep = np.where(above, x <= b.top, keep)
        out = np.where(keep, x, np.minimum(target, x))
        return out if out.ndim else float(out)

    def to_list(self) -> list[dict]:
        return [{"bottom": b.bottom, "top": b.top} for b in self.bands]

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "BandStructure":
        return cls(tuple(Band(float(lo), float(hi)) for lo, hi in pairs))


@dataclass(frozen=True)
class GluePoint:
    """Point where two solution pieces meet, with the one-sided second
    derivative taken from the continuation side."""

    x: float
    v: float
    v2: float
    side: int = -1  # -1: continuation region lies to the left of x


@dataclass(frozen=True, eq=False)
class CandidateValue:
    """Piecewise value function: ``core`` on ``[0, a*]`` continued by
    ``V(a*) + (x - a*)``.  ``core`` is None when ``a* = 0``."""

    core: Optional[GridFn]
    a_star: float
    v0: float
    bands: BandStructure
    v2: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    glue: tuple[GluePoint, ...] = ()
    h: float = 1e-3
    meta: dict = field(default_factory=dict)

    @property
    def value_at_a(self) -> float:
        return self.v0 if self.core is None else float(self.core.values[-1])

    def value(self, x):
        x = np.asarray(x, dtype=float)
        tail = self.value_at_a + (x - self.a_star)
        if self.core is None:
            out = tail
        else:
            out = np.where(x <= self.a_star, self.core.eval(np.clip(x, 0.0, self.a_star)), tail)
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.core is None:
            out = np.ones_like(x)
        else:
            out = np.where(x <= self.a_star, self.core.eval_deriv(np.clip(x, 0.0, self.a_star)), 1.0)
        return out if out.ndim else float(out)

    def gamma_at(self, x):
        """Investment fraction; 1 wherever ``V'' = 0``."""
        x = np.asarray(x, dtype=float)
        if self.core is None or self.gamma is None:
            out = np.ones_like(x)
        else:
            g = np.interp(np.clip(x, 0.0, self.a_star), self.core.x, self.gamma)
            out = np.where(x <= self.a_star, g, 1.0)
        return out if out.ndim else float(out)

    def sample_grid(self, x_end: float) -> Grid:
        """Grid that contains the core nodes and runs on to ``x_end``."""
        if self.core is None:
            return Grid.from_extent(max(x_end, 16 * self.h), self.h)
        h = self.core.grid.h
        n = max(self.core.grid.n, int(math.ceil(x_end / h - 1e-9)))
        return Grid(h=h, n=n)

    def samples(self, grid: Grid):
        """``(V, V')`` on ``grid``; core nodes are copied exactly."""
        x = grid.x
        if self.core is not None and grid.h == self.core.grid.h:
            m = self.core.grid.n
            V = self.value_at_a + (x - self.a_star)
            Vp = np.ones_like(x)
            V[: m + 1] = self.core.values
            Vp[: m + 1] = self.core.deriv
            return V, Vp
        return np.asarray(self.value(x), dtype=float), np.asarray(self.deriv(x), dtype=float)


def refine_min(x: np.ndarray, f: np.ndarray, df: np.ndarray, k: int, xatol: float) -> tuple[float, float]:
    """Minimise the cubic Hermite interpolant of ``(f, df)`` on
    ``[x[k-1], x[k+1]]`` (clipped to the data)."""
    lo, hi = max(k - 1, 0), min(k + 1, len(x) - 1)
    if hi == lo:
        return float(x[k]), float(f[k])

    def interp(t):
        j = min(max(int(np.searchsorted(x, t) - 1), 0), len(x) - 2)
        hh = x[j + 1] - x[j]
        s = (t - x[j]) / hh
        return (
            (2 * s**3 - 3 * s**2 + 1) * f[j]
            + (s**3 - 2 * s**2 + s) * df[j] * hh
            + (-2 * s**3 + 3 * s**2) * f[j + 1]
            + (s**3 - s**2) * df[j + 1] * hh
        )

    res = minimize_scalar(interp, bounds=(x[lo], x[hi]), method="bounded", options={"xatol": xatol})
    xm, fm = float(res.x), float(res.fun)
    if f[k] <= fm:
        return float(x[k]), float(f[k])
    return xm, fm


def argmin_wprime(ws: WSolution) -> tuple[float, float]:
    """Return ``(w1, x_star)`` with ``w1 = min W'`` and ``x_star`` its
    smallest minimiser, refined between neighbouring nodes."""
    Wp = ws.w.deriv
    k = int(np.argmin(Wp))  # first occurrence, so ties go left
    g = ws.grid
    if k == g.n:
        raise GridTooShort(
            f"W' is still decreasing at x_max = {g.x_max}; extend the grid beyond "
            f"p/(c-r) = {ws.params.payout_bound:.4g}"
        )
    if k == 0:
        return float(Wp[0]), 0.0
    xm, fm = refine_min(g.x, Wp, ws.w2, k, g.h / 100)
    return fm, xm


def _resample(fn_x: np.ndarray, fn: GridFn, f2: np.ndarray, gam: np.ndarray, a: float, h: float, scale: float):
    n = max(int(math.ceil(a / h - 1e-9)), 16)
    grid = Grid(h=a / n, n=n)
    x = grid.x
    core = GridFn(grid, fn.eval(x) * scale, fn.eval_deriv(x) * scale)
    return core, np.interp(x, fn_x, f2) * scale, np.interp(x, fn_x, gam)


def barrier_value(ws: WSolution, y: float) -> CandidateValue:
    """Value of the barrier strategy at level ``y``: ``W(x)/W'(y)`` below
    ``y`` and slope one above."""
    g = ws.grid
    if not 0.0 <= y <= g.x_max:
        raise ValueError(f"barrier {y} outside [0, {g.x_max}]")
    wy = float(ws.w.eval_deriv(y))
    if y == 0.0:
        return affine_candidate(1.0 / wy, h=g.h, meta={"kind": "barrier", "w1": wy})
    core, v2, gam = _resample(g.x, ws.w, ws.w2, ws.gamma, y, g.h, 1.0 / wy)
    return CandidateValue(
        core=core,
        a_star=float(y),
        v0=float(core.values[0]),
        bands=BandStructure((Band(0.0, float(y)),)),
        v2=v2,
        gamma=gam,
        glue=(GluePoint(float(y), float(core.values[-1]), float(v2[-1])),),
        h=g.h,
        meta={"kind": "barrier", "w1": wy},
    )


def affine_candidate(v0: float, h: float = 1e-3, meta: Optional[dict] = None) -> CandidateValue:
    """``V(x) = x + v0``: everything is paid out at once."""
    return CandidateValue(
        core=None, a_star=0.0, v0=float(v0), bands=BandStructure(), h=h, meta=dict(meta or {})
    )


def zero_barrier(params: ModelParams, h: float = 1e-3) -> CandidateValue:
    """The barrier at 0, whose value at the origin is ``p/(c+beta)``."""
    return affine_candidate(params.p / params.cb, h=h, meta={"kind": "barrier"})


def optimal_barrier(ws: WSolution, n_probe: int = 50) -> CandidateValue:
    """Barrier at ``argmin W'``; checks that no probe barrier does better.

    The check is ``V1(x) >= V_y(x) - 1e-9`` for ``y`` on an even probe set
    of ``[0, x_max]`` and ``x`` on a mesh of ``[0, x*]``.  Beyond ``x*`` the
    comparison is not implied by minimality of ``W'(x*)``: when ``W'`` dips
    again after a higher bump, a barrier placed in the dip can beat ``V1``
    from surpluses near it.
    """
    w1, xs = argmin_wprime(ws)
    cand = barrier_value(ws, xs)
    g = ws.grid
    probes = np.linspace(0.0, g.x_max, n_probe)
    xm = np.linspace(0.0, xs, 101)
    v1 = cand.value(xm)
    for y in probes:
        wy = float(ws.w.eval_deriv(y))
        vy = np.where(xm <= y, ws.w.eval(np.minimum(xm, y)) / wy, float(ws.w.eval(y)) / wy + xm - y)
        if np.any(v1 < vy - 1e-9 * np.maximum(1.0, np.abs(vy))):
            raise SolverError(f"barrier at {y:.4g} beats the minimiser of W'")
    cand.meta["x_star"] = xs
    return cand
