"""Uniform grids, Hermite-interpolated grid functions and claim convolutions.

Convolutions ``int_0^x f(x - a) dF(a)`` are evaluated by product
integration: ``f`` is taken piecewise linear between grid nodes and each
cell is integrated exactly against ``dF`` through the CDF ``F`` and the
partial first moment ``G``.  For a density this is the trapezoidal rule
with the density weight folded into the cell masses, which stays second
order even when the density jumps inside a cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import DomainError
from .model import ClaimDist, ModelParams

__all__ = [
    "Grid",
    "GridFn",
    "LowerFunction",
    "convolution_kernel",
    "claim_convolve",
    "self_convolve",
    "pl_integral",
    "m_operator",
    "second_difference",
]

MIN_POINTS = 16


@dataclass(frozen=True)
class Grid:
    """Nodes ``origin + i*h`` for ``i = 0..n``."""

    h: float
    n: int
    origin: float = 0.0

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"grid step must be positive, got {self.h}")
        if self.n < MIN_POINTS:
            raise ValueError(f"grid needs at least {MIN_POINTS} cells, got {self.n}")

    @classmethod
    def from_extent(cls, x_max: float, h: float, origin: float = 0.0) -> "Grid":
        """Grid on ``[origin, x_max]`` whose step is ``h`` or slightly less so
        that the last node lands on ``x_max``."""
        n = max(int(math.ceil((x_max - origin) / h - 1e-9)), MIN_POINTS)
        return cls(h=(x_max - origin) / n, n=n, origin=origin)

    @classmethod
    def stepped(cls, origin: float, x_end: float, h: float) -> "Grid":
        """Grid with exact step ``h`` from ``origin`` reaching at least ``x_end``."""
        n = max(int(math.ceil((x_end - origin) / h - 1e-9)), MIN_POINTS)
        return cls(h=h, n=n, origin=origin)

    @property
    def x_max(self) -> float:
        return self.origin + self.n * self.h

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n + 1)


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GridFn:
    """Function sampled on a grid together with its first derivative."""

    grid: Grid
    values: np.ndarray
    deriv: np.ndarray

    def __post_init__(self):
        v, d = _readonly(self.values), _readonly(self.deriv)
        if v.shape != (self.grid.n + 1,) or d.shape != v.shape:
            raise ValueError(
                f"expected {self.grid.n + 1} samples, got values {v.shape} and deriv {d.shape}"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "deriv", d)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def _cell(self, x):
        g = self.grid
        x = np.asarray(x, dtype=float)
        slack = 1e-12 * max(1.0, abs(g.x_max))
        if np.any(x < g.origin - slack) or np.any(x > g.x_max + slack) or np.any(np.isnan(x)):
            raise DomainError(f"evaluation outside [{g.origin}, {g.x_max}]")
        s = (np.clip(x, g.origin, g.x_max) - g.origin) / g.h
        k = np.clip(np.floor(s).astype(int), 0, g.n - 1)
        return k, s - k

    def eval(self, x):
        """Cubic Hermite interpolant of (values, deriv)."""
        k, t = self._cell(x)
        h = self.grid.h
        y0, y1 = self.values[k], self.values[k + 1]
        d0, d1 = self.deriv[k] * h, self.deriv[k + 1] * h
        t2, t3 = t * t, t * t * t
        out = (
            (2 * t3 - 3 * t2 + 1) * y0
            + (t3 - 2 * t2 + t) * d0
            + (-2 * t3 + 3 * t2) * y1
            + (t3 - t2) * d1
        )
        return out if np.ndim(out) else float(out)

    def eval_deriv(self, x):
        """Derivative of the Hermite interpolant."""
        k, t = self._cell(x)
        h = self.grid.h
        y0, y1 = self.values[k], self.values[k + 1]
        d0, d1 = self.deriv[k], self.deriv[k + 1]
        t2 = t * t
        out = (
            (6 * t2 - 6 * t) * (y0 - y1) / h
            + (3 * t2 - 4 * t + 1) * d0
            + (3 * t2 - 2 * t) * d1
        )
        return out if np.ndim(out) else float(out)


def second_difference(fp, h: float, x, breaks=()) -> np.ndarray:
    """Derivative of the samples ``fp`` (spacing ``h``) by central
    differences, switching to one-sided three-point stencils at nodes whose
    central stencil would straddle a point in ``breaks``."""
    fp = np.asarray(fp, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.gradient(fp, h, edge_order=2)
    n = fp.size - 1
    for b in breaks:
        for i in np.flatnonzero(np.abs(x - b) < h * (1 + 1e-9)):
            if x[i] >= b - 1e-9 * h and i + 2 <= n:
                out[i] = (-3 * fp[i] + 4 * fp[i + 1] - fp[i + 2]) / (2 * h)
            elif i >= 2:
                out[i] = (3 * fp[i] - 4 * fp[i - 1] + fp[i - 2]) / (2 * h)
    return out


@lru_cache(maxsize=16)
def convolution_kernel(dist: ClaimDist, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product-integration weights for ``int_0^{ih} f(ih - a) dF(a)``.

    Returns ``(K, B)`` such that for a function sampled at ``f_0..f_i``::

        conv_i = sum_{k=0}^{i-1} K[k] f_{i-k} + B[i-1] f_0

    ``K`` has length ``n+1`` and ``B`` length ``n``.
    """
    edges = h * np.arange(n + 1)
    dF, dG = dist.cell_masses(edges[:-1], edges[1:])
    B = (dG - edges[:-1] * dF) / h
    A = dF - B
    K = np.zeros(n + 1)
    K[:n] += A
    K[1:] += B
    K.setflags(write=False)
    B.setflags(write=False)
    return K, B


def claim_convolve(f: GridFn, d: ClaimDist, i: int) -> float:
    """``int_0^{x_i} f(x_i - a) dF(a)`` for a function on a grid starting at 0."""
    if f.grid.origin != 0.0:
        raise DomainError("claim_convolve needs a grid anchored at 0")
    if not 0 <= i <= f.grid.n:
        raise IndexError(f"grid index {i} outside 0..{f.grid.n}")
    if i == 0:
        return 0.0
    K, B = convolution_kernel(d, f.grid.h, f.grid.n)
    v = f.values
    return float(np.dot(K[:i], v[i:0:-1]) + B[i - 1] * v[0])


def self_convolve(values, d: ClaimDist, h: float) -> np.ndarray:
    """Vector of ``int_0^{x_i} f(x_i - a) dF(a)`` for every node at once."""
    v = np.asarray(values, dtype=float)
    n = v.size - 1
    K, B = convolution_kernel(d, h, n)
    A = K[:n] - np.concatenate([[0.0], B[:-1]])
    full = np.convolve(K, v)[: n + 1]
    full[:n] -= A * v[0]
    return full


def pl_integral(s_nodes, v_nodes, d: ClaimDist, x: float) -> float:
    """``int v(s) dF(x - s)`` over ``s`` in ``[s_0, s_m]`` with ``v`` piecewise
    linear through the given nodes; equivalently the claim integral over
    ``a`` in ``[x - s_m, x - s_0]``."""
    s = np.asarray(s_nodes, dtype=float)
    v = np.asarray(v_nodes, dtype=float)
    if s.size < 2:
        return 0.0
    Fs = d.cdf(x - s)
    Gs = d.partial_moment(x - s)
    dF = Fs[:-1] - Fs[1:]
    dG = Gs[:-1] - Gs[1:]
    slope = np.diff(v) / np.diff(s)
    return float(np.sum((v[:-1] + slope * (x - s[:-1])) * dF - slope * dG))


@dataclass(frozen=True, eq=False)
class LowerFunction:
    """A value function on ``[0, x0]``: ``core`` on ``[0, a]`` (if any)
    continued affinely with slope one, or ``s + v0`` when there is no core."""

    v0: float
    core: Optional[GridFn] = None

    @property
    def a(self) -> float:
        return 0.0 if self.core is None else self.core.grid.x_max

    @property
    def value_at_a(self) -> float:
        return self.v0 if self.core is None else float(self.core.values[-1])

    def value(self, s):
        s = np.asarray(s, dtype=float)
        a = self.a
        tail = self.value_at_a + (s - a)
        if self.core is None:
            return tail if tail.ndim else float(tail)
        inner = self.core.eval(np.minimum(s, a))
        out = np.where(s <= a, inner, tail)
        return out if out.ndim else float(out)

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        if self.core is None:
            out = np.ones_like(s)
        else:
            out = np.where(s <= self.a, self.core.eval_deriv(np.minimum(s, self.a)), 1.0)
        return out if out.ndim else float(out)

    def integral(self, d: ClaimDist, x: float, x0: float) -> float:
        """``int_{x-x0}^{x} w0(x - a) dF(a)`` for this lower function on ``[0, x0]``."""
        a = min(self.a, x0)
        total = 0.0
        if self.core is not None and a > 0:
            g = self.core.grid
            m = int(math.floor(a / g.h + 1e-9))
            s = g.x[: m + 1]
            v = self.core.values[: m + 1]
            if s[-1] < a:
                s = np.append(s, a)
                v = np.append(v, self.core.eval(a))
            total += pl_integral(s, v, d, x)
        if x0 > a:
            wa = self.value(a)
            lo, hi = x - x0, x - a
            dF = float(d.cdf(hi) - d.cdf(lo))
            dG = float(d.partial_moment(hi) - d.partial_moment(lo))
            total += (wa + x - a) * dF - dG
        return total


def m_operator(
    f: GridFn,
    d: ClaimDist,
    params: ModelParams,
    i: int,
    lower: Optional[LowerFunction] = None,
) -> float:
    """``M(f)`` at node ``i``; with ``lower`` given, ``f`` lives on
    ``[x0, x_max]`` and the part of the claim integral reaching below ``x0``
    uses ``lower``."""
    g = f.grid
    if not 0 <= i <= g.n:
        raise DomainError(f"grid index {i} outside 0..{g.n}")
    x0 = g.origin
    if lower is None and x0 != 0.0:
        raise DomainError("a grid not anchored at 0 needs a lower function")
    xi = x0 + i * g.h
    conv = 0.0
    if i > 0:
        K, B = convolution_kernel(d, g.h, g.n)
        conv = float(np.dot(K[:i], f.values[i:0:-1]) + B[i - 1] * f.values[0])
    if lower is not None and x0 > 0:
        conv += lower.integral(d, xi, x0)
    return params.cb * float(f.values[i]) - params.beta * conv
