"""Model parameters and claim-size distributions.

Every distribution exposes its CDF ``F`` and the partial first moment
``G(x) = int_0^x a dF(a)``.  Quadrature elsewhere in the package integrates
piecewise-linear functions exactly against ``dF`` using only these two
functions, which keeps density jumps (e.g. the uniform law on (0.7, 1])
from degrading the convolution accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import DiscountBelowDrift, ModelError, NonPositiveParam

__all__ = [
    "ModelParams",
    "ClaimDist",
    "ExponentialClaims",
    "UniformClaims",
    "TabulatedClaims",
    "validate",
    "claim_cdf",
    "claim_density",
    "claim_mean",
    "claim_sample",
    "claim_dist_from_config",
]

TAIL_EPS = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Premium ``p``, claim intensity ``beta``, discount ``c``, and the
    risky asset's drift ``r`` and volatility ``sigma``."""

    p: float
    beta: float
    c: float
    r: float
    sigma: float

    @property
    def cb(self) -> float:
        """The zeroth-order coefficient c + beta."""
        return self.c + self.beta

    @property
    def payout_bound(self) -> float:
        """p / (c - r): the payout region always starts at or below this level."""
        return self.p / (self.c - self.r)


def validate(params: ModelParams, *, allow_zero_beta: bool = False) -> None:
    """Raise unless ``c > r > 0`` and ``p, beta, sigma > 0``.

    ``allow_zero_beta`` admits the claim-free model, which the solvers accept
    as a degenerate input even though it is not a valid insurance model.
    """
    for name in ("p", "beta", "c", "r", "sigma"):
        v = getattr(params, name)
        if not math.isfinite(v):
            raise NonPositiveParam(f"{name} must be finite, got {v}")
    if params.p <= 0:
        raise NonPositiveParam(f"p must be positive, got {params.p}")
    if params.beta < 0 or (params.beta == 0 and not allow_zero_beta):
        raise NonPositiveParam(f"beta must be positive, got {params.beta}")
    if params.sigma <= 0:
        raise NonPositiveParam(f"sigma must be positive, got {params.sigma}")
    if params.r <= 0:
        raise NonPositiveParam(f"r must be positive, got {params.r}")
    if params.c <= params.r:
        raise DiscountBelowDrift(
            f"c={params.c} must exceed r={params.r}; the value function is infinite otherwise"
        )


class ClaimDist:
    """Claim-size law with bounded density on [0, inf) and no atoms."""

    kind: str = ""

    # subclasses implement _cdf, _partial_moment, density, sample
    def cdf(self, x):
        return self._cdf(np.asarray(x, dtype=float))

    def partial_moment(self, x):
        """``int_0^x a dF(a)``, zero for x <= 0."""
        return self._partial_moment(np.asarray(x, dtype=float))

    def cell_masses(self, lo, hi):
        """Return ``(F(hi) - F(lo), G(hi) - G(lo))`` elementwise."""
        return self.cdf(hi) - self.cdf(lo), self.partial_moment(hi) - self.partial_moment(lo)

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def density_bound(self) -> float:
        raise NotImplementedError

    def density_at_zero(self) -> float:
        """Right limit F'(0+)."""
        raise NotImplementedError

    def density_slope_at_zero(self) -> float:
        """Right limit F''(0+)."""
        raise NotImplementedError

    def density_jumps(self) -> tuple[float, ...]:
        """Positive points where the density is discontinuous."""
        return ()

    def support_upper(self) -> float:
        """Smallest x with F(x) >= 1 - 1e-12."""
        raise NotImplementedError

    def density(self, x):
        raise NotImplementedError

    def sample(self, u):
        """Inverse-CDF transform of uniforms ``u`` in (0, 1)."""
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialClaims(ClaimDist):
    rate: float = 1.0
    kind: str = field(default="exponential", init=False)

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ModelError(f"exponential rate must be positive, got {self.rate}")

    def _cdf(self, x):
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def _partial_moment(self, x):
        xx = np.maximum(x, 0.0)
        lam = self.rate
        return (1.0 - np.exp(-lam * xx) * (1.0 + lam * xx)) / lam

    def cell_masses(self, lo, hi):
        # survival-function differences keep relative accuracy in the far tail
        lam = self.rate
        lo = np.maximum(np.asarray(lo, dtype=float), 0.0)
        hi = np.maximum(np.asarray(hi, dtype=float), 0.0)
        slo, shi = np.exp(-lam * lo), np.exp(-lam * hi)
        dF = slo - shi
        dG = (lo + 1.0 / lam) * slo - (hi + 1.0 / lam) * shi
        return dF, dG

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def density_bound(self) -> float:
        return self.rate

    def density_at_zero(self) -> float:
        return self.rate

    def density_slope_at_zero(self) -> float:
        return -self.rate * self.rate

    def support_upper(self) -> float:
        return -math.log(TAIL_EPS) / self.rate

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def sample(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate


@dataclass(frozen=True)
class UniformClaims(ClaimDist):
    """Uniform claims on (lo, hi]; the config kind is ``piecewise_uniform``."""

    lo: float = 0.0
    hi: float = 1.0
    kind: str = field(default="piecewise_uniform", init=False)

    def __post_init__(self):
        if not (0.0 <= self.lo < self.hi and math.isfinite(self.hi)):
            raise ModelError(f"need 0 <= lo < hi, got lo={self.lo}, hi={self.hi}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def _cdf(self, x):
        return np.clip((x - self.lo) / self.width, 0.0, 1.0)

    def _partial_moment(self, x):
        u = np.clip(x, self.lo, self.hi)
        return (u * u - self.lo * self.lo) / (2.0 * self.width)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def density_bound(self) -> float:
        return 1.0 / self.width

    def density_at_zero(self) -> float:
        return 1.0 / self.width if self.lo == 0.0 else 0.0

    def density_slope_at_zero(self) -> float:
        return 0.0

    def density_jumps(self) -> tuple[float, ...]:
        return tuple(v for v in (self.lo, self.hi) if v > 0)

    def support_upper(self) -> float:
        return self.hi

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x > self.lo) & (x <= self.hi), 1.0 / self.width, 0.0)

    def sample(self, u):
        return self.lo + np.asarray(u, dtype=float) * self.width


@dataclass(frozen=True, eq=False)
class TabulatedClaims(ClaimDist):
    """Density given by samples on increasing nodes, linearly interpolated
    and renormalized to unit mass; zero outside the node range."""

    nodes: Any = None
    values: Any = None
    kind: str = field(default="tabulated", init=False)

    def __post_init__(self):
        t = np.array(self.nodes, dtype=float)
        d = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.shape != d.shape or t.size < 2:
            raise ModelError("tabulated density needs matching 1-D node/value arrays of length >= 2")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ModelError("tabulated nodes must be nonnegative and strictly increasing")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ModelError("tabulated density samples must be finite and nonnegative")
        dt = np.diff(t)
        mass = float(np.sum(0.5 * (d[1:] + d[:-1]) * dt))
        if mass <= 0:
            raise ModelError("tabulated density has zero mass")
        d = d / mass
        slope = np.diff(d) / dt
        cell_F = d[:-1] * dt + 0.5 * slope * dt**2
        cell_G = t[:-1] * cell_F + 0.5 * d[:-1] * dt**2 + slope * dt**3 / 3.0
        for arr in (t, d, slope):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", t)
        object.__setattr__(self, "values", d)
        object.__setattr__(self, "_slope", slope)
        object.__setattr__(self, "_cumF", np.concatenate([[0.0], np.cumsum(cell_F)]))
        object.__setattr__(self, "_cumG", np.concatenate([[0.0], np.cumsum(cell_G)]))

    def _locate(self, x):
        t = self.nodes
        k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 2)
        u = np.clip(x, t[0], t[-1]) - t[k]
        return k, u

    def _cdf(self, x):
        k, u = self._locate(x)
        d, s = self.values[k], self._slope[k]
        return np.minimum(self._cumF[k] + d * u + 0.5 * s * u * u, 1.0)

    def _partial_moment(self, x):
        k, u = self._locate(x)
        tk, d, s = self.nodes[k], self.values[k], self._slope[k]
        return self._cumG[k] + tk * (d * u + 0.5 * s * u * u) + 0.5 * d * u * u + s * u**3 / 3.0

    @property
    def mean(self) -> float:
        return float(self._cumG[-1])

    @property
    def density_bound(self) -> float:
        return float(np.max(self.values))

    def density_at_zero(self) -> float:
        return float(self.values[0]) if self.nodes[0] == 0.0 else 0.0

    def density_slope_at_zero(self) -> float:
        return float(self._slope[0]) if self.nodes[0] == 0.0 else 0.0

    def density_jumps(self) -> tuple[float, ...]:
        t, d = self.nodes, self.values
        out = [float(t[0])] if t[0] > 0 and d[0] > 0 else []
        return tuple(out + ([float(t[-1])] if d[-1] > 0 else []))

    def support_upper(self) -> float:
        return float(self.nodes[-1])

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.nodes[0]) & (x <= self.nodes[-1])
        return np.where(inside, np.interp(x, self.nodes, self.values), 0.0)

    def sample(self, u):
        u = np.asarray(u, dtype=float)
        k = np.clip(np.searchsorted(self._cumF, u, side="right") - 1, 0, self.nodes.size - 2)
        rem = u - self._cumF[k]
        d, s = self.values[k], self._slope[k]
        # root of s/2 v^2 + d v - rem = 0 written to avoid cancellation
        disc = np.sqrt(np.maximum(d * d + 2.0 * s * rem, 0.0))
        denom = d + disc
        v = np.where(denom > 0, 2.0 * rem / np.where(denom > 0, denom, 1.0), 0.0)
        return np.minimum(self.nodes[k] + v, self.nodes[k + 1])


def claim_cdf(d: ClaimDist, x):
    return d.cdf(x)


def claim_density(d: ClaimDist, x):
    return d.density(x)


def claim_mean(d: ClaimDist) -> float:
    return d.mean


def claim_sample(d: ClaimDist, u):
    return d.sample(u)


def claim_dist_from_config(cfg: Mapping[str, Any]) -> ClaimDist:
    """Build a distribution from ``{"kind": ..., <kind params>}``."""
    try:
        kind = cfg["kind"]
        if kind == "exponential":
            return ExponentialClaims(rate=float(cfg.get("rate", 1.0)))
        if kind == "piecewise_uniform":
            return UniformClaims(lo=float(cfg["lo"]), hi=float(cfg["hi"]))
        if kind == "tabulated":
            return TabulatedClaims(nodes=cfg["x"], values=cfg["density"])
    except (KeyError, TypeError) as exc:
        raise ModelError(f"bad claim config {dict(cfg)!r}: {exc}") from exc
    raise ModelError(f"unknown claim kind {cfg.get('kind')!r}")
