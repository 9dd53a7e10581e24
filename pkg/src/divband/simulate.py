"""Monte Carlo estimates of discounted dividends under a band strategy.

Between claims the surplus follows an Euler-Maruyama step of
``dX = (p + r gamma X) dt + sigma gamma X dB``; claim epochs are drawn
exactly and the diffusion is stepped up to each of them.  After every step
the surplus is projected onto the strategy: anything above the current
band top, or inside a gap between bands, is paid out at once.  A
surplus of zero in the zero-absorbing region pays the premium stream until
the next claim, which then ruins the company; that stretch is integrated
in closed form.

Randomness comes from a counter-based hash of ``(seed, path, counter,
stream)``, so each path is reproducible on its own and results do not
depend on how paths are split across blocks or threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .barrier import BandStructure, CandidateValue
from .errors import ConfigError
from .model import ClaimDist, ModelParams, validate

__all__ = [
    "StrategySpec",
    "SimReport",
    "simulate_path",
    "estimate_value",
    "default_t_max",
    "truncation_bound",
    "uniforms",
]

BLOCK = 8192

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)

STREAM_NORMAL = 0
STREAM_CLAIM_TIME = 1
STREAM_CLAIM_SIZE = 2


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _path_keys(seed: int, path, stream: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        k = _mix(np.asarray([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + np.uint64(stream) * _GOLD)
        return _mix(k + np.asarray(path, dtype=np.uint64) * _GOLD)


def _keyed_uniforms(keys: np.ndarray, counter) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = _mix(keys + np.asarray(counter, dtype=np.uint64) * _GOLD)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def uniforms(seed: int, path, counter, stream: int) -> np.ndarray:
    """Uniforms in (0, 1) keyed by ``(seed, path, counter, stream)``."""
    return _keyed_uniforms(_path_keys(seed, path, stream), counter)


@dataclass(frozen=True, eq=False)
class StrategySpec:
    """Stationary band strategy with investment fraction ``gamma(x)``
    given by linear interpolation of samples (1 beyond the last sample)."""

    bands: BandStructure
    gamma_x: Optional[np.ndarray] = None
    gamma_v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.gamma_v is not None:
            g = np.asarray(self.gamma_v, dtype=float)
            if np.any(g < 0) or np.any(g > 1):
                raise ConfigError("investment fractions must lie in [0, 1]")

    @property
    def zero_absorbing(self) -> bool:
        return self.bands.zero_absorbing

    @property
    def a_star(self) -> float:
        return self.bands.a_star

    @classmethod
    def from_candidate(cls, cand: CandidateValue) -> "StrategySpec":
        if cand.core is None:
            return cls(cand.bands)
        return cls(cand.bands, np.asarray(cand.core.x), np.asarray(cand.gamma_at(cand.core.x)))

    @classmethod
    def pay_everything(cls) -> "StrategySpec":
        """Pay the whole surplus at once, then the premium until ruin."""
        return cls(BandStructure())

    def gamma(self, x: np.ndarray) -> np.ndarray:
        if self.gamma_x is None:
            return np.ones_like(x)
        return np.interp(x, self.gamma_x, self.gamma_v, right=1.0)


@dataclass(frozen=True)
class SimReport:
    estimate: float
    stderr: float
    n_paths: int
    ruin_fraction: float
    truncation_bound: float
    t_max: float
    dt: float


def truncation_bound(params: ModelParams, a_star: float, t_max: float) -> float:
    """Bound on the discounted dividends after ``t_max``."""
    return math.exp(-params.c * t_max) * (a_star + params.p / params.c)


def default_t_max(params: ModelParams, a_star: float, value: float, rel: float = 1e-3) -> float:
    """Smallest horizon whose truncation bound is ``rel * value``."""
    return max(math.log((a_star + params.p / params.c) / (rel * value)) / params.c, 0.0)


def _check(params: ModelParams, dt: float, t_max: float, x0: float):
    validate(params)
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if dt >= 1.0 / (10.0 * params.beta):
        raise ConfigError(f"dt = {dt} must be below 1/(10 beta) = {1 / (10 * params.beta):.4g}")
    if not t_max > 0:
        raise ConfigError(f"t_max must be positive, got {t_max}")
    if not x0 >= 0:
        raise ConfigError(f"x0 must be nonnegative, got {x0}")


def _run_block(spec: StrategySpec, x0, params: ModelParams, dist: ClaimDist, dt, t_max, seed, paths):
    p, r, c, beta, sigma = params.p, params.r, params.c, params.beta, params.sigma
    n = paths.size
    out = np.zeros(n)
    ruined = np.zeros(n, dtype=bool)

    idx = np.arange(n)
    kn = _path_keys(seed, paths, STREAM_NORMAL)
    kt = _path_keys(seed, paths, STREAM_CLAIM_TIME)
    ks = _path_keys(seed, paths, STREAM_CLAIM_SIZE)
    X = np.full(n, float(x0))
    t = np.zeros(n)
    D = np.zeros(n)
    steps = np.zeros(n, dtype=np.uint64)
    nclaim = np.zeros(n, dtype=np.uint64)
    Tc = -np.log(_keyed_uniforms(kt, nclaim)) / beta
    bands = spec.bands

    def project(X, t, D):
        target = bands.payout_target(X)
        k = np.flatnonzero(X > target)
        if k.size:
            D[k] += (X[k] - target[k]) * np.exp(-c * t[k])
        return target

    X = project(X, t, D)
    one = np.uint64(1)
    state = [idx, kn, kt, ks, X, t, D, steps, nclaim, Tc]

    def retire(mask, ruin_flags):
        out[state[0][mask]] = state[6][mask]
        ruined[state[0][mask]] = ruin_flags
        keep = ~mask
        return [a[keep] for a in state]

    while state[0].size:
        idx, kn, kt, ks, X, t, D, steps, nclaim, Tc = state
        # zero surplus in the absorbing region: premium paid until the next claim
        if spec.zero_absorbing:
            ab = X <= 0.0
            if np.any(ab):
                tend = np.minimum(Tc[ab], t_max)
                D[ab] += (p / c) * (np.exp(-c * t[ab]) - np.exp(-c * tend))
                state = retire(ab, Tc[ab] < t_max)
                continue

        tau = np.minimum(np.minimum(dt, Tc - t), t_max - t)
        g = spec.gamma(X)
        z = ndtri(_keyed_uniforms(kn, steps))
        gx = g * X
        X += (p + r * gx) * tau + sigma * gx * np.sqrt(tau) * z
        np.maximum(X, 0.0, out=X)
        t += tau
        steps += one

        dead = None
        h = np.flatnonzero(t >= Tc)
        if h.size:
            X[h] -= dist.sample(_keyed_uniforms(ks[h], nclaim[h]))
            nclaim[h] += one
            Tc[h] = t[h] - np.log(_keyed_uniforms(kt[h], nclaim[h])) / beta
            dead = X < 0.0
            X[dead] = 0.0
        X = project(X, t, D)
        done = t >= t_max
        if dead is not None:
            done |= dead
        state = [idx, kn, kt, ks, X, t, D, steps, nclaim, Tc]
        if np.any(done):
            state = retire(done, dead[done] if dead is not None else False)
    return out, ruined


def _simulate(spec, x0, params, dist, dt, t_max, seed, n_paths, workers):
    starts = list(range(0, n_paths, BLOCK))

    def job(s):
        return _run_block(spec, x0, params, dist, dt, t_max, seed, np.arange(s, min(s + BLOCK, n_paths)))

    if workers and workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(job, starts))
    else:
        res = [job(s) for s in starts]
    return np.concatenate([r[0] for r in res]), np.concatenate([r[1] for r in res])


def simulate_path(
    spec: StrategySpec,
    x0: float,
    params: ModelParams,
    dist: ClaimDist,
    dt: float,
    t_max: float,
    seed: int,
    path: int = 0,
) -> tuple[float, bool]:
    """Discounted dividends and ruin flag of one path."""
    _check(params, dt, t_max, x0)
    d, ruined = _run_block(spec, x0, params, dist, dt, t_max, seed, np.array([path]))
    return float(d[0]), bool(ruined[0])


def estimate_value(
    spec: StrategySpec,
    x0: float,
    params: ModelParams,
    dist: ClaimDist,
    n_paths: int,
    dt: float,
    t_max: float,
    master_seed: int,
    workers: int = 1,
) -> SimReport:
    """Mean discounted dividends over ``n_paths`` independent paths."""
    _check(params, dt, t_max, x0)
    if n_paths < 100:
        raise ConfigError(f"need at least 100 paths, got {n_paths}")
    d, ruined = _simulate(spec, x0, params, dist, dt, t_max, master_seed, n_paths, workers)
    return SimReport(
        estimate=float(np.mean(d)),
        stderr=float(np.std(d, ddof=1) / math.sqrt(n_paths)),
        n_paths=int(n_paths),
        ruin_fraction=float(np.mean(ruined)),
        truncation_bound=truncation_bound(params, spec.a_star, t_max),
        t_max=float(t_max),
        dt=float(dt),
    )
