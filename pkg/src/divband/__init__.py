"""Optimal dividend bands for an insurer investing in a risky asset."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DivbandError,
    DomainError,
    ModelError,
    NoBandCandidate,
    NoConvergence,
    SolverError,
)
from .model import ExponentialClaims, ModelParams, TabulatedClaims, UniformClaims, validate  # noqa: E402
from .gridfn import Grid, GridFn  # noqa: E402
from .wsolve import WSolution, hjb_residual, solve_w  # noqa: E402
from .barrier import BandStructure, CandidateValue, argmin_wprime, barrier_value, optimal_barrier  # noqa: E402
from .verify import CertReport, certify  # noqa: E402
from .bands import band_search, classify, continuation_solve, two_band_search  # noqa: E402
from .simulate import SimReport, StrategySpec, estimate_value, simulate_path  # noqa: E402
from .oracle import OracleResult, policy_iteration_solve  # noqa: E402
