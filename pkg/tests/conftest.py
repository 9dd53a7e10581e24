from dataclasses import dataclass

import pytest

from divband.bands import two_band_search
from divband.barrier import CandidateValue, optimal_barrier
from divband.gridfn import Grid
from divband.model import ClaimDist, ExponentialClaims, ModelParams, UniformClaims
from divband.wsolve import WSolution, solve_w

EX1 = ModelParams(p=4.0, beta=1.0, c=0.5, r=0.3, sigma=2.0)
EX2 = ModelParams(p=1.6, beta=1.0, c=0.3, r=0.2, sigma=1.0)


@dataclass
class Example:
    params: ModelParams
    dist: ClaimDist
    grid: Grid
    ws: WSolution
    barrier: CandidateValue


@pytest.fixture(scope="session")
def ex1() -> Example:
    d = ExponentialClaims(1.0)
    grid = Grid.from_extent(30.0, 1e-3)
    ws = solve_w(EX1, d, grid)
    return Example(EX1, d, grid, ws, optimal_barrier(ws))


@pytest.fixture(scope="session")
def ex2() -> Example:
    d = UniformClaims(0.7, 1.0)
    grid = Grid.from_extent(30.0, 1e-3)
    ws = solve_w(EX2, d, grid)
    return Example(EX2, d, grid, ws, optimal_barrier(ws))


@pytest.fixture(scope="session")
def ex2_bands(ex2):
    """``(y1, z1, candidate)`` for the second example."""
    return two_band_search(ex2.params, ex2.dist, ex2.grid)
