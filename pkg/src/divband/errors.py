"""Exception hierarchy shared by the solver modules.

The CLI prints the class name of any :class:`DivbandError`, so every class
here doubles as a stable error identifier.  Input errors
(:class:`ConfigError`, :class:`ModelError`) exit with code 2, the rest
with code 3.
"""


class DivbandError(Exception):
    """Base class for all solver errors."""


class ModelError(DivbandError, ValueError):
    """Invalid model parameters or claim distribution."""


class NonPositiveParam(ModelError):
    pass


class DiscountBelowDrift(ModelError):
    """c <= r: the value function is infinite in this regime."""


class DomainError(DivbandError, ValueError):
    """Evaluation point outside the support of a sampled function."""


class SolverError(DivbandError):
    pass


class MonotonicityLost(SolverError):
    """The marched derivative became nonpositive."""


class ResidualTooLarge(SolverError):
    pass


class GridTooShort(SolverError):
    """The minimum of W' sits on the right edge of the grid."""


class NoRoot(SolverError):
    """The band-bottom scan found no sign change."""


class NoBandCandidate(SolverError):
    pass


class NotAValueFunction(SolverError):
    """A candidate has slope below one somewhere."""


class NoConvergence(SolverError):
    pass


class ConfigError(DivbandError, ValueError):
    """Malformed configuration or simulation settings."""
