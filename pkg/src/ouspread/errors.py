"""Exception types shared across the package.

The CLI maps these onto its exit codes: configuration/parameter problems
exit with 2, numerical failures with 3 (gate failures use dedicated codes).
"""


class OuSpreadError(Exception):
    """Base class for all errors raised by this package."""


class BadScalar(OuSpreadError):
    """A scalar parameter is out of range (x0 <= 0, T <= 0, varpi <= 0, r < 0)."""


class EigenvalueViolation(OuSpreadError):
    """The mean-reversion matrix has an eigenvalue with nonnegative real part."""


class SingularVolatility(OuSpreadError):
    """sigma sigma' is singular (or numerically indistinguishable from singular)."""


class BadTimeOrder(OuSpreadError):
    """A time interval was given with its endpoints reversed."""


class NonFinite(OuSpreadError):
    """NaN or Inf encountered in an input matrix."""


class GridTooCoarse(OuSpreadError):
    """Requested solver grid is below the minimum resolution."""


class NegativeRho(OuSpreadError):
    """The time weight rho(t) = T - t + varpi came out nonpositive."""


class NonPositiveWealth(OuSpreadError):
    """Wealth must be strictly positive for the log-utility value function."""


class TimeOutOfRange(OuSpreadError):
    """Evaluation time lies outside [0, T]."""


class BadConsumption(OuSpreadError):
    """Consumption rate must be strictly positive."""


class HamiltonUnbounded(OuSpreadError):
    """The Hamiltonian has no finite maximum (M11 >= 0 or q1 <= 0)."""


class CovFactorizationFailure(OuSpreadError):
    """A covariance matrix could not be factorized as PSD."""


class SchemeMismatch(OuSpreadError):
    """The requested wealth scheme is incompatible with the strategy or paths."""


class UnknownKind(OuSpreadError):
    """Unrecognized strategy kind."""


class ConfigError(OuSpreadError):
    """Malformed or inconsistent run configuration."""


# Families used by the CLI for exit-code mapping.
CONFIG_ERRORS = (
    ConfigError,
    BadScalar,
    EigenvalueViolation,
    SingularVolatility,
    GridTooCoarse,
    UnknownKind,
)

NUMERIC_ERRORS = (
    NonFinite,
    CovFactorizationFailure,
    NegativeRho,
    NonPositiveWealth,
    TimeOutOfRange,
    BadConsumption,
    HamiltonUnbounded,
    SchemeMismatch,
    BadTimeOrder,
)
