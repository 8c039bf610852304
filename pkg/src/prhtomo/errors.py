"""Exception types mapped to CLI exit codes."""


class PrhtError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(PrhtError):
    """Invalid or unknown configuration (exit code 2)."""

    exit_code = 2


class NumericalInvariantError(PrhtError):
    """A numerical invariant failed: truncation leakage, Wronskian drift,
    non-positive-definite covariance, etc. (exit code 3)."""

    exit_code = 3


class InsufficientStatisticsError(PrhtError):
    """Conditioning killed the ensemble or too few records (exit code 4)."""

    exit_code = 4
