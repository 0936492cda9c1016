"""Exception types shared across the package."""


class DscanError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DscanError):
    """Tensor shapes disagree with an operation's contract."""


class ConfigurationError(DscanError):
    """A configuration value is invalid or inconsistent."""


class InputError(DscanError):
    """User-supplied data violates a precondition."""


class UsageError(DscanError):
    """An API was called in an unsupported way."""


class DegenerateStatisticsError(DscanError):
    """Batch statistics cannot be estimated (too few elements)."""


class DegenerateClusterError(DscanError):
    """A cluster has zero total soft-assignment mass."""


class InfiniteDivergenceError(DscanError):
    """KL divergence is infinite (q == 0 where p > 0)."""


class TrainingDivergedError(DscanError):
    """Training produced a non-finite loss."""
