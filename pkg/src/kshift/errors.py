"""Exception types shared across the package."""


class KShiftError(Exception):
    """Base class for all package-specific errors."""


class ContractError(KShiftError, ValueError):
    """An argument violates a documented precondition (shape, range, structure)."""


class InvalidInputError(KShiftError, ValueError):
    """Input data is malformed (non-finite values, out-of-range HU, ...)."""


class NumericalError(KShiftError, ArithmeticError):
    """A numerical routine could not proceed (e.g. covariance not PSD after jitter)."""


class UnsupportedModeError(KShiftError, ValueError):
    """An operation was requested that the configured mode does not support."""


class FormatError(KShiftError, ValueError):
    """A serialized artifact (volume, checkpoint) does not match its format."""


class ConfigError(KShiftError, ValueError):
    """A configuration object is inconsistent or incomplete for the requested run."""


class TrainingDivergedError(KShiftError, RuntimeError):
    """Training aborted because a loss became non-finite."""
