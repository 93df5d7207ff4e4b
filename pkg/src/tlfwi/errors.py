"""Exception types shared across the package."""


class FWIError(Exception):
    """Base class for all package errors."""


class UnstableConfig(FWIError, ValueError):
    """Time step violates the explicit-scheme stability bound."""


class NonPositiveGamma(FWIError, ValueError):
    pass


class OutOfBounds(FWIError, IndexError):
    pass


class ShapeMismatch(FWIError, ValueError):
    pass


class MissingHistory(FWIError, ValueError):
    pass


class MissingForwardState(FWIError, RuntimeError):
    """backward() called without a preceding forward() in the same mode."""


class CheckpointMismatch(FWIError, ValueError):
    pass


class NormalizationMismatch(FWIError, ValueError):
    pass


class EmptyDomain(FWIError, ValueError):
    pass


class EmptyDataset(FWIError, ValueError):
    pass


class FormatError(FWIError, ValueError):
    """Bad magic number or truncated payload in one of the binary formats."""


class InverseCrime(FWIError, ValueError):
    """Observation grid coincides with the inversion grid."""


class ConfigError(FWIError, ValueError):
    """Malformed, unknown or out-of-range configuration entry."""
