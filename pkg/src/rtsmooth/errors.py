"""Exception types raised across the package."""


class RtSmoothError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RtSmoothError, ValueError):
    pass


class DegenerateDistributionError(RtSmoothError, ValueError):
    pass


class EmptySampleError(RtSmoothError, ValueError):
    pass


class InvalidStateError(RtSmoothError, ValueError):
    """A density was evaluated at a state outside its support."""


class DegenerateApproximationError(RtSmoothError, ValueError):
    pass


class AlignmentError(RtSmoothError, ValueError):
    pass


class ValidationError(RtSmoothError, ValueError):
    """Malformed input data (e.g. a case CSV with gaps)."""


class ConfigError(RtSmoothError, ValueError):
    pass


class InitializationError(RtSmoothError, RuntimeError):
    """Every sampler initialization attempt produced a non-finite density."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
