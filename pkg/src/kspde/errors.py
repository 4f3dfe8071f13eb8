"""Exception hierarchy shared by every kspde module."""


class KspdeError(Exception):
    """Base class for all errors raised by kspde."""


class InvalidExponentError(KspdeError, ValueError):
    pass


class InvalidParameterError(KspdeError, ValueError):
    pass


class ConfigurationError(KspdeError, ValueError):
    pass


class GridMismatchError(KspdeError, ValueError):
    pass


class NotPSDError(KspdeError, ValueError):
    pass


class DimensionError(KspdeError, ValueError):
    pass


class NonFiniteFieldError(KspdeError, FloatingPointError):
    pass


class BlowUpError(KspdeError, FloatingPointError):
    """Raised when a time step produces non-finite or exploding values."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class LinearSolveError(KspdeError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class XiRangeError(KspdeError, ValueError):
    """Solution values fall outside the velocity grid; rebuild it wider."""


class CFLError(KspdeError, ValueError):
    pass
