"""Exception types raised by fracflow."""


class FracflowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FracflowError, ValueError):
    """Invalid parameters, violated hypothesis gates or malformed run configs."""


class DomainError(FracflowError, ValueError):
    """A nonlinearity was queried outside the range where it is defined."""


class NumericalError(FracflowError, RuntimeError):
    """An iterative solver failed to converge.

    ``details`` carries whatever diagnostics the solver had at the point of
    failure (last residual, bracket, iteration count, ...).
    """

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class EvolutionError(NumericalError):
    """A time step failed; ``trajectory`` holds everything computed before it."""

    def __init__(self, message, step, trajectory=None, **details):
        super().__init__(message, step=step, **details)
        self.step = step
        self.trajectory = trajectory


class GateError(ConfigurationError):
    """A hypothesis of a certified bound is violated; the bound is not claimed."""

    def __init__(self, message, inequality):
        super().__init__(message)
        self.inequality = inequality
