"""Exception types raised across qedlab."""


class QedLabError(Exception):
    """Base class for all library errors."""


class ConfigError(QedLabError, ValueError):
    """Invalid configuration or precondition violation on user input."""


class ShapeError(QedLabError):
    """The potential does not have the shape an operation requires (e.g. no barrier)."""


class NegativePrice(QedLabError, ArithmeticError):
    """A discrete microstructure step produced a negative price."""


class EmptySample(QedLabError):
    """No usable observations (e.g. every path absorbed before a window)."""


class NonIntegrable(QedLabError, ArithmeticError):
    """The first-passage quadrature integrand overflows or has no valid domain."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class DegenerateObservation(QedLabError, ValueError):
    """A path contains observations with zero transition variance."""


class NonConvergenceWarning(RuntimeWarning):
    """An optimizer hit its iteration cap; the best point so far is still returned."""
