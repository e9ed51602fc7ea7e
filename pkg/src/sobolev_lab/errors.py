"""Exception hierarchy shared by all modules."""


class SobolevLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SobolevLabError, ValueError):
    """Geometry does not fit: balls leaving the grid, empty regions, bad masks."""


class ResolutionError(DomainError):
    """A length scale is too small for the lattice to resolve."""


class PreconditionError(SobolevLabError):
    """A precondition checked at runtime does not hold (e.g. an unconverged representative)."""


class NumericError(SobolevLabError, ArithmeticError):
    """An iterative or quadrature procedure failed to converge.

    ``best`` carries the best iterate found, when there is one.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class UnknownFunctionError(SobolevLabError, KeyError):
    """Corpus lookup miss."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown corpus id"
