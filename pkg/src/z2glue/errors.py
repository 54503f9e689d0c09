"""Exception types shared across the package."""


class PrecisionError(ArithmeticError):
    """A quadrature or solve could not reach the requested accuracy."""


class ConvergenceError(RuntimeError):
    """An iterative method exhausted its budget.

    Parameters
    ----------
    message : str
    best_residual : float
        Smallest residual seen before giving up.
    """

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class GeometryError(ValueError):
    """A point lies where the requested geometric construction is undefined."""


class ContractionError(ValueError):
    """A perturbation is too large for the contraction-mapping solve."""
