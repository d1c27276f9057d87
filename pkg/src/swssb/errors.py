"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Requested system size exceeds what a dense routine can hold."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IncompatibleSupportError(ValueError):
    """KL divergence is infinite: q has an empty bin where p does not."""
