"""Exception types shared across the package."""


class DegeneratePoseError(ValueError):
    """Camera forward axis is parallel to world-up; no look-at frame exists."""


class SingularMatrixError(ValueError):
    """A transform matrix is singular (or numerically indistinguishable from it)."""


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite loss value."""
