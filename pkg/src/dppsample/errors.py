"""Exception types shared across the package."""


class DppError(Exception):
    """Base class for sampler-specific failures."""


class NearSingularError(DppError):
    """Gram matrix update or factorization hit a numerically singular pivot.

    Usually means a duplicate or near-duplicate point was pushed.
    """


class DegenerateDensityError(DppError):
    """Conditional density mass fell below the detection floor.

    The conditioned points have saturated the domain at the current
    lengthscale; drawing more points is meaningless.
    """


class BasisConditioningError(DppError):
    """Feature-basis system is not positive definite at working precision."""
