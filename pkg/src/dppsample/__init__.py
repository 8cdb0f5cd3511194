"""Exact and approximate repulsive point sampling on box domains.

Points are drawn one at a time; each new point follows the conditional
density given by the posterior predictive variance of a Gaussian process
conditioned on the points so far, which makes the joint law determinantal.
Per-dimension marginal CDFs are closed-form for the supported kernels, so
sampling reduces to bisection inversions. A finite-rank path trades
exactness for linear per-sample cost, and a brute-force oracle module
cross-checks every closed form.
"""

from .errors import (
    BasisConditioningError,
    DegenerateDensityError,
    DppError,
    NearSingularError,
)
from .kernels import (
    KernelFamily,
    KernelSpec,
    box_to_unit,
    cross_integral_1d,
    diag_integral_1d,
    kernel_eval,
    kernel_eval_1d,
    unit_to_box,
)
from .lowrank import (
    BasisKind,
    FeatureBasis,
    approx_build_cdf,
    approx_draw,
    approx_variance_at,
    expansion_sup_error,
    normalized_cdf_deviation,
    nystrom_basis,
    spectral_basis,
    trig_product_integral,
)
from .sampler import (
    ConditionalCdf,
    PointSet,
    build_cdf,
    draw,
    draw_uniform,
    invert_cdf,
)
from .state import DppState

__version__ = "0.1.0"

__all__ = [
    "BasisConditioningError",
    "BasisKind",
    "ConditionalCdf",
    "DegenerateDensityError",
    "DppError",
    "DppState",
    "FeatureBasis",
    "KernelFamily",
    "KernelSpec",
    "NearSingularError",
    "PointSet",
    "approx_build_cdf",
    "approx_draw",
    "approx_variance_at",
    "box_to_unit",
    "build_cdf",
    "cross_integral_1d",
    "diag_integral_1d",
    "draw",
    "draw_uniform",
    "expansion_sup_error",
    "invert_cdf",
    "kernel_eval",
    "kernel_eval_1d",
    "normalized_cdf_deviation",
    "nystrom_basis",
    "spectral_basis",
    "trig_product_integral",
    "unit_to_box",
]
