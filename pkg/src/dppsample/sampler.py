"""Exact chain sampling: per-dimension conditional CDFs, bisection, draws.

The i-th point is drawn dimension by dimension. For dimension d the
marginal cumulative density given the conditioned points and the already
fixed leading coordinates has the closed form

    P(t) = t - sum_ab c_ab * crossint_d(x_ad, x_bd, t)

where c_ab collects the inverse-Gram entry, the pair's cross-distance
factor, the leading-coordinate kernel products, and the full-interval
masses of the trailing dimensions. One uniform variate is consumed per
(sample, dimension) pair, in lexicographic order, from a PCG64 generator
seeded once per draw call.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import DegenerateDensityError, DppError
from .kernels import KernelFamily, KernelSpec, cross_integral_1d, kernel_eval_1d
from .state import DppState

MASS_FLOOR = 1e-14
BISECT_EPS = 1e-12
BISECT_MAX_ITER = 60

_SQRT_PI = np.sqrt(np.pi)


@dataclass
class PointSet:
    """Ordered samples in unit-cube coordinates plus reproduction metadata."""

    points: np.ndarray
    spec: KernelSpec = None
    seed: int = None
    method: str = "exact"
    bisection_eps: float = BISECT_EPS
    jitter: float = None
    rank: int = None
    noise: float = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.size == 0:
            self.points = self.points.reshape(0, self.points.shape[1] or 1)

    def __len__(self):
        return len(self.points)


class ConditionalCdf:
    """Evaluable marginal CDF for one dimension of the next point.

    All pair coefficients are precomputed at construction, so each
    evaluation is one vectorized pass over the pairs. P(0) = 0 exactly,
    P is nondecreasing, total_mass = P(1) > 0.
    """

    def __init__(self, dim_index, lam, family, coeffs, pair_a, pair_b):
        self.dim_index = dim_index
        self._lam = lam
        self._family = family
        self._c = coeffs.ravel() if coeffs is not None else None
        if self._c is not None:
            if family is KernelFamily.SQUARE_EXPONENTIAL:
                self._mid = 0.5 * (pair_a + pair_b).ravel()
                self._off = erf(self._mid / lam)
            else:
                self._lo = np.minimum(pair_a, pair_b).ravel()
                self._hi = np.maximum(pair_a, pair_b).ravel()
        self.total_mass = float(self.evaluate(1.0))
        if self.total_mass <= MASS_FLOOR:
            raise DegenerateDensityError(
                f"total conditional mass {self.total_mass:.3e} is at the "
                f"floor {MASS_FLOOR:.0e}; the conditioned points saturate "
                f"the domain at this lengthscale"
            )

    def evaluate(self, t):
        """P(t) for scalar t or an array of t values."""
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tt = np.atleast_1d(t_arr)
        if self._c is None:
            out = tt.copy()
        else:
            out = np.empty_like(tt)
            p = self._c.size
            block = max(1, int(2_000_000 / max(p, 1)))
            for s in range(0, tt.size, block):
                tb = tt[s : s + block, None]
                if self._family is KernelFamily.SQUARE_EXPONENTIAL:
                    terms = erf((tb - self._mid) / self._lam) + self._off
                else:
                    lam, lo, hi = self._lam, self._lo, self._hi
                    t1 = np.minimum(tb, lo)
                    below = 0.5 * lam * (
                        np.exp((2.0 * t1 - lo - hi) / lam)
                        - np.exp(-(lo + hi) / lam)
                    )
                    mid = np.exp((lo - hi) / lam) * np.maximum(
                        0.0, np.minimum(tb, hi) - lo
                    )
                    t3 = np.maximum(tb, hi)
                    above = 0.5 * lam * (
                        np.exp((lo - hi) / lam)
                        - np.exp((lo + hi - 2.0 * t3) / lam)
                    )
                    terms = below + mid + above
                out[s : s + block] = tt[s : s + block] - terms @ self._c
        return float(out[0]) if scalar else out


def build_cdf(state, spec, prefix, d):
    """Assemble the closed-form conditional CDF for dimension d.

    prefix carries the d leading coordinates of the point being drawn.
    Raises DegenerateDensityError when the remaining mass underflows.
    """
    if state.kernel_fn is not None:
        raise ValueError(
            "closed-form CDF needs the factorized product kernel; this "
            "state carries a custom covariance"
        )
    D = spec.dim
    if not 0 <= d < D:
        raise ValueError(f"dimension index {d} out of range for D={D}")
    prefix = np.asarray(prefix, dtype=float).reshape(-1)
    if prefix.shape != (d,):
        raise ValueError(f"prefix must have length d={d}, got {prefix.shape}")
    if prefix.size and (prefix.min() < 0.0 or prefix.max() > 1.0):
        raise ValueError(f"prefix {prefix} outside the unit interval")

    n = len(state)
    lam_d = spec.lengthscales[d]
    if n == 0:
        return ConditionalCdf(d, lam_d, spec.family, None, None, None)

    X = state.points
    if spec.family is KernelFamily.SQUARE_EXPONENTIAL:
        # cross_matrix already carries the all-dimension pair factor;
        # leading dims contribute Gaussians in (prefix - midpoint),
        # trailing dims their full-interval erf masses.
        coeffs = state.inv_gram * state.cross_matrix * (_SQRT_PI * lam_d / 2.0)
        for r in range(d):
            lam_r = spec.lengthscales[r]
            mid_r = state.midpoints[:, :, r]
            coeffs = coeffs * np.exp(-((prefix[r] - mid_r) ** 2) / lam_r**2)
        for ell in range(d + 1, D):
            lam_l = spec.lengthscales[ell]
            mid_l = state.midpoints[:, :, ell]
            coeffs = coeffs * (
                (_SQRT_PI * lam_l / 2.0)
                * (erf((1.0 - mid_l) / lam_l) + erf(mid_l / lam_l))
            )
        pair_a = np.broadcast_to(X[:, d][:, None], (n, n))
        pair_b = np.broadcast_to(X[:, d][None, :], (n, n))
        return ConditionalCdf(d, lam_d, spec.family, coeffs, pair_a, pair_b)

    coeffs = state.inv_gram.copy()
    for r in range(d):
        kr = kernel_eval_1d(spec, r, prefix[r], X[:, r])
        coeffs = coeffs * np.outer(kr, kr)
    for ell in range(d + 1, D):
        coeffs = coeffs * cross_integral_1d(
            spec, ell, X[:, ell][:, None], X[:, ell][None, :], 1.0
        )
    pair_a = np.broadcast_to(X[:, d][:, None], (n, n))
    pair_b = np.broadcast_to(X[:, d][None, :], (n, n))
    return ConditionalCdf(d, lam_d, spec.family, coeffs, pair_a, pair_b)


def invert_cdf(cdf, u, eps=BISECT_EPS, max_iter=BISECT_MAX_ITER):
    """Bisection inverse of a conditional CDF.

    u may be a scalar in [0, total_mass] or an array of such values; the
    comparison schedule is identical either way, so batched and scalar
    inversions agree bitwise.
    """
    u_arr = np.asarray(u, dtype=float)
    scalar = u_arr.ndim == 0
    uu = np.atleast_1d(u_arr)
    if np.any(uu < 0.0) or np.any(uu > cdf.total_mass):
        raise ValueError(
            f"u outside [0, {cdf.total_mass!r}]"
        )
    lo = np.zeros_like(uu)
    hi = np.ones_like(uu)
    width = 1.0
    for _ in range(max_iter):
        if width <= eps:
            break
        mu = 0.5 * (lo + hi)
        go_right = cdf.evaluate(mu) < uu
        lo = np.where(go_right, mu, lo)
        hi = np.where(go_right, hi, mu)
        width *= 0.5
    out = 0.5 * (lo + hi)
    return float(out[0]) if scalar else out


def draw(spec, n, seed, jitter=1e-10, eps=BISECT_EPS):
    """Draw n points of the repulsive process exactly.

    Deterministic per (spec, n, seed). Near-singular and degenerate-mass
    failures are re-raised with the offending sample index attached.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    state = DppState(spec, jitter=jitter)
    pts = np.empty((n, spec.dim))
    for i in range(n):
        x = np.empty(spec.dim)
        for d in range(spec.dim):
            try:
                cdf = build_cdf(state, spec, x[:d], d)
                u = cdf.total_mass * rng.random()
                x[d] = invert_cdf(cdf, u, eps=eps)
            except DppError as e:
                raise type(e)(f"sample {i}, dimension {d}: {e}") from e
        try:
            state.push_point(x)
        except DppError as e:
            raise type(e)(f"sample {i}: {e}") from e
        pts[i] = x
    return PointSet(
        points=pts, spec=spec, seed=seed, method="exact",
        bisection_eps=eps, jitter=jitter,
    )


def draw_uniform(dim, n, seed):
    """Baseline: n i.i.d. uniform points on the unit cube.

    Consumes variates in the same (sample, dimension) order as draw, so
    paired-seed comparisons share their streams.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, dim))
    return PointSet(points=pts.reshape(n, dim), seed=seed, method="uniform")
