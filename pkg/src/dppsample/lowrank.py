"""Finite-rank approximate sampling with inducing-point and trig bases.

A basis carries features phi_1..phi_F, a weight prior covariance, and an
observation noise. Conditioning n points costs O((F + n) F^2) through a
whitened QR factorization; the posterior quadratic form is evaluated in
factored form so it can never go negative. The approximate sampler reuses
the exact chain's bisection machinery with a CDF built from pairwise
feature product integrals.
"""

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import cholesky, qr, solve_triangular

from .errors import BasisConditioningError, DegenerateDensityError
from .kernels import KernelFamily, cross_integral_1d, kernel_eval, kernel_eval_1d
from .sampler import BISECT_EPS, MASS_FLOOR, PointSet, invert_cdf

_CODE_COS = 0
_CODE_SIN = 1
_BRANCH_EPS = 1e-12


class BasisKind(Enum):
    NYSTROM = "nystrom"
    SPECTRAL = "spectral"


@dataclass
class FeatureBasis:
    """Finite-rank expansion k(x, y) ~ phi(x)^T Sigma phi(y).

    chol_prec is the upper-triangular U with Sigma^{-1} = U^T U; keeping
    the factor (rather than Sigma or its inverse) is what the whitened
    posterior solve consumes directly.
    """

    kind: BasisKind
    rank: int
    spec: object
    noise: float
    chol_prec: np.ndarray
    inducing: np.ndarray = None          # Nystrom only, (F, D)
    freqs: np.ndarray = None             # spectral only, (F, D)
    codes: np.ndarray = None             # spectral only, (F, D) cos/sin
    weights: np.ndarray = None           # spectral only, diag of Sigma
    extra: dict = field(default_factory=dict)

    @property
    def weight_cov(self):
        """Materialized Sigma = U^{-1} U^{-T}."""
        Uinv = solve_triangular(self.chol_prec, np.eye(self.rank), lower=False)
        return Uinv @ Uinv.T

    # -- feature evaluation -------------------------------------------

    def phi_1d(self, d, x):
        """Per-dimension feature factors, shape (F, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind is BasisKind.NYSTROM:
            return kernel_eval_1d(
                self.spec, d, self.inducing[:, d][:, None], x[None, :]
            )
        w = self.freqs[:, d][:, None] * x[None, :]
        out = np.where(
            self.codes[:, d][:, None] == _CODE_COS, np.cos(w), np.sin(w)
        )
        return out

    def phi(self, X):
        """Feature matrix, shape (F, n) for n row-points."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] == 0:
            return np.zeros((self.rank, 0))
        out = np.ones((self.rank, X.shape[0]))
        for d in range(self.spec.dim):
            out *= self.phi_1d(d, X[:, d])
        return out

    def kernel(self, A, B):
        """Induced finite-rank kernel; usable as a DppState kernel_fn."""
        pa = self.phi(A)
        pb = self.phi(B)
        y = solve_triangular(self.chol_prec, pa, trans="T", lower=False)
        z = solve_triangular(self.chol_prec, pb, trans="T", lower=False)
        return y.T @ z

    # -- per-dimension pair integrals ----------------------------------

    def pair_integral_1d(self, d, t):
        """(F, F) matrix of int_0^t phi_f^{(d)} phi_g^{(d)} dx."""
        if self.kind is BasisKind.NYSTROM:
            z = self.inducing[:, d]
            return cross_integral_1d(
                self.spec, d, z[:, None], z[None, :], t
            )
        w = self.freqs[:, d]
        c = self.codes[:, d]
        wa, wb = w[:, None], w[None, :]
        ca, cb = c[:, None], c[None, :]
        return trig_product_integral(
            wa, wb, t,
            kind_a=np.where(ca == _CODE_COS, "cos", "sin"),
            kind_b=np.where(cb == _CODE_COS, "cos", "sin"),
        )


def _term(delta, t):
    # int cos(delta x) over [0, t] halved: sin(delta t) / (2 delta)
    delta = np.asarray(delta, dtype=float)
    small = np.abs(delta) < _BRANCH_EPS
    safe = np.where(small, 1.0, delta)
    return np.where(small, t / 2.0, np.sin(safe * t) / (2.0 * safe))


def _anti(delta, t):
    # int sin(delta x) over [0, t] halved: (1 - cos(delta t)) / (2 delta)
    delta = np.asarray(delta, dtype=float)
    small = np.abs(delta) < _BRANCH_EPS
    safe = np.where(small, 1.0, delta)
    return np.where(small, 0.0, (1.0 - np.cos(safe * t)) / (2.0 * safe))


def trig_product_integral(freq_a, freq_b, t, kind_a="cos", kind_b="cos"):
    """int_0^t trig(a x) trig(b x) dx with explicit equal-frequency branch.

    kinds are "cos" or "sin" (scalars or arrays). The branch switch sits
    at |a - b| < 1e-12; both branches agree to ~(a-b)^2 there, so the
    result is continuous through the switch.
    """
    wa = np.asarray(freq_a, dtype=float)
    wb = np.asarray(freq_b, dtype=float)
    ka = np.asarray(kind_a)
    kb = np.asarray(kind_b)
    cc = (ka == "cos") & (kb == "cos")
    ss = (ka == "sin") & (kb == "sin")
    cs = (ka == "cos") & (kb == "sin")
    out = np.where(
        cc,
        _term(wa - wb, t) + _term(wa + wb, t),
        np.where(
            ss,
            _term(wa - wb, t) - _term(wa + wb, t),
            np.where(
                cs,
                _anti(wa + wb, t) + _anti(wb - wa, t),
                _anti(wa + wb, t) + _anti(wa - wb, t),
            ),
        ),
    )
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# constructors

def nystrom_basis(spec, F, inducing=None, noise=1e-6, basis_jitter=1e-12):
    """Inducing-point basis: phi_f(x) = k(x, z_f), Sigma = K_ZZ^{-1}.

    Default inducing points are cell midpoints of an equispaced grid
    (first F grid points in lexicographic order when F is not a perfect
    D-th power).
    """
    if F < 1:
        raise ValueError("rank F must be >= 1")
    D = spec.dim
    if inducing is None:
        g = int(np.ceil(F ** (1.0 / D)))
        axes = [(np.arange(g) + 0.5) / g for _ in range(D)]
        Z = np.array(list(itertools.product(*axes)))[:F]
    else:
        Z = np.atleast_2d(np.asarray(inducing, dtype=float))
        if Z.shape != (F, D):
            raise ValueError(f"inducing points must be ({F}, {D}), got {Z.shape}")
    Kzz = np.asarray(kernel_eval(spec, Z[:, None, :], Z[None, :, :]))
    Kzz = Kzz.reshape(F, F) + basis_jitter * np.eye(F)
    try:
        U = cholesky(Kzz, lower=False)
    except np.linalg.LinAlgError as e:
        raise BasisConditioningError(
            f"inducing-point covariance of rank {F} is singular at jitter "
            f"{basis_jitter:.0e}"
        ) from e
    return FeatureBasis(
        kind=BasisKind.NYSTROM, rank=F, spec=spec, noise=float(noise),
        chol_prec=U, inducing=Z,
        extra={"basis_jitter": basis_jitter},
    )


def spectral_basis(spec, F, noise=1e-6):
    """Trig basis on the unit cube with squared-exponential weights.

    Per dimension the 1D functions are 1, cos(pi m x), sin(pi m x) for
    m = 1, 2, ...; multivariate features are products, enumerated lowest
    total squared frequency first. Weights take the kernel's spectral
    density at the feature's frequency vector (halved for the constant).
    Only the squared-exponential family has this density/weight pairing,
    so other families are rejected.
    """
    if F < 1:
        raise ValueError("rank F must be >= 1")
    if spec.family is not KernelFamily.SQUARE_EXPONENTIAL:
        raise ValueError("spectral basis requires the squared-exponential family")
    D = spec.dim
    if (F + 1) ** D > 5_000_000:
        raise ValueError(f"rank {F} too large to enumerate in D={D}")

    def level(o):
        return (o + 1) // 2

    candidates = sorted(
        itertools.product(range(F + 1), repeat=D),
        key=lambda tup: (sum(level(o) ** 2 for o in tup), tup),
    )[:F]

    freqs = np.empty((F, D))
    codes = np.empty((F, D), dtype=int)
    weights = np.ones(F)
    for f, tup in enumerate(candidates):
        for d, o in enumerate(tup):
            m = level(o)
            lam = spec.lengthscales[d]
            freqs[f, d] = np.pi * m
            codes[f, d] = _CODE_SIN if (o > 0 and o % 2 == 0) else _CODE_COS
            s = np.sqrt(2.0 * np.pi) * lam * np.exp(-0.5 * lam**2 * (np.pi * m) ** 2)
            weights[f] *= s / 2.0 if m == 0 else s
    U = np.diag(1.0 / np.sqrt(weights))
    return FeatureBasis(
        kind=BasisKind.SPECTRAL, rank=F, spec=spec, noise=float(noise),
        chol_prec=U, freqs=freqs, codes=codes, weights=weights,
    )


# ---------------------------------------------------------------------------
# posterior

def _posterior_half(basis, points):
    """W with posterior weight covariance B = W W^T.

    Whitened QR of the stacked system: the identity block anchors the
    prior, the scaled feature block carries the observations. Direct
    normal-equation factorizations square the conditioning and fail here.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float)) if np.size(points) else \
        np.zeros((0, basis.spec.dim))
    F = basis.rank
    if len(pts) and basis.noise <= 0:
        raise ValueError("conditioning on points requires positive noise")
    Phi = basis.phi(pts)
    Psi = solve_triangular(basis.chol_prec, Phi, trans="T", lower=False)
    C = np.vstack([np.eye(F), Psi.T / np.sqrt(basis.noise)]) if len(pts) \
        else np.eye(F)
    R = qr(C, mode="economic")[1]
    diag = np.abs(np.diag(R))
    if not np.all(np.isfinite(R)) or np.any(diag < 1e-154):
        raise BasisConditioningError(
            f"posterior system of rank {F} with {len(pts)} points is not "
            f"positive definite at working precision"
        )
    W = solve_triangular(
        basis.chol_prec,
        solve_triangular(R, np.eye(F), lower=False),
        lower=False,
    )
    return W, R


def approx_variance_at(basis, points, x):
    """Posterior variance of the finite-rank model at x (or rows of x).

    Evaluated as a squared norm through the whitened factors, so the
    result is nonnegative by construction. Cost O((F + n) F^2) to absorb
    the n conditioned points plus O(F^2) per query.
    """
    _, R = _posterior_half(basis, points)
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    ph = basis.phi(X)
    y = solve_triangular(basis.chol_prec, ph, trans="T", lower=False)
    w = solve_triangular(R, y, trans="T", lower=False)
    v = np.sum(w * w, axis=0)
    return float(v[0]) if single else v


class ApproxConditionalCdf:
    """Marginal CDF of the finite-rank variance for one dimension."""

    def __init__(self, basis, coeffs, d):
        self._basis = basis
        self._coeffs = coeffs
        self.dim_index = d
        self.total_mass = float(self.evaluate(1.0))
        if self.total_mass <= MASS_FLOOR:
            raise DegenerateDensityError(
                f"approximate conditional mass {self.total_mass:.3e} is at "
                f"the floor {MASS_FLOOR:.0e}"
            )

    def evaluate(self, t):
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        tt = np.atleast_1d(t_arr)
        out = np.empty_like(tt)
        for i, ti in enumerate(tt):
            out[i] = np.sum(
                self._coeffs * self._basis.pair_integral_1d(self.dim_index, ti)
            )
        return float(out[0]) if scalar else out


def approx_build_cdf(basis, points, prefix, d):
    """Assemble the approximate conditional CDF for dimension d."""
    D = basis.spec.dim
    if not 0 <= d < D:
        raise ValueError(f"dimension index {d} out of range for D={D}")
    prefix = np.asarray(prefix, dtype=float).reshape(-1)
    if prefix.shape != (d,):
        raise ValueError(f"prefix must have length d={d}, got {prefix.shape}")
    W, _ = _posterior_half(basis, points)
    B = W @ W.T
    coeffs = B
    for r in range(d):
        pr = basis.phi_1d(r, prefix[r]).ravel()
        coeffs = coeffs * np.outer(pr, pr)
    for ell in range(d + 1, D):
        coeffs = coeffs * basis.pair_integral_1d(ell, 1.0)
    return ApproxConditionalCdf(basis, coeffs, d)


def approx_draw(basis, spec, n, seed, warm_start=None, eps=BISECT_EPS):
    """Draw n points from the finite-rank model's chain.

    Same bisection machinery and variate schedule as the exact sampler:
    one uniform per (sample, dimension) in lexicographic order, so a
    shared seed couples the two chains. warm_start points (rows, already
    in the unit cube) are taken as the first samples verbatim while still
    consuming their variates, which keeps the remaining stream aligned
    with an exact run that drew them.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if basis.spec is not spec and basis.spec != spec:
        raise ValueError("basis was built for a different kernel spec")
    warm = (
        np.atleast_2d(np.asarray(warm_start, dtype=float))
        if warm_start is not None and np.size(warm_start)
        else np.zeros((0, spec.dim))
    )
    if len(warm) > n:
        raise ValueError(f"warm start has {len(warm)} points but n={n}")
    rng = np.random.default_rng(seed)
    pts = np.empty((n, spec.dim))
    for i in range(n):
        if i < len(warm):
            rng.random(spec.dim)  # keep the stream aligned
            pts[i] = warm[i]
            continue
        x = np.empty(spec.dim)
        for d in range(spec.dim):
            cdf = approx_build_cdf(basis, pts[:i], x[:d], d)
            u = cdf.total_mass * rng.random()
            x[d] = invert_cdf(cdf, u, eps=eps)
        pts[i] = x
    return PointSet(
        points=pts, spec=spec, seed=seed, method=basis.kind.value,
        bisection_eps=eps, rank=basis.rank, noise=basis.noise,
        extra={"warm_start": len(warm)},
    )


# ---------------------------------------------------------------------------
# comparison helpers

def expansion_sup_error(basis, grid_n=None):
    """sup |k - k_hat| over a tensor grid of point pairs."""
    spec = basis.spec
    D = spec.dim
    g = grid_n or max(8, int(round(512 ** (1.0 / D))))
    axes = [np.linspace(0.0, 1.0, g) for _ in range(D)]
    X = np.array(list(itertools.product(*axes)))
    exact = np.asarray(kernel_eval(spec, X[:, None, :], X[None, :, :]))
    exact = exact.reshape(len(X), len(X))
    approx = basis.kernel(X, X)
    return float(np.max(np.abs(exact - approx)))


def normalized_cdf_deviation(spec, points, basis, grid=None, jitter=1e-10):
    """sup_t |P_hat(t)/P_hat(1) - P(t)/P(1)| for the next-point CDF (1D).

    points is the conditioning set; the exact side uses the closed-form
    chain CDF (at the given jitter), the approximate side the basis CDF,
    both normalized to unit total mass.
    """
    from .sampler import build_cdf
    from .state import DppState

    if spec.dim != 1:
        raise ValueError("deviation comparison is defined for D = 1")
    grid = np.linspace(0.0, 1.0, 513) if grid is None else np.asarray(grid)
    st = DppState(spec, jitter=jitter)
    for p in np.atleast_2d(points):
        st.push_point(p)
    exact = build_cdf(st, spec, [], 0)
    approx = approx_build_cdf(basis, np.atleast_2d(points), [], 0)
    pe = exact.evaluate(grid) / exact.total_mass
    pa = approx.evaluate(grid) / approx.total_mass
    return float(np.max(np.abs(pe - pa)))
