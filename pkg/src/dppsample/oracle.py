"""Brute-force ground truth: quadrature, rejection sampling, determinants.

Everything here recomputes kernel values and posterior variances from
scratch with dense linear algebra. No code is shared with the closed-form
sampling path, so a bug there cannot certify itself here.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .kernels import KernelFamily

_GRID_FOR_BOUND = {1: 4001, 2: 101, 3: 41}


class QuadMethod(Enum):
    COMPOSITE_SIMPSON = "composite"
    ADAPTIVE_SIMPSON = "adaptive"


@dataclass(frozen=True)
class QuadratureRule:
    """How to integrate the variance function.

    panels applies to the composite method (must be even, per dimension);
    tol to the adaptive method. nesting fixes the order trailing dimensions
    are expanded in (None = natural order).
    """

    method: QuadMethod = QuadMethod.COMPOSITE_SIMPSON
    panels: int = 512
    tol: float = 1e-10
    nesting: tuple = None

    def __post_init__(self):
        if self.method is QuadMethod.COMPOSITE_SIMPSON and self.panels % 2:
            raise ValueError("composite Simpson needs an even panel count")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")


# ---------------------------------------------------------------------------
# independent kernel evaluation

def _kmat(spec, A, B):
    """Kernel matrix between row sets, computed from the definition."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    out = np.ones((A.shape[0], B.shape[0]))
    for d in range(spec.dim):
        lam = spec.lengthscales[d]
        diff = A[:, d][:, None] - B[None, :, d]
        if spec.family is KernelFamily.SQUARE_EXPONENTIAL:
            out *= np.exp(-0.5 * diff**2 / lam**2)
        else:
            out *= np.exp(-np.abs(diff) / lam)
    return out


def _points_of(state):
    pts = getattr(state, "points", state)
    pts = np.asarray(pts, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 1)
    return np.atleast_2d(pts)


class _DenseVariance:
    """Posterior variance of the product-kernel GP by direct dense solve."""

    def __init__(self, spec, points, jitter=0.0):
        self.spec = spec
        self.points = _points_of(points)
        n = len(self.points)
        if n:
            K = _kmat(spec, self.points, self.points) + jitter * np.eye(n)
            self.inv = np.linalg.inv(K)
        else:
            self.inv = None

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.inv is None:
            return np.ones(X.shape[0])
        kv = _kmat(self.spec, X, self.points)
        return 1.0 - np.einsum("ia,ab,ib->i", kv, self.inv, kv)


# ---------------------------------------------------------------------------
# quadrature

def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Classic recursive Simpson with Richardson acceptance test."""

    def simp(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def rec(x0, x2, f0, f1, f2, whole, eps, depth):
        x1 = 0.5 * (x0 + x2)
        lm, rm = 0.5 * (x0 + x1), 0.5 * (x1 + x2)
        flm, frm = f(lm), f(rm)
        left = simp(x0, x1, f0, flm, f1)
        right = simp(x1, x2, f1, frm, f2)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return rec(x0, x1, f0, flm, f1, left, eps / 2.0, depth + 1) + rec(
            x1, x2, f1, frm, f2, right, eps / 2.0, depth + 1
        )

    if b <= a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    return rec(a, b, fa, fm, fb, simp(a, b, fa, fm, fb), tol, 0)


def _simpson_nodes(a, b, panels, kinks=()):
    """Composite Simpson nodes/weights on [a, b], split at interior kinks.

    The integrand of the exponential family has |x - x_a| creases; placing
    segment boundaries there restores the h^4 rate.
    """
    if b <= a:
        return np.array([a]), np.array([0.0])
    cuts = sorted({a, b} | {k for k in kinks if a < k < b})
    nodes, weights = [], []
    # panels are allotted by segment length so the step size stays uniform;
    # an even split starves the longest segment when kinks cluster
    h_target = (b - a) / panels
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        seg_panels = max(2, 2 * int(np.ceil((hi - lo) / h_target / 2.0)))
        x = np.linspace(lo, hi, seg_panels + 1)
        h = (hi - lo) / seg_panels
        w = np.ones(seg_panels + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def quad_cdf(state, spec, prefix, d, t, rule=None, jitter=0.0):
    """Numerically integrate the conditional variance.

    Dimension d runs over [0, t], trailing dimensions over [0, 1], leading
    dimensions are pinned at the prefix values. The model (including
    jitter) must match whatever the closed form under test used; the code
    path is what stays independent.
    """
    D = spec.dim
    if D > 3:
        raise ValueError("quadrature oracle is capped at D <= 3")
    prefix = [float(p) for p in (prefix if prefix is not None else [])]
    if len(prefix) != d:
        raise ValueError(f"prefix length {len(prefix)} does not match d={d}")
    rule = rule or QuadratureRule()
    pts = _points_of(state)
    var = _DenseVariance(spec, pts, jitter=jitter)
    exp_family = spec.family is KernelFamily.EXPONENTIAL

    if rule.method is QuadMethod.ADAPTIVE_SIMPSON:
        if D != 1:
            raise ValueError("adaptive method supports D = 1 only")
        return adaptive_simpson(
            lambda x: float(var([[x]])[0]), 0.0, float(t), tol=rule.tol
        )

    axes = []
    for dim_i in range(d, D):
        upper = float(t) if dim_i == d else 1.0
        kinks = pts[:, dim_i] if (exp_family and len(pts)) else ()
        axes.append(_simpson_nodes(0.0, upper, rule.panels, kinks))

    mesh = np.meshgrid(*[ax[0] for ax in axes], indexing="ij")
    wmesh = np.meshgrid(*[ax[1] for ax in axes], indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
    X = np.empty((len(nodes), D))
    X[:, :d] = prefix
    X[:, d:] = nodes

    total = 0.0
    for start in range(0, len(X), 200_000):
        block = slice(start, start + 200_000)
        total += float(np.dot(weights[block], var(X[block])))
    return total


# ---------------------------------------------------------------------------
# rejection sampling

def rejection_draw(state, spec, n_trials, seed, jitter=0.0):
    """Rejection-sample the conditional density with a uniform proposal.

    Envelope is the grid maximum of the variance times 1.001. Returns
    (accepted points, acceptance rate). RNG order: all proposal
    coordinates first, then one acceptance variate per trial.
    """
    from .errors import DegenerateDensityError

    D = spec.dim
    if D > 3:
        raise ValueError("rejection oracle is capped at D <= 3")
    pts = _points_of(state)
    var = _DenseVariance(spec, pts, jitter=jitter)

    g = np.linspace(0.0, 1.0, _GRID_FOR_BOUND[D])
    mesh = np.meshgrid(*([g] * D), indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    bound = 1.001 * float(np.max(var(grid)))
    if bound <= 0:
        raise DegenerateDensityError("variance is zero on the bound grid")

    rng = np.random.default_rng(seed)
    proposals = rng.random((n_trials, D))
    acc_u = rng.random(n_trials)
    accept = acc_u * bound < var(proposals)
    accepted = proposals[accept]
    if len(accepted) == 0:
        raise DegenerateDensityError(
            f"0 of {n_trials} proposals accepted; bound {bound:.3e}"
        )
    return accepted, len(accepted) / n_trials


def _separated_uniforms(rng, n, D, min_sep, max_tries=200):
    """Uniform points thinned to a minimum pairwise separation.

    Dart throwing: candidates violating the separation against already
    kept points are discarded. Keeps Gram matrices within float64
    conditioning. Whole-set redrawing would almost never terminate at
    n ~ 200. Tops up with raw uniforms if the attempt budget runs out.
    """
    kept = np.empty((0, D))
    budget = max_tries * max(n, 1)
    while len(kept) < n and budget > 0:
        budget -= 1
        cand = rng.random(D)
        if len(kept) == 0 or np.min(
            np.sqrt(np.sum((kept - cand) ** 2, axis=1))
        ) >= min_sep:
            kept = np.vstack([kept, cand])
    while len(kept) < n:
        kept = np.vstack([kept, rng.random(D)])
    return kept


# ---------------------------------------------------------------------------
# determinant identity

@dataclass
class JointDensityCheck:
    chain: float
    determinant: float
    rel_gap: float
    diagnosis: str = ""


def joint_density_check(points, spec):
    """Compare the telescoped conditional variances with det of the Gram.

    Both sides are accumulated in logs; jitter stays off, so coincident
    points are reported as a diagnosis instead of a number.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    K = _kmat(spec, pts, pts)
    sign, logdet = np.linalg.slogdet(K)
    log_chain = 0.0
    ok = True
    for i in range(n):
        if i == 0:
            v = 1.0
        else:
            Ki = K[:i, :i]
            kv = K[:i, i]
            try:
                v = 1.0 - float(kv @ np.linalg.solve(Ki, kv))
            except np.linalg.LinAlgError:
                v = -1.0
        if v <= 0.0:
            ok = False
            break
        log_chain += math.log(v)
    if not ok or sign <= 0:
        return JointDensityCheck(
            chain=float("nan"),
            determinant=float("nan"),
            rel_gap=float("nan"),
            diagnosis="near-singular Gram matrix; gap undefined",
        )
    chain = math.exp(log_chain)
    det = math.exp(logdet)
    gap = abs(log_chain - logdet)  # |log ratio| ~ relative gap for small gaps
    return JointDensityCheck(chain=chain, determinant=det, rel_gap=gap)


# ---------------------------------------------------------------------------
# point-set quality

@dataclass
class CoverageReport:
    n: int
    mean_nn_distance: float
    min_nn_distance: float
    projection_max_gap: tuple
    method: str = ""
    seeds: tuple = field(default_factory=tuple)


def coverage_metrics(points, method="", seeds=()):
    """Exact nearest-neighbor statistics plus a per-coordinate gap proxy.

    The projection gap for a coordinate is the largest spacing in the
    sorted projected values with the domain edges 0 and 1 included.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if n < 2:
        raise ValueError("need at least 2 points")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)
    gaps = []
    for d in range(pts.shape[1]):
        s = np.sort(np.concatenate(([0.0], pts[:, d], [1.0])))
        gaps.append(float(np.max(np.diff(s))))
    return CoverageReport(
        n=n,
        mean_nn_distance=float(nn.mean()),
        min_nn_distance=float(nn.min()),
        projection_max_gap=tuple(gaps),
        method=method,
        seeds=tuple(seeds),
    )


# ---------------------------------------------------------------------------
# rejected closed-form variant (kept for the validation report)

def exp_cross_fixed_limits_variant(a, b, x0, x1):
    """Fixed-limit exponential cross integral, variant with a growing tail.

    Published-style closed form for int_{x0}^{x1} e^{-|x-a|} e^{-|x-b|} dx
    at unit lengthscale with x0 < a <= b < x1. Its third term grows like
    e^{+2x} although the integrand decays for x > b, so it disagrees with
    quadrature; the validation report records the discrepancy. Do not use
    for sampling.
    """
    return (
        0.5 * np.exp(-a - b) * (np.exp(2 * a) - np.exp(2 * x0))
        + (b - a) * np.exp(a - b)
        + 0.5 * np.exp(a + b) * (np.exp(2 * x1) - np.exp(2 * b))
    )


# ---------------------------------------------------------------------------
# validation suite

def _chi2_against_density(samples, density_on_grid, grid, bins=20):
    """Chi-square GOF of samples against a tabulated unnormalized density."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    # bin probabilities by trapezoid-integrating the tabulated density
    cum = np.concatenate(
        ([0.0],
         np.cumsum(0.5 * (density_on_grid[1:] + density_on_grid[:-1])
                   * np.diff(grid)))
    )
    probs = np.diff(np.interp(edges, grid, cum)) / cum[-1]
    probs = np.maximum(probs, 1e-12)
    probs /= probs.sum()
    expected = probs * len(samples)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    p = float(stats.chi2.sf(chi2, df=bins - 1))
    return chi2, p


def run_validation(seed=20240801, scale=1.0, jitter=1e-10):
    """Run the oracle suite against the closed-form implementation.

    Returns a JSON-ready report dict; every check entry carries its
    tolerance and observed value. scale < 1 shrinks the config counts for
    smoke testing.
    """
    from . import sampler
    from .kernels import KernelSpec, cross_integral_1d
    from .state import DppState

    rng = np.random.default_rng(seed)
    checks = []

    def record(name, tolerance, observed, passed, note=""):
        checks.append(
            {
                "name": name,
                "tolerance": tolerance,
                "observed": observed,
                "pass": bool(passed),
                "note": note,
            }
        )

    # 1. closed-form CDF vs quadrature on random configs. Conditioning-set
    # sizes stay below saturation capacity for the drawn lengthscale;
    # past saturation both routes lose the same digits to the Gram inverse
    # and the comparison measures conditioning, not correctness.
    n_cfg = max(10, int(60 * scale))
    worst = 0.0
    for _ in range(n_cfg):
        D = int(rng.integers(1, 4))
        fam = (KernelFamily.SQUARE_EXPONENTIAL if rng.random() < 0.6
               else KernelFamily.EXPONENTIAL)
        lam = float(rng.uniform(*{1: (0.08, 0.3), 2: (0.12, 0.4),
                                  3: (0.18, 0.5)}[D]))
        spec = KernelSpec(fam, (lam,) * D, D)
        cap = int(0.55 * (2.2 / lam) ** D)
        n_pts = int(rng.integers(0, max(1, min({1: 9, 2: 13, 3: 11}[D],
                                               cap)) + 1))
        state = DppState(spec, jitter=jitter)
        for p in _separated_uniforms(rng, n_pts, D, 0.2 * lam):
            state.push_point(p)
        d = int(rng.integers(0, D))
        prefix = rng.random(d)
        t = float(rng.uniform(0.1, 0.95))
        cdf = sampler.build_cdf(state, spec, prefix, d)
        panels = {1: 1024, 2: 256, 3: 96}[D]
        q = quad_cdf(state, spec, prefix, d, t,
                     QuadratureRule(panels=panels), jitter=jitter)
        mass = quad_cdf(state, spec, prefix, d, 1.0,
                        QuadratureRule(panels=panels), jitter=jitter)
        worst = max(worst, abs(cdf.evaluate(t) - q) / mass)
    record("cdf_vs_quadrature", 1e-6, worst, worst <= 1e-6,
           f"{n_cfg} random configs, relative to total mass")

    # 2. determinant chain identity, jitter off. Point counts stay below
    # the saturation capacity for the drawn lengthscale so the Gram keeps
    # enough digits for a 1e-8 comparison; the identity itself is exact.
    n_sets = max(10, int(40 * scale))
    worst = 0.0
    for _ in range(n_sets):
        D = int(rng.integers(1, 4))
        lam = float(rng.uniform(*{1: (0.12, 0.25), 2: (0.15, 0.35),
                                  3: (0.2, 0.45)}[D]))
        cap = max(2, int(0.55 * (2.2 / lam) ** D))
        n_pts = int(rng.integers(2, min(20, cap) + 1))
        spec = KernelSpec(KernelFamily.SQUARE_EXPONENTIAL, (lam,) * D, D)
        pts = _separated_uniforms(rng, n_pts, D, 0.25 * lam)
        res = joint_density_check(pts, spec)
        worst = max(worst, res.rel_gap)
    record("determinant_chain_identity", 1e-8, worst, worst <= 1e-8,
           f"{n_sets} random point sets, jitter 0")

    # 3. rejection oracle self-test then cross-check of inverse-CDF draws
    spec = KernelSpec(KernelFamily.SQUARE_EXPONENTIAL, (0.2,), 1)
    state = DppState(spec, jitter=jitter)
    state.push_point([0.42])
    n_rej = max(2000, int(20000 * scale))
    acc, rate = rejection_draw(state, spec, int(n_rej / 0.5), seed=seed + 1,
                               jitter=jitter)
    grid = np.linspace(0.0, 1.0, 2001)
    dens = _DenseVariance(spec, state.points, jitter=jitter)(
        grid.reshape(-1, 1)
    )
    chi2, p = _chi2_against_density(acc, dens, grid)
    record("rejection_oracle_chi2", 0.01, p, p > 0.01,
           "self-test against quadrature-normalized density, 20 bins")
    cdf = sampler.build_cdf(state, spec, [], 0)
    us = cdf.total_mass * np.random.default_rng(seed + 2).random(len(acc))
    inv = sampler.invert_cdf(cdf, us)
    ks = float(stats.ks_2samp(np.asarray(inv), acc[:, 0]).statistic)
    # two-sample critical value at alpha ~ 1e-3; the 0.02 floor is what the
    # full-size run is held to
    m = len(acc)
    ks_tol = max(0.02, 1.949 * math.sqrt(2.0 / m))
    record("invert_cdf_vs_rejection_ks", ks_tol, ks, ks <= ks_tol,
           f"{m} draws each")

    # 4. exponential cross integral vs quadrature, plus the variant form
    spec_e = KernelSpec(KernelFamily.EXPONENTIAL, (1.0,), 1)
    worst = 0.0
    for _ in range(max(100, int(1000 * scale))):
        a, b, t = rng.random(3)
        q = adaptive_simpson(
            lambda x: math.exp(-abs(x - a)) * math.exp(-abs(x - b)),
            0.0, t, tol=1e-12,
        )
        worst = max(worst, abs(cross_integral_1d(spec_e, 0, a, b, t) - q))
    record("exp_cross_integral_vs_quadrature", 1e-8, worst, worst <= 1e-8)

    a, b, x0, x1 = 0.3, 0.6, 0.1, 0.9
    q = adaptive_simpson(
        lambda x: math.exp(-abs(x - a)) * math.exp(-abs(x - b)), x0, x1,
        tol=1e-12,
    )
    variant = exp_cross_fixed_limits_variant(a, b, x0, x1)
    derived = cross_integral_1d(spec_e, 0, a, b, x1) - cross_integral_1d(
        spec_e, 0, a, b, x0
    )
    record(
        "exp_fixed_limit_variant_discrepancy",
        None,
        abs(variant - q),
        True,
        "informational: variant with growing tail term disagrees with "
        f"quadrature (variant {variant:.6f}, quadrature {q:.6f}, "
        f"derived piecewise form off by {abs(derived - q):.2e})",
    )

    # 5. incremental inverse vs a dense inverse of the same jittered Gram.
    # Elementwise agreement needs the Gram itself well-conditioned, so the
    # point count stays near a tenth of the saturation capacity.
    spec2 = KernelSpec(KernelFamily.SQUARE_EXPONENTIAL, (0.08, 0.08), 2)
    st = DppState(spec2, jitter=jitter)
    for p in _separated_uniforms(rng, 60, 2, 0.25 * 0.08):
        st.push_point(p)
    K = _kmat(spec2, st.points, st.points) + jitter * np.eye(len(st.points))
    gap = float(np.max(np.abs(st.inv_gram - np.linalg.inv(K))))
    record("incremental_inverse_gap", 1e-8, gap, gap <= 1e-8,
           "60 pushes in 2D vs dense inverse, max elementwise gap")

    # 6. repulsion spot check
    spec_r = KernelSpec(KernelFamily.SQUARE_EXPONENTIAL, (0.1, 0.1), 2)
    wins = 0
    n_seeds = max(4, int(10 * scale))
    for s in range(n_seeds):
        dpp = sampler.draw(spec_r, 30, seed=seed + 100 + s)
        uni = sampler.draw_uniform(2, 30, seed=seed + 100 + s)
        if (coverage_metrics(dpp.points).mean_nn_distance
                > coverage_metrics(uni.points).mean_nn_distance):
            wins += 1
    record("repulsion_paired_seeds", 0.8, wins / n_seeds,
           wins / n_seeds >= 0.8, f"{wins}/{n_seeds} paired wins")

    report = {
        "schema_version": 1,
        "seed": seed,
        "scale": scale,
        "policies": {
            "gram_jitter": jitter,
            "rebuild_every": 64,
            "drift_tolerance": 1e-6,
            "bisection_eps": 1e-12,
            "degenerate_mass_floor": 1e-14,
            "near_singular_floor": 1e-12,
        },
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }
    return report
