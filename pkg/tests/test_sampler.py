import numpy as np
import pytest

from dppsample.errors import DegenerateDensityError, DppError
from dppsample.kernels import KernelFamily, KernelSpec
from dppsample.oracle import (
    QuadMethod,
    QuadratureRule,
    _separated_uniforms,
    joint_density_check,
    quad_cdf,
)
from dppsample.sampler import build_cdf, draw, draw_uniform, invert_cdf
from dppsample.state import DppState

SE = KernelFamily.SQUARE_EXPONENTIAL
EXP = KernelFamily.EXPONENTIAL


def test_empty_state_cdf_is_identity():
    spec = KernelSpec(SE, 0.2, 1)
    st = DppState(spec)
    cdf = build_cdf(st, spec, [], 0)
    assert cdf.total_mass == pytest.approx(1.0)
    assert cdf.evaluate(0.37) == pytest.approx(0.37)
    np.testing.assert_allclose(cdf.evaluate(np.array([0.0, 0.5, 1.0])),
                               [0.0, 0.5, 1.0])


def test_invert_cdf_endpoints():
    spec = KernelSpec(SE, 0.2, 1)
    st = DppState(spec, jitter=1e-10)
    st.push_point([0.5])
    cdf = build_cdf(st, spec, [], 0)
    assert invert_cdf(cdf, 0.0) == pytest.approx(0.0, abs=1e-11)
    assert invert_cdf(cdf, cdf.total_mass) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(ValueError):
        invert_cdf(cdf, cdf.total_mass * 1.01)
    with pytest.raises(ValueError):
        invert_cdf(cdf, -0.1)


def test_cdf_matches_adaptive_quadrature_1d():
    spec = KernelSpec(SE, 0.2, 1)
    st = DppState(spec, jitter=1e-10)
    st.push_point([0.3])
    st.push_point([0.7])
    cdf = build_cdf(st, spec, [], 0)
    rule = QuadratureRule(method=QuadMethod.ADAPTIVE_SIMPSON, tol=1e-12)
    for t in np.arange(0.1, 0.95, 0.1):
        q = quad_cdf(st, spec, [], 0, t, rule, jitter=1e-10)
        assert cdf.evaluate(t) == pytest.approx(q, abs=1e-8)


def test_cdf_matches_quadrature_exponential_1d():
    spec = KernelSpec(EXP, 0.25, 1)
    st = DppState(spec, jitter=1e-10)
    for p in ([0.2], [0.55], [0.9]):
        st.push_point(p)
    cdf = build_cdf(st, spec, [], 0)
    for t in (0.15, 0.4, 0.6, 0.85):
        q = quad_cdf(st, spec, [], 0, t, QuadratureRule(panels=2048),
                     jitter=1e-10)
        assert cdf.evaluate(t) == pytest.approx(q, abs=1e-8)


@pytest.mark.parametrize("family", [SE, EXP])
def test_cdf_matches_quadrature_3d_with_prefix(family):
    rng = np.random.default_rng(14)
    spec = KernelSpec(family, 0.35, 3)
    st = DppState(spec, jitter=1e-10)
    for p in _separated_uniforms(rng, 10, 3, 0.1):
        st.push_point(p)
    prefix = [0.3]
    cdf = build_cdf(st, spec, prefix, 1)
    rule = QuadratureRule(panels=96)
    mass = quad_cdf(st, spec, prefix, 1, 1.0, rule, jitter=1e-10)
    for t in (0.25, 0.6, 0.9):
        q = quad_cdf(st, spec, prefix, 1, t, rule, jitter=1e-10)
        assert abs(cdf.evaluate(t) - q) / mass < 1e-6
    assert cdf.total_mass == pytest.approx(mass, rel=1e-6)


def test_cdf_monotone_on_grid():
    rng = np.random.default_rng(15)
    for family in (SE, EXP):
        spec = KernelSpec(family, 0.15, 1)
        st = DppState(spec, jitter=1e-10)
        for p in _separated_uniforms(rng, 8, 1, 0.04):
            st.push_point(p)
        cdf = build_cdf(st, spec, [], 0)
        vals = cdf.evaluate(np.linspace(0, 1, 1000))
        assert np.all(np.diff(vals) >= -1e-15)
        assert vals[0] == pytest.approx(0.0, abs=1e-15)


def test_inversion_residual_small():
    rng = np.random.default_rng(16)
    spec = KernelSpec(SE, 0.12, 1)
    st = DppState(spec, jitter=1e-10)
    for p in _separated_uniforms(rng, 6, 1, 0.04):
        st.push_point(p)
    cdf = build_cdf(st, spec, [], 0)
    for u in rng.random(50) * cdf.total_mass:
        x = invert_cdf(cdf, u)
        # P' <= 1, so the width-1e-12 bracket bounds the value residual too
        assert abs(cdf.evaluate(x) - u) < 1e-11


def test_vectorized_inversion_matches_scalar():
    rng = np.random.default_rng(17)
    spec = KernelSpec(EXP, 0.2, 1)
    st = DppState(spec, jitter=1e-10)
    for p in _separated_uniforms(rng, 5, 1, 0.06):
        st.push_point(p)
    cdf = build_cdf(st, spec, [], 0)
    us = rng.random(64) * cdf.total_mass
    vec = invert_cdf(cdf, us)
    sca = np.array([invert_cdf(cdf, float(u)) for u in us])
    assert np.array_equal(vec, sca)


def test_build_cdf_input_validation():
    spec = KernelSpec(SE, 0.2, 2)
    st = DppState(spec)
    with pytest.raises(ValueError):
        build_cdf(st, spec, [], 2)          # d out of range
    with pytest.raises(ValueError):
        build_cdf(st, spec, [0.5], 0)       # prefix length mismatch

    def k(A, B):
        return np.ones((len(np.atleast_2d(A)), len(np.atleast_2d(B))))

    st_fn = DppState(spec, kernel_fn=k)
    with pytest.raises(ValueError):
        build_cdf(st_fn, spec, [], 0)       # custom kernels have no closed form


def test_first_point_is_raw_uniforms():
    for D, seed in ((1, 9), (3, 10)):
        spec = KernelSpec(SE, 0.2, D)
        ps = draw(spec, 1, seed=seed)
        expect = np.random.default_rng(seed).random(D)
        np.testing.assert_allclose(ps.points[0], expect, atol=5e-12)


def test_draw_deterministic():
    spec = KernelSpec(SE, (0.15, 0.15), 2)
    a = draw(spec, 12, seed=21)
    b = draw(spec, 12, seed=21)
    assert np.array_equal(a.points, b.points)
    c = draw(spec, 12, seed=22)
    assert not np.array_equal(a.points, c.points)


def test_draw_metadata():
    spec = KernelSpec(EXP, 0.3, 2)
    ps = draw(spec, 5, seed=3, jitter=1e-9)
    assert ps.method == "exact"
    assert ps.seed == 3
    assert ps.jitter == 1e-9
    assert ps.spec is spec
    assert len(ps) == 5


class _ScaledCdf:
    """Amplitude-rescaled view of a CDF; the DPP measure is unchanged."""

    def __init__(self, cdf, theta):
        self._cdf = cdf
        self._theta = theta
        self.total_mass = theta * cdf.total_mass

    def evaluate(self, t):
        return self._theta * self._cdf.evaluate(t)


def test_amplitude_scaling_leaves_inversion_unchanged():
    rng = np.random.default_rng(19)
    spec = KernelSpec(SE, 0.15, 1)
    st = DppState(spec, jitter=1e-10)
    for p in _separated_uniforms(rng, 7, 1, 0.04):
        st.push_point(p)
    cdf = build_cdf(st, spec, [], 0)
    us = rng.random(30)
    base = np.array([invert_cdf(cdf, u * cdf.total_mass) for u in us])
    # powers of two rescale every float op exactly: bit-identical
    s4 = _ScaledCdf(cdf, 4.0)
    got4 = np.array([invert_cdf(s4, u * s4.total_mass) for u in us])
    assert np.array_equal(base, got4)
    # other factors agree to rounding noise amplified through bisection
    s37 = _ScaledCdf(cdf, 3.7)
    got37 = np.array([invert_cdf(s37, u * s37.total_mass) for u in us])
    np.testing.assert_allclose(got37, base, atol=1e-9)


def test_no_duplicates_in_drawn_sets():
    for spec, n, seed in (
        (KernelSpec(SE, (0.05, 0.05), 2), 150, 4),
        (KernelSpec(SE, 0.03, 1), 60, 5),
        (KernelSpec(EXP, (0.1, 0.1), 2), 80, 6),
    ):
        pts = draw(spec, n, seed=seed).points
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        assert dist.min() > 1e-8


def test_chain_density_identity_end_to_end():
    spec = KernelSpec(SE, 0.15, 1)
    ps = draw(spec, 8, seed=30)
    res = joint_density_check(ps.points, spec)
    assert res.rel_gap <= 1e-8


def test_saturated_draw_reports_sample_index():
    # 1D capacity at lam=0.05 is ~44 points; asking for 60 must fail with
    # the failing sample position in the message
    spec = KernelSpec(SE, 0.05, 1)
    with pytest.raises(DppError) as exc:
        draw(spec, 60, seed=1)
    assert "sample" in str(exc.value)


def test_degenerate_mass_error_type():
    from scipy.special import erf

    from dppsample.sampler import ConditionalCdf

    # coefficient tuned so P(1) = 1 - c * erf_sum = 0: the mass floor trips
    lam = 0.3
    m = np.array([0.5])
    erf_sum = erf((1 - m) / lam) + erf(m / lam)
    with pytest.raises(DegenerateDensityError):
        ConditionalCdf(0, lam, SE, 1.0 / erf_sum, m, m)


def test_draw_uniform_basics():
    ps = draw_uniform(2, 0, seed=1)
    assert len(ps) == 0
    ps = draw_uniform(3, 10_000, seed=2)
    assert ps.points.shape == (10_000, 3)
    assert ps.points.min() >= 0 and ps.points.max() <= 1
    # per-coordinate mean within 3 sigma of 1/2
    sigma = 1.0 / np.sqrt(12 * 10_000)
    assert np.all(np.abs(ps.points.mean(axis=0) - 0.5) < 3 * sigma)
    again = draw_uniform(3, 10_000, seed=2)
    assert np.array_equal(ps.points, again.points)
