import numpy as np
import pytest

from dppsample.errors import DppError
from dppsample.kernels import (
    KernelFamily,
    KernelSpec,
    box_to_unit,
    cross_integral_1d,
    diag_integral_1d,
    kernel_eval,
    kernel_eval_1d,
    unit_to_box,
)
from dppsample.oracle import adaptive_simpson

SE = KernelFamily.SQUARE_EXPONENTIAL
EXP = KernelFamily.EXPONENTIAL


def test_spec_scalar_lengthscale_broadcasts():
    spec = KernelSpec(SE, 0.2, 3)
    assert spec.lengthscales == (0.2, 0.2, 0.2)
    assert spec.box == ((0.0, 1.0),) * 3


def test_spec_rejects_bad_inputs():
    with pytest.raises(ValueError):
        KernelSpec(SE, -0.1, 1)
    with pytest.raises(ValueError):
        KernelSpec(SE, 0.2, 0)
    with pytest.raises(ValueError):
        KernelSpec(SE, (0.2, 0.3), 3)
    with pytest.raises(ValueError):
        KernelSpec(SE, 0.2, 1, box=((1.0, 1.0),))


def test_se_value_at_one_lengthscale_apart():
    spec = KernelSpec(SE, 0.25, 1)
    # exp(-0.5) at separation equal to the lengthscale
    assert kernel_eval_1d(spec, 0, 0.5, 0.75) == pytest.approx(
        0.606530659712633, abs=1e-14)


def test_exponential_value_at_one_lengthscale_apart():
    spec = KernelSpec(EXP, 0.25, 1)
    assert kernel_eval_1d(spec, 0, 0.5, 0.75) == pytest.approx(
        0.367879441171442, abs=1e-14)


def test_kernel_eval_is_product_over_dims():
    spec = KernelSpec(SE, (0.2, 0.4), 2)
    x = np.array([0.1, 0.3])
    y = np.array([0.5, 0.9])
    expect = (kernel_eval_1d(spec, 0, x[0], y[0])
              * kernel_eval_1d(spec, 1, x[1], y[1]))
    assert kernel_eval(spec, x, y) == pytest.approx(expect, rel=1e-15)


def test_kernel_symmetry_and_unit_diagonal():
    rng = np.random.default_rng(11)
    for family in (SE, EXP):
        spec = KernelSpec(family, (0.3, 0.15, 0.5), 3)
        for _ in range(20):
            x, y = rng.random(3), rng.random(3)
            assert kernel_eval(spec, x, y) == pytest.approx(
                kernel_eval(spec, y, x), rel=1e-15)
            assert kernel_eval(spec, x, x) == pytest.approx(1.0, abs=1e-15)


def test_gram_matrices_are_psd():
    rng = np.random.default_rng(5)
    for family in (SE, EXP):
        spec = KernelSpec(family, 0.2, 2)
        X = rng.random((12, 2))
        K = np.array([[kernel_eval(spec, a, b) for b in X] for a in X])
        w = np.linalg.eigvalsh(K)
        assert w.min() > -1e-12


FROZEN_SE = 0.5984154147433647       # lam=0.5, a=0.3, b=0.7, t=0.9
FROZEN_EXP = 0.5631864764351833      # lam=1.0, a=0.2, b=0.6, t=1.0


def test_se_cross_integral_frozen_value():
    spec = KernelSpec(SE, 0.5, 1)
    assert cross_integral_1d(spec, 0, 0.3, 0.7, 0.9) == pytest.approx(
        FROZEN_SE, abs=1e-14)


def test_exp_cross_integral_frozen_value():
    spec = KernelSpec(EXP, 1.0, 1)
    assert cross_integral_1d(spec, 0, 0.2, 0.6, 1.0) == pytest.approx(
        FROZEN_EXP, abs=1e-14)


def _quad_cross(spec, a, b, t):
    f = lambda x: (kernel_eval_1d(spec, 0, x, a)
                   * kernel_eval_1d(spec, 0, x, b))
    return adaptive_simpson(f, 0.0, t, tol=1e-13)


def test_se_cross_integral_matches_quadrature():
    rng = np.random.default_rng(42)
    for _ in range(60):
        lam = rng.uniform(0.05, 1.5)
        spec = KernelSpec(SE, lam, 1)
        a, b = rng.random(2)
        t = rng.uniform(0.05, 1.0)
        got = cross_integral_1d(spec, 0, a, b, t)
        assert got == pytest.approx(_quad_cross(spec, a, b, t), abs=1e-10)


def test_exp_cross_integral_matches_quadrature():
    rng = np.random.default_rng(43)
    for _ in range(60):
        lam = rng.uniform(0.05, 1.5)
        spec = KernelSpec(EXP, lam, 1)
        a, b = sorted(rng.random(2))
        t = rng.uniform(0.05, 1.0)
        # split at the kernel creases, |x-a| and |x-b| kink there
        pieces = sorted({0.0, min(a, t), min(b, t), t})
        expect = sum(
            adaptive_simpson(
                lambda x: (kernel_eval_1d(spec, 0, x, a)
                           * kernel_eval_1d(spec, 0, x, b)),
                lo, hi, tol=1e-13)
            for lo, hi in zip(pieces[:-1], pieces[1:]))
        assert cross_integral_1d(spec, 0, a, b, t) == pytest.approx(
            expect, abs=1e-10)


def test_exp_cross_integral_orderings_agree():
    spec = KernelSpec(EXP, 0.3, 1)
    for t in (0.1, 0.45, 0.7, 1.0):
        assert cross_integral_1d(spec, 0, 0.6, 0.2, t) == pytest.approx(
            cross_integral_1d(spec, 0, 0.2, 0.6, t), rel=1e-15)


def test_cross_integral_nondecreasing_in_t():
    rng = np.random.default_rng(7)
    for family in (SE, EXP):
        spec = KernelSpec(family, 0.2, 1)
        a, b = rng.random(2)
        ts = np.linspace(0.0, 1.0, 50)
        vals = [cross_integral_1d(spec, 0, a, b, t) for t in ts]
        assert np.all(np.diff(vals) > -1e-15)
        assert vals[0] == pytest.approx(0.0, abs=1e-15)


def test_diag_integral_is_length():
    spec = KernelSpec(SE, 0.2, 1)
    assert diag_integral_1d(spec, 0, 0.37) == 0.37
    with pytest.raises(ValueError):
        diag_integral_1d(spec, 0, 1.5)


def test_box_round_trip():
    spec = KernelSpec(SE, 0.2, 2, box=((2.0, 4.0), (-1.0, 1.0)))
    rng = np.random.default_rng(3)
    for _ in range(10):
        u = rng.random(2)
        x = unit_to_box(spec, u)
        assert x[0] == pytest.approx(2.0 + 2.0 * u[0], rel=1e-15)
        back = box_to_unit(spec, x)
        np.testing.assert_allclose(back, u, atol=1e-14)


def test_box_to_unit_rejects_outside():
    spec = KernelSpec(SE, 0.2, 1, box=((0.0, 2.0),))
    with pytest.raises(ValueError):
        box_to_unit(spec, np.array([2.5]))


def test_dpp_error_is_base():
    from dppsample.errors import (BasisConditioningError,
                                  DegenerateDensityError, NearSingularError)
    for cls in (NearSingularError, DegenerateDensityError,
                BasisConditioningError):
        assert issubclass(cls, DppError)
