import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import i0

from uams import (IRRATIONAL, AnalyticForms, ConfigurationError, DecompositionValidationError,
                  FieldEvaluationError, RationalCollapse, SolverConfig, antiderivative_g,
                  cascade_fluct, cascade_mean, collapse_rational, collapsed_scale_mean, decompose,
                  jacobian_g)
from uams.decomposition import quadrature_tolerance
from uams.scales import ScaleVector

from conftest import TWO_PI, field_from

QTOL = quadrature_tolerance(8)


def trapezoid_mean(func, m=4096):
    s = np.arange(m) / m
    return np.mean(func(s))


# c = int_0^1 exp(sin 2 pi s) ds, two independent oracles
C_TRAP = trapezoid_mean(lambda s: np.exp(np.sin(TWO_PI * s)))
C_BESSEL = float(i0(1.0))


def test_oracles_agree():
    assert C_TRAP == pytest.approx(C_BESSEL, abs=1e-14)
    assert C_BESSEL == pytest.approx(1.26607, abs=1e-5)


# -- cascade_mean / cascade_fluct -----------------------------------------------


def test_mean_of_sine_field(sine_field):
    mean = cascade_mean(sine_field.rhs, 1, 8)
    x = np.array([[0.3], [-1.2]])
    np.testing.assert_allclose(mean(np.zeros((2, 0)), x), x, atol=1e-15)


def test_mean_constant_in_phase_drops_it():
    f = field_from(lambda th, x: x * np.cos(TWO_PI * th[..., :1]) + 0.0 * th[..., 1:2], d=1, n=2)
    mean = cascade_mean(f.rhs, 2, 8)
    th1 = np.array([0.1, 0.37])
    x = np.array([[2.0], [-0.5]])
    np.testing.assert_allclose(mean(th1[:, None], x), f.rhs(np.c_[th1, np.zeros(2)], x), atol=1e-15)


def test_mean_exp_sin_level2(expsin):
    mean2 = cascade_mean(expsin.field.rhs, 2, 32)
    th1 = np.array([0.0, 0.2, 0.71])
    x = np.ones((3, 1)) * 0.8
    expected = (1.5 - C_TRAP * np.exp(np.sin(TWO_PI * th1)))[:, None] * x
    np.testing.assert_allclose(mean2(th1[:, None], x), expected, atol=1e-13)


def test_fluct_of_sine_field(sine_field):
    mean = cascade_mean(sine_field.rhs, 1, 8)
    fl = cascade_fluct(sine_field.rhs, mean)
    th = np.array([[0.1], [0.6]])
    np.testing.assert_allclose(fl(th, np.array([[0.4], [3.0]])), np.sin(TWO_PI * th), atol=1e-14)


def test_fluct_vanishes_when_field_ignores_phase(const_field):
    mean = cascade_mean(const_field.rhs, 2, 8)
    fl = cascade_fluct(const_field.rhs, mean)
    assert np.all(fl(np.array([0.3, 0.8]), np.array([1.0, 2.0])) == 0.0)


def test_fluct_exp_sin_level2(expsin):
    mean2 = cascade_mean(expsin.field.rhs, 2, 32)
    fl = cascade_fluct(expsin.field.rhs, mean2)
    th = np.array([0.15, 0.4])
    x = np.array([0.48])
    expected = -np.exp(np.sin(TWO_PI * th[0])) * (np.exp(np.sin(TWO_PI * th[1])) - C_TRAP) * x
    np.testing.assert_allclose(fl(th, x), expected, atol=1e-13)


def test_non_finite_value_reports_point():
    f = field_from(lambda th, x: np.where(th[..., :1] > 0.5, np.inf, x), d=1, n=1)
    mean = cascade_mean(f.rhs, 1, 8)
    with pytest.raises(FieldEvaluationError) as info:
        mean(np.zeros(0), np.array([1.0]))
    assert info.value.point["theta"][0] > 0.5


# -- decompose --------------------------------------------------------------------


def test_decompose_constant_field(const_field):
    dec = decompose(const_field)
    x = np.array([0.2, 0.4])
    np.testing.assert_allclose(dec.mean(x), [1.0, -2.0])
    for k in (1, 2):
        th = np.array([0.3, 0.9])
        assert np.all(dec.fluct(k, th[:k], x) == 0.0)
        assert np.all(dec.anti(k, th[:k], x) == 0.0)


def test_decompose_sine_field(sine_field):
    dec = decompose(sine_field)
    assert dec.provider == "numeric"
    x = np.array([0.7])
    np.testing.assert_allclose(dec.mean(x), x, atol=1e-15)
    for t1 in (0.1, 0.25, 0.5, 0.9):
        th = np.array([t1])
        np.testing.assert_allclose(dec.fluct(1, th, x), np.sin(TWO_PI * th), atol=1e-14)
        g = (1.0 - np.cos(TWO_PI * t1)) / TWO_PI
        np.testing.assert_allclose(dec.anti(1, th, x), [g], atol=QTOL)


def test_decompose_exp_sin_mean_slope(expsin_decomp):
    slope = expsin_decomp.mean(np.array([1.0]))[0]
    # 8 uniform nodes against the oracle value 1.5 - c^2
    assert slope == pytest.approx(1.5 - C_BESSEL ** 2, abs=QTOL)
    # 1.5 - 1.26607**2 rounds to -0.1029
    assert slope == pytest.approx(-0.1029, abs=5e-5)


def test_numeric_mean_converges_with_nodes(expsin):
    exact = 1.5 - C_BESSEL ** 2
    errs = [abs(decompose(expsin.field, SolverConfig(quad_nodes=q)).mean(np.array([1.0]))[0] - exact)
            for q in (2, 4, 8)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < errs[0] * 1e-2


def test_analytic_provider_matches_numeric(hh3, hh3_decomp):
    num = hh3.numeric_decomposition(SolverConfig(quad_nodes=16))
    rng = np.random.default_rng(3)
    for _ in range(10):
        th = rng.uniform(0, 1, 2)
        x = rng.uniform(-0.3, 0.3, 6)
        np.testing.assert_allclose(num.mean(x), hh3_decomp.mean(x), atol=1e-13)
        for k in (1, 2):
            np.testing.assert_allclose(num.fluct(k, th[:k], x), hh3_decomp.fluct(k, th[:k], x), atol=1e-13)
            np.testing.assert_allclose(num.anti(k, th[:k], x), hh3_decomp.anti(k, th[:k], x), atol=1e-13)


def _sine_forms(shift=0.0):
    return AnalyticForms(
        mean=lambda x: np.asarray(x, float) + shift,
        fluct=[lambda th, x: np.sin(TWO_PI * np.asarray(th)[..., :1]) + 0.0 * np.asarray(x)],
        anti=[lambda th, x: (1 - np.cos(TWO_PI * np.asarray(th)[..., :1])) / TWO_PI + 0.0 * np.asarray(x)],
        anti_jac=[lambda th, x: np.zeros(np.shape(x)[:-1] + (1, 1))],
    )


def test_analytic_forms_accepted(sine_field):
    dec = decompose(sine_field, analytic=_sine_forms())
    assert dec.provider == "analytic"
    np.testing.assert_allclose(dec.anti(1, np.array([0.5]), np.array([2.0])), [1 / np.pi])


def test_bad_analytic_forms_rejected(sine_field):
    with pytest.raises(DecompositionValidationError) as info:
        decompose(sine_field, analytic=_sine_forms(shift=1e-3))
    assert info.value.residual > 5e-4


def test_analytic_forms_level_count_checked(sine_field):
    forms = _sine_forms()
    forms = AnalyticForms(forms.mean, forms.fluct * 2, forms.anti, forms.anti_jac)
    with pytest.raises(ConfigurationError):
        decompose(sine_field, analytic=forms)


# -- antiderivative_g / jacobian_g ------------------------------------------------


def test_g_zero_at_zero_phase_exactly(hh3_decomp, expsin_decomp):
    x = np.full(6, 0.12)
    assert np.all(antiderivative_g(hh3_decomp, 2, np.array([0.4, 0.0]), x) == 0.0)
    assert np.all(antiderivative_g(expsin_decomp, 1, np.array([0.0]), np.array([0.5])) == 0.0)


def test_g_exp_sin_level2_oracle(expsin_decomp):
    s = (np.arange(200000) + 0.5) / 200000 * 0.5
    half = np.mean(np.exp(np.sin(TWO_PI * s))) * 0.5
    expected = -(half - C_BESSEL / 2)
    got = antiderivative_g(expsin_decomp, 2, np.array([0.0, 0.5]), np.array([1.0]))[0]
    assert got == pytest.approx(expected, abs=10 * QTOL)


def test_jacobian_zero_for_vanishing_fluct(const_field):
    dec = decompose(const_field)
    assert np.all(jacobian_g(dec, 2, np.array([0.2, 0.3]), np.array([1.0, 1.0])) == 0.0)


def test_jacobian_zero_for_x_independent_g(sine_field):
    dec = decompose(sine_field)
    np.testing.assert_allclose(jacobian_g(dec, 1, np.array([0.3]), np.array([1.5])), [[0.0]], atol=1e-12)


def test_jacobian_linear_field(expsin_decomp):
    th = np.array([0.3, 0.35])
    x = np.array([0.7])
    g = antiderivative_g(expsin_decomp, 2, th, x)[0]
    J = jacobian_g(expsin_decomp, 2, th, x)
    assert J.shape == (1, 1)
    assert J[0, 0] == pytest.approx(g / x[0], rel=1e-9)


def test_jacobian_fd_error_is_second_order():
    f = field_from(lambda th, x: np.sin(TWO_PI * th[..., :1]) * x ** 3, d=1, n=1)
    th = np.array([0.3])
    x = np.array([0.9])
    exact = 3 * x[0] ** 2 * (1 - np.cos(TWO_PI * th[0])) / TWO_PI
    errs = []
    for dx in (1e-2, 5e-3):
        dec = decompose(f, SolverConfig(fd_dx=dx, quad_nodes=16))
        errs.append(abs(jacobian_g(dec, 1, th, x)[0, 0] - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_jacobian_batch_shape(hh3_decomp):
    th = np.random.default_rng(0).uniform(0, 1, (5, 2))
    x = np.full((5, 6), 0.1)
    assert hh3_decomp.anti_jac(2, th, x).shape == (5, 6, 6)


# -- invariants -------------------------------------------------------------------


def _phase_average(fn, k, theta, x, m=512):
    s = np.arange(m) / m
    th = np.repeat(theta[None, :k].copy(), m, axis=0)
    th[:, k - 1] = s
    return np.mean(fn(k, th, np.broadcast_to(x, (m, len(x)))), axis=0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1, exclude_max=True), min_size=2, max_size=2),
       st.floats(-0.4, 0.4))
def test_zero_mean_analytic(hh3_decomp, th, xv):
    theta = np.array(th)
    x = np.full(6, xv)
    for k in (1, 2):
        assert np.abs(_phase_average(hh3_decomp.fluct, k, theta, x)).max() <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0.1, 2.0))
def test_zero_mean_numeric(expsin_decomp, t1, xv):
    theta = np.array([t1, 0.0])
    x = np.array([xv])
    for k in (1, 2):
        assert np.abs(_phase_average(expsin_decomp.fluct, k, theta, x)).max() <= 10 * QTOL * xv


@pytest.mark.parametrize("which", ["hh3", "hh4", "expsin"])
def test_reconstruction(which, hh3_decomp, hh4_decomp, expsin_decomp):
    dec = {"hh3": hh3_decomp, "hh4": hh4_decomp, "expsin": expsin_decomp}[which]
    rng = np.random.default_rng(11)
    th = rng.uniform(0, 1, (100, dec.n))
    x = rng.uniform(-0.5, 0.5, (100, dec.d))
    total = dec.mean(x) + sum(dec.fluct(k, th[:, :k], x) for k in range(1, dec.n + 1))
    tol = 1e-10 if dec.provider == "analytic" else QTOL
    assert np.abs(dec.field.rhs(th, x) - total).max() <= tol


@pytest.mark.parametrize("which", ["hh3", "hh4", "expsin"])
def test_g_periodic(which, hh3_decomp, hh4_decomp, expsin_decomp):
    dec = {"hh3": hh3_decomp, "hh4": hh4_decomp, "expsin": expsin_decomp}[which]
    rng = np.random.default_rng(5)
    for _ in range(10):
        th = rng.uniform(0, 1, dec.n)
        x = rng.uniform(-0.5, 0.5, dec.d)
        for k in range(1, dec.n + 1):
            one = th[:k].copy()
            one[-1] = 1.0
            assert np.abs(dec.anti(k, one, x)).max() <= QTOL


# -- collapsed scales -------------------------------------------------------------


def test_collapse_field_independent_of_pair():
    f = field_from(lambda th, x: x * np.cos(TWO_PI * th[..., :1]) + 0.0 * th[..., 1:2], d=1, n=3)
    for collapse in (RationalCollapse(2, 3), IRRATIONAL):
        mean = collapsed_scale_mean(f, collapse)
        np.testing.assert_allclose(mean(np.array([0.2]), np.array([1.5])),
                                   f.rhs(np.array([0.2, 0.0, 0.0]), np.array([1.5])), atol=1e-14)


def test_collapse_equal_scales_product():
    f = field_from(lambda th, x: np.sin(TWO_PI * th[..., :1]) * np.sin(TWO_PI * th[..., 1:2]) + 0 * x,
                   d=1, n=2)
    mean = collapsed_scale_mean(f, RationalCollapse(1, 1), quad_nodes=16)
    oracle = trapezoid_mean(lambda s: np.sin(TWO_PI * s) ** 2)
    assert mean(np.zeros(0), np.array([0.0]))[0] == pytest.approx(oracle, abs=1e-14)
    assert oracle == pytest.approx(0.5)
    torus = collapsed_scale_mean(f, IRRATIONAL, quad_nodes=16)
    assert torus(np.zeros(0), np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("m1,m2", [(0, 1), (1, -2), (-1, -1)])
def test_rational_collapse_validation(m1, m2):
    with pytest.raises(ConfigurationError):
        RationalCollapse(m1, m2)


def test_collapse_rational_merges_phases():
    f = field_from(lambda th, x: np.cos(TWO_PI * (th[..., :1] - th[..., 1:2])) * x, d=1, n=2)
    scales = ScaleVector((0.1, 0.05))
    merged, sc = collapse_rational(f, scales, 1, 2)
    assert merged.n == 1 and sc.eps == (0.1,)
    # merged field reproduces the original along t
    for t in (0.013, 0.21, 0.77):
        np.testing.assert_allclose(merged.at(t, np.array([1.2]), sc), f.at(t, np.array([1.2]), scales),
                                   atol=1e-12)
    dec = decompose(merged)
    direct = collapsed_scale_mean(f, RationalCollapse(1, 2))
    np.testing.assert_allclose(dec.mean(np.array([0.4])), direct(np.zeros(0), np.array([0.4])), atol=1e-14)


def test_collapse_rational_checks_ratio():
    f = field_from(lambda th, x: x + 0 * th[..., :1], d=1, n=2)
    with pytest.raises(ConfigurationError):
        collapse_rational(f, ScaleVector((0.1, 0.03)), 1, 2)
