import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uams import ConfigurationError, SolverConfig
from uams.problems import (PRESETS, exp_sin_scalar, get_problem, hamiltonian_4scale, hamiltonian_value,
                           henon_heiles_3scale, list_problems)
from uams.reference import rk45_reference


def hh3_w_rhs(a1, a2, w):
    """The rotating-frame Henon-Heiles system typed out by hand (angles in radians)."""
    w1, w2, w3, w4, w5, w6 = w
    u = w1 * math.cos(a2) + w2 * math.sin(a2)
    v = w3 * math.cos(a1) + w4 * math.sin(a1)
    inner = 2 * v * w5 + u ** 2 - v ** 2
    return np.array([
        2 * math.sin(a2) * u * v,
        -2 * math.cos(a2) * u * v,
        math.sin(a1) * inner,
        -math.cos(a1) * inner,
        w6,
        w5 ** 2 - w5 - v ** 2,
    ])


def test_hh3_matches_hand_typed_system(hh3):
    rng = np.random.default_rng(7)
    for _ in range(200):
        th = rng.uniform(0, 1, 2)
        w = rng.uniform(-1, 1, 6)
        expected = hh3_w_rhs(2 * np.pi * th[0], 2 * np.pi * th[1], w)
        np.testing.assert_allclose(hh3.field.point(th, w), expected, atol=1e-12)
        np.testing.assert_allclose(hh3.field.rhs(th[None], w[None])[0], expected, atol=1e-12)


def test_hh3_w_at_time_zero(hh3):
    p = np.array([0.1, 0.2, 0.3])
    q = np.array([-0.4, 0.5, -0.6])
    w = hh3.to_w(p, q, 0.0)
    np.testing.assert_array_equal(w, [q[0], p[0], q[1], p[1], q[2], p[2]])


def test_hh4_w_at_time_zero(hh4):
    p = np.arange(1.0, 5.0)
    q = -np.arange(1.0, 5.0) / 10
    w = hh4.to_w(p, q, 0.0)
    np.testing.assert_array_equal(w, np.ravel(np.c_[q, p]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8), st.floats(0, 5))
def test_round_trip_hh4(vals, t):
    pb = hamiltonian_4scale()
    p, q = np.array(vals[:4]), np.array(vals[4:])
    p2, q2 = pb.from_w(pb.to_w(p, q, t), t)
    np.testing.assert_allclose(p2, p, atol=1e-12)
    np.testing.assert_allclose(q2, q, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.floats(0, 5))
def test_round_trip_hh3(vals, t):
    pb = henon_heiles_3scale(0.1, 0.01)
    p, q = np.array(vals[:3]), np.array(vals[3:])
    p2, q2 = pb.from_w(pb.to_w(p, q, t), t)
    np.testing.assert_allclose(np.r_[p2, q2], np.r_[p, q], atol=1e-12)


def test_hh3_phases_5_6_ignore_t2(hh3):
    rng = np.random.default_rng(0)
    for _ in range(20):
        t1 = rng.uniform()
        w = rng.uniform(-1, 1, 6)
        vals = [hh3.field.point(np.array([t1, t2]), w)[4:6] for t2 in np.linspace(0, 1, 7)]
        assert np.ptp(vals, axis=0).max() <= 1e-15


def test_hh3_hamiltonian_magnitude():
    pb = henon_heiles_3scale(0.1, 0.01)
    H = hamiltonian_value(pb, np.full(6, 0.12), 0.0)
    # quadratic parts alone: 0.0144 * (1/eps2 + 1/eps1 + 1) = 1.5984
    assert H == pytest.approx(0.0144 * (1 / 0.01 + 1 / 0.1 + 1) + 0.12 ** 3 * (1 - 1 / 3 + 1 - 1 / 3), rel=1e-12)
    assert 1.0 < H < 2.5
    assert H == pytest.approx(0.0144 / 0.1 ** 2, rel=0.15)


def test_quadratic_part_scales_like_finest_eps():
    Hs = [hamiltonian_value(henon_heiles_3scale(e, e * e), np.full(6, 0.12), 0.0) for e in (1e-1, 1e-2, 1e-3)]
    ratios = [a / b for a, b in zip(Hs[1:], Hs)]
    assert ratios[1] == pytest.approx(100, rel=0.02)


def test_quadratic_only_hamiltonian_value():
    pb = henon_heiles_3scale(0.1, 0.01)
    w = np.array([0.3, 0.0, 0.0, 0.2, 0.0, 0.0])
    # q1 = 0.3, p2 = 0.2, q2 = q3 = 0: the cubic terms vanish
    assert hamiltonian_value(pb, w, 0.0) == pytest.approx(0.09 / 0.02 + 0.04 / 0.2)


def test_hh4_smallest_period(hh4):
    assert hh4.scales.finest_period == pytest.approx(1.885e-5, rel=1e-3)


def test_ordering_rejected():
    with pytest.raises(ConfigurationError):
        henon_heiles_3scale(0.01, 0.1)
    with pytest.raises(ConfigurationError):
        hamiltonian_4scale(1e-3, 1e-2, 1e-6)
    with pytest.raises(ConfigurationError):
        exp_sin_scalar(1e-3, 1e-2)


def test_expsin_field(expsin):
    assert expsin.field.point(np.zeros(2), np.array([2.0]))[0] == pytest.approx(1.0)
    np.testing.assert_allclose(expsin.x0, [0.48])
    assert expsin.scales.eps == (7e-2, 11e-5)
    assert expsin.decomposition().provider == "numeric"


def test_presets_and_providers(hh3, hh4):
    assert hh3.decomposition().provider == "analytic"
    assert hh4.decomposition().provider == "analytic"
    np.testing.assert_allclose(hh3.x0, 0.12)
    np.testing.assert_allclose(hh4.x0, 0.44)
    assert hh4.scales.eps == (1e-3, 11e-5, 3e-6)


def test_field_periodic_in_each_phase(hh4):
    rng = np.random.default_rng(3)
    for _ in range(20):
        th = rng.uniform(0, 1, 3)
        w = rng.uniform(-0.5, 0.5, 8)
        base = hh4.field.point(th, w)
        for k in range(3):
            shifted = th.copy()
            shifted[k] += 1.0
            np.testing.assert_allclose(hh4.field.point(shifted, w), base, atol=1e-12)


@pytest.mark.parametrize("factory,T", [(lambda: henon_heiles_3scale(0.1, 0.01), 0.5),
                                       (lambda: hamiltonian_4scale(0.1, 0.05, 0.02), 0.3)])
def test_w_system_agrees_with_original(factory, T):
    # the derived w-field against RK45 on the (p, q) system mapped through to_w
    pb = factory()
    step = pb.scales.finest_period / 200
    w_run = rk45_reference(pb.field, pb.scales, pb.x0, T, step=step)
    p0, q0 = pb.from_w(pb.x0, 0.0)
    pq_run = rk45_reference(pb.field, pb.scales, np.r_[p0, q0], T, step=step, rhs=pb.pq_rhs)
    dof = pb.dof
    w_end = pb.to_w(pq_run.x[-1, :dof], pq_run.x[-1, dof:], T)
    half = rk45_reference(pb.field, pb.scales, pb.x0, T, step=step / 2)
    bar = np.abs(half.x[-1] - w_run.x[-1]).max()
    assert np.abs(w_end - w_run.x[-1]).max() <= max(100 * bar, 1e-10)


def test_hamiltonian_conserved_by_fine_reference():
    pb = hamiltonian_4scale(0.1, 0.05, 0.02)
    step = pb.scales.finest_period / 200
    a = rk45_reference(pb.field, pb.scales, pb.x0, 0.3, step=step, invariant=pb.invariant)
    b = rk45_reference(pb.field, pb.scales, pb.x0, 0.3, step=step / 2, invariant=pb.invariant)
    drift = np.abs(a.invariant - a.invariant[0]).max()
    bar = np.abs(a.invariant[-1] - b.invariant[-1])
    assert drift <= max(10 * bar, 1e-12 * abs(a.invariant[0]))


def test_registry():
    names = list_problems()
    for n in ("hh3", "hh4", "expsin", "decay", *PRESETS):
        assert n in names
    pb = get_problem("hh3", eps=[0.05])
    assert pb.scales.eps == pytest.approx((0.05, 0.0025))
    pb = get_problem("hh4", eps=[1e-2, 1e-3, 1e-4])
    assert pb.scales.eps == (1e-2, 1e-3, 1e-4)
    with pytest.raises(ConfigurationError):
        get_problem("nope")


def test_diagnostics_preset():
    pb = get_problem("hh3-diagnostics")
    assert pb.scales.eps == (1e-4, 1e-8)
    np.testing.assert_allclose(pb.x0, 0.2)


def test_analytic_decomposition_reconstructs_hh4(hh4_decomp):
    d = hh4_decomp
    rng = np.random.default_rng(9)
    for _ in range(30):
        th = rng.uniform(0, 1, 3)
        w = rng.uniform(-0.5, 0.5, 8)
        total = d.mean(w) + sum(d.fluct(k, th[:k], w) for k in (1, 2, 3))
        np.testing.assert_allclose(total, d.field.point(th, w), atol=1e-12)


def test_solver_config_does_not_alter_analytic(hh3):
    a = hh3.decomposition(SolverConfig(quad_nodes=8))
    b = hh3.decomposition(SolverConfig(quad_nodes=12))
    w = np.full(6, 0.3)
    np.testing.assert_allclose(a.anti(2, np.array([0.2, 0.7]), w), b.anti(2, np.array([0.2, 0.7]), w))
