import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbdisk.euler import (HarmonicSeries, OuterOrder, RadialCorrector, couette_base,
                          cutoff_chi, euler_pressure_solve, harmonic_velocity_solve,
                          higher_order_euler)
from pbdisk.fields import PeriodicField, dtheta, theta_grid
from pbdisk.prandtllin import corrector_A, modify_euler

R = np.linspace(0.01, 1.0, 60)
TH = theta_grid(32)[:, None]


def trace(func, n=32):
    return PeriodicField(func(theta_grid(n)))


@pytest.mark.parametrize("n", [1, 2])
def test_single_mode_closed_form(n):
    order = harmonic_velocity_solve(trace(lambda t: np.cos(n * t)), R)
    rp = R[None, :] ** (n - 1)
    assert np.max(np.abs(order.v.values - rp * np.cos(n * TH))) < 1e-12
    assert np.max(np.abs(order.u.values + rp * np.sin(n * TH))) < 1e-12


def test_sine_trace_closed_form():
    order = harmonic_velocity_solve(trace(lambda t: np.sin(3 * t)), R)
    assert np.max(np.abs(order.v.values - R ** 2 * np.sin(3 * TH))) < 1e-12
    assert np.max(np.abs(order.u.values - R ** 2 * np.cos(3 * TH))) < 1e-12


def test_trace_with_mean_rejected():
    with pytest.raises(ValueError):
        HarmonicSeries.from_trace(trace(lambda t: 1 + np.cos(t)))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_divergence_and_viscous_identity(c):
    f = lambda t: sum(c[k] * np.cos((k + 1) * t) + c[5 - k] * np.sin((k + 1) * t)
                      for k in range(3))
    o = OuterOrder(HarmonicSeries.from_trace(trace(f)), 1.0)
    div = dtheta(o.u(R)) + o.v(R) + R * o.v(R, 1)
    assert np.max(np.abs(div)) < 1e-10
    assert np.max(np.abs(o.viscous_identity(R))) < 1e-10


def test_linearity():
    t1, t2 = trace(np.cos), trace(lambda t: np.sin(2 * t) - 0.5 * np.cos(5 * t))
    s = PeriodicField(2.0 * t1.values - 3.0 * t2.values)
    o1, o2, o3 = (harmonic_velocity_solve(t, R) for t in (t1, t2, s))
    assert np.max(np.abs(o3.u.values - 2 * o1.u.values + 3 * o2.u.values)) < 1e-12
    assert np.max(np.abs(o3.v.values - 2 * o1.v.values + 3 * o2.v.values)) < 1e-12


def test_outer_derivatives_match_finite_differences():
    o = OuterOrder(HarmonicSeries.from_trace(trace(lambda t: np.cos(3 * t))), 1.0)
    r, h = np.array([0.7]), 1e-5
    for k in range(3):
        fd = (o.u(r + h, k) - o.u(r - h, k)) / (2 * h)
        assert np.max(np.abs(fd - o.u(r, k + 1))) < 1e-8


def test_pressure_momentum_residual():
    o = OuterOrder(HarmonicSeries.from_trace(trace(lambda t: np.cos(t) + np.sin(2 * t))), 1.2)
    rt, rr, div = o.momentum_residual(R)
    assert max(np.max(np.abs(rt)), np.max(np.abs(rr)), np.max(np.abs(div))) < 1e-8


def test_grid_pressure_solve_matches_series():
    r = np.linspace(1e-4, 1.0, 4001)
    a = 1.1
    order = harmonic_velocity_solve(trace(lambda t: np.cos(2 * t)), r, a)
    p = euler_pressure_solve(order, a)
    assert np.max(np.abs(p.values - order.outer.p(r))) < 1e-9


def test_order_two_outer_with_source(stack):
    rt, rr, div = stack.outer[2].momentum_residual(R)
    assert max(np.max(np.abs(rt)), np.max(np.abs(rr)), np.max(np.abs(div))) < 1e-8


def test_higher_order_euler_requires_order_two():
    with pytest.raises(ValueError):
        higher_order_euler(1, trace(np.cos), [], R, 1.0)
    o1 = OuterOrder(HarmonicSeries.from_trace(trace(np.cos)), 1.0)
    e2 = higher_order_euler(2, trace(lambda t: np.sin(2 * t)), [o1], R, 1.0)
    rt, rr, _ = e2.outer.momentum_residual(R)
    assert max(np.max(np.abs(rt)), np.max(np.abs(rr))) < 1e-8


def test_couette_base():
    u, p = couette_base(1.5, R, 8)
    assert np.allclose(u.values, 1.5 * R)
    assert np.allclose(p.values, 0.5 * 2.25 * R ** 2)
    with pytest.raises(ValueError):
        couette_base(0.0, R, 8)


def test_cutoff_values():
    assert cutoff_chi(np.array([0.0, 0.3, 0.5]))[...].max() == 0.0
    assert np.all(cutoff_chi(np.array([0.75, 0.9, 1.0])) == 1.0)
    assert cutoff_chi(np.array([0.625]))[0] == pytest.approx(0.5, abs=1e-15)
    r = np.linspace(0, 1, 501)
    c = cutoff_chi(r)
    assert np.all(np.diff(c) >= 0)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_cutoff_derivatives(k):
    r, h = np.linspace(0.52, 0.73, 15), 1e-6
    fd = (cutoff_chi(r + h, k) - cutoff_chi(r - h, k)) / (2 * h)
    scale = max(1.0, np.max(np.abs(cutoff_chi(r, k + 1))))
    assert np.max(np.abs(fd - cutoff_chi(r, k + 1))) < 1e-5 * scale


def test_corrector_boundary_and_interior():
    c = RadialCorrector(0.37)
    assert c.A(np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-14)
    r = np.linspace(0.01, 0.5, 20)
    assert np.allclose(c.A(r), c.a_i * r, atol=1e-15)
    assert c.shift(np.array([1.0]))[0] == pytest.approx(0.37, abs=1e-14)


def test_corrector_ode_by_finite_differences():
    c = RadialCorrector(-0.8)
    r, h = np.linspace(0.45, 0.98, 30), 1e-3
    A = [c.A(r + k * h) for k in range(-3, 4)]
    a2 = (2 * A[0] - 27 * A[1] + 270 * A[2] - 490 * A[3] + 270 * A[4] - 27 * A[5]
          + 2 * A[6]) / (180 * h * h)
    a1 = (-A[0] + 9 * A[1] - 45 * A[2] + 45 * A[4] - 9 * A[5] + A[6]) / (60 * h)
    # the quadratures solve rA'' + A' - A/r = φ; |φ| reaches ~90 near r = 1/2
    scale = np.max(np.abs(c.phi(np.linspace(0.5, 1.0, 2001))))
    assert np.max(np.abs(r * a2 + a1 - A[3] / r - c.phi(r))) < 1e-6 * scale
    assert np.max(np.abs(c.ode_residual(r))) < 1e-12


def test_corrected_profile_is_viscous_free():
    c = RadialCorrector(0.5)
    r = np.linspace(0.05, 1.0, 50)
    s = [c.shift(r, k) for k in range(3)]
    assert np.max(np.abs(r ** 2 * s[2] + r * s[1] - s[0])) < 1e-12


def test_corrector_A_grid_variant():
    corr, a_i, A = corrector_A(0.2, r_grid=np.array([0.25, 1.0]))
    assert a_i == corr.a_i
    assert A[0] == pytest.approx(0.25 * a_i) and A[1] == pytest.approx(0.0, abs=1e-14)


def test_modify_euler_wall_shift():
    o = OuterOrder(HarmonicSeries.from_trace(trace(np.cos)), 1.0)
    m = modify_euler(o, 0.3)
    one = np.array([1.0])
    assert np.max(np.abs(m.u(one) - o.u(one) - 0.3)) < 1e-14
    assert np.max(np.abs(m.v(R) - o.v(R))) == 0.0
    rt, rr, _ = m.momentum_residual(R)
    assert max(np.max(np.abs(rt)), np.max(np.abs(rr))) < 1e-8
    with pytest.raises(ValueError):
        modify_euler(o, 0.3, RadialCorrector(0.2))
