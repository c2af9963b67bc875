"""
Outer (Euler) flow: the rigid-rotation base state and the linearized orders.

Each linearized order is a harmonic extension: rv is harmonic with the boundary
layer's normal-velocity trace as Dirichlet data, which gives the r^{n-1} series
below.  Outer orders are stored by their Fourier coefficients, so values and
exact r-derivatives can be evaluated on any radial grid.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import expit

from .fields import (DiskField, PeriodicField, cumulative_integral, dtheta,
                     theta_antiderivative, theta_grid)

__all__ = [
    "couette_base", "cutoff_chi", "HarmonicSeries", "RadialCorrector",
    "OuterOrder", "EulerOrder", "harmonic_velocity_solve",
    "euler_pressure_solve", "higher_order_euler", "quadratic_forcing",
]

COEFF_DROP = 1e-14


def couette_base(a, r, n_theta):
    """u_e = a r, p_e = a² r²/2 on the (θ, r) grid."""
    if a <= 0:
        raise ValueError("a must be positive")
    r = np.asarray(r, dtype=float)
    ones = np.ones((n_theta, 1))
    return (DiskField(ones * (a * r)[None, :], r, "tangential"),
            DiskField(ones * (0.5 * a * a * r * r)[None, :], r, "scalar"))


def _falling(n, m):
    out = np.ones_like(n, dtype=float)
    for j in range(m):
        out = out * (n - j)
    return out


def cutoff_chi(r, deriv=0):
    """C^∞ cut-off: 0 on [0, 1/2], 1 on [3/4, 1], S(t) = e^{-1/t}/(e^{-1/t}+e^{-1/(1-t)}).

    ``deriv`` may be 0..4; derivatives are exact (Faà di Bruno on the logistic
    form S = 1/(1 + e^h), h = 1/t - 1/(1-t)).
    """
    r = np.asarray(r, dtype=float)
    t = (r - 0.5) / 0.25
    out = np.zeros_like(t)
    if deriv == 0:
        out[t >= 1 - 2e-3] = 1.0
    mask = (t > 2e-3) & (t < 1 - 2e-3)
    tm = t[mask]
    h = [1.0 / tm - 1.0 / (1 - tm)]
    for m in range(1, 5):
        h.append((-1) ** m * factorial(m) / tm ** (m + 1)
                 - factorial(m) / (1 - tm) ** (m + 1))
    s = expit(-h[0])
    w = s * s - s  # ds/dh as a polynomial in s
    p1 = w
    p2 = (2 * s - 1) * w
    p3 = (6 * s * s - 6 * s + 1) * w
    p4 = (24 * s ** 3 - 36 * s * s + 14 * s - 1) * w
    h1, h2, h3, h4 = h[1], h[2], h[3], h[4]
    if deriv == 0:
        val = s
    elif deriv == 1:
        val = p1 * h1
    elif deriv == 2:
        val = p2 * h1 ** 2 + p1 * h2
    elif deriv == 3:
        val = p3 * h1 ** 3 + 3 * p2 * h1 * h2 + p1 * h3
    elif deriv == 4:
        val = (p4 * h1 ** 4 + 6 * p3 * h1 ** 2 * h2
               + p2 * (3 * h2 ** 2 + 4 * h1 * h3) + p1 * h4)
    else:
        raise ValueError("cutoff derivatives are available up to order 4")
    out[mask] = val * 4.0 ** deriv
    return out


class HarmonicSeries:
    """v = Σ r^{n-1}(a_n cos nθ + b_n sin nθ), u = Σ r^{n-1}(-a_n sin nθ + b_n cos nθ).

    Stored as complex coefficients ĉ_n of e^{inθ} in the wall trace of v.
    """

    def __init__(self, coeffs, n_theta):
        self.n_theta = n_theta
        c = np.asarray(coeffs, dtype=complex).copy()
        c[np.abs(c) < COEFF_DROP] = 0.0
        self.c = c  # rfft-ordered, length n_theta//2 + 1, c[0] = 0

    @classmethod
    def from_trace(cls, trace, mean_tol=1e-12):
        n = trace.n_theta
        ch = np.fft.rfft(trace.values) / n
        scale = max(np.max(np.abs(trace.values)), 1.0)
        if abs(ch[0]) > mean_tol * scale:
            raise ValueError("boundary trace must have zero mean")
        ch[0] = 0.0
        ch[-1] = 0.0
        return cls(ch, n)

    def _eval(self, r, dr, factor, power_shift=0):
        r = np.asarray(r, dtype=float)
        k = np.arange(self.c.shape[0], dtype=float)
        expo = k - 1 + power_shift
        ff = _falling(expo, dr)
        with np.errstate(divide="ignore", invalid="ignore"):
            rp = np.where(ff[:, None] != 0.0,
                          r[None, :] ** np.maximum(expo - dr, 0)[:, None], 0.0)
        modes = (factor * self.c * ff)[:, None] * rp * self.n_theta
        modes[0] = 0.0
        return np.fft.irfft(modes, n=self.n_theta, axis=0)

    def v(self, r, dr=0):
        return self._eval(r, dr, 1.0)

    def u(self, r, dr=0):
        return self._eval(r, dr, 1j)

    def p(self, r, a, dr=0):
        """Pressure of the order: mode n carries a(n-2)/(in) ĉ_n r^n."""
        k = np.arange(self.c.shape[0], dtype=float)
        fac = np.zeros_like(self.c)
        fac[1:] = a * (k[1:] - 2) / (1j * k[1:])
        return self._eval(r, dr, fac, power_shift=1)


class RadialCorrector:
    """A(r) = a_i r + r∫_0^r φ/(2s) ds - (1/r)∫_0^r sφ/2 ds with A(1) = 0.

    φ = -A∞(rχ'' + χ' - χ/r).  With these quadratures rA'' + A' - A/r = φ, so
    χA∞ + A is annihilated by the radial operator r d²/dr² + d/dr - 1/r.
    """

    def __init__(self, A_inf, n_gauss=24, n_panels=16):
        self.A_inf = float(A_inf)
        self._xg, self._wg = np.polynomial.legendre.leggauss(n_gauss)
        self._panels = n_panels
        i1, i2 = self._integrals(np.array([1.0]))
        self.a_i = float(i2[0] - i1[0])

    def phi(self, r, deriv=0):
        r = np.asarray(r, dtype=float)
        c0, c1, c2 = cutoff_chi(r), cutoff_chi(r, 1), cutoff_chi(r, 2)
        if deriv == 0:
            return -self.A_inf * (r * c2 + c1 - c0 / r)
        c3 = cutoff_chi(r, 3)
        # d/dr of rχ'' + χ' - χ/r
        return -self.A_inf * (r * c3 + 2 * c2 - c1 / r + c0 / r ** 2)

    def _integrals(self, r):
        r = np.asarray(r, dtype=float)
        lo = 0.5
        hi = np.maximum(r, lo)
        i1 = np.zeros_like(r)
        i2 = np.zeros_like(r)
        if self.A_inf == 0.0:
            return i1, i2
        edges = lo + (hi[:, None] - lo) * np.linspace(0, 1, self._panels + 1)[None, :]
        for p in range(self._panels):
            a0, b0 = edges[:, p], edges[:, p + 1]
            s = 0.5 * (b0 - a0)[:, None] * self._xg[None, :] + 0.5 * (a0 + b0)[:, None]
            w = 0.5 * (b0 - a0)[:, None] * self._wg[None, :]
            ph = self.phi(s.ravel()).reshape(s.shape)
            i1 += np.sum(w * ph / (2 * s), axis=1)
            i2 += np.sum(w * s * ph / 2, axis=1)
        return i1, i2

    def A(self, r, dr=0):
        r = np.asarray(r, dtype=float)
        if self.A_inf == 0.0:
            return np.zeros_like(r)
        i1, i2 = self._integrals(r)
        if dr == 0:
            return self.a_i * r + r * i1 - i2 / r
        if dr == 1:
            return self.a_i + i1 + i2 / r ** 2
        ph = self.phi(r)
        if dr == 2:
            return ph / r - 2 * i2 / r ** 3
        if dr == 3:
            return self.phi(r, 1) / r - 2 * ph / r ** 2 + 6 * i2 / r ** 4
        raise ValueError("corrector derivatives are available up to order 3")

    def shift(self, r, dr=0):
        """χ(r)A∞ + A(r) and its r-derivatives."""
        return self.A_inf * cutoff_chi(r, dr) + self.A(r, dr)

    def ode_residual(self, r):
        """r A'' + A' - A/r - φ."""
        return r * self.A(r, 2) + self.A(r, 1) - self.A(r) / r - self.phi(r)


def quadratic_forcing(lower, r, dr=0):
    """Quadratic products of a lower order that force the next outer order.

    Returns (N_θ, N_r) with
    N_θ = u ∂_θu + v r∂_ru + uv and N_r = u ∂_θv + v r∂_rv - u²,
    or their r-derivatives when ``dr = 1``.
    """
    u0, v0 = lower.u(r), lower.v(r)
    u1, v1 = lower.u(r, 1), lower.v(r, 1)
    ut, vt = dtheta(u0), dtheta(v0)
    if dr == 0:
        nt = u0 * ut + v0 * r * u1 + u0 * v0
        nr = u0 * vt + v0 * r * v1 - u0 * u0
        return nt, nr
    u2, v2 = lower.u(r, 2), lower.v(r, 2)
    u1t, v1t = dtheta(u1), dtheta(v1)
    nt = (u1 * ut + u0 * u1t + v1 * r * u1 + v0 * (u1 + r * u2)
          + u1 * v0 + u0 * v1)
    nr = (u1 * vt + u0 * v1t + v1 * r * v1 + v0 * (v1 + r * v2) - 2 * u0 * u1)
    return nt, nr


class OuterOrder:
    """One outer order: harmonic series, optional corrector, optional quadratic source.

    ``u``/``v`` return (n_theta, n_r) arrays of the modified velocities
    (ũ = u + χA∞ + A, ṽ = v) or their r-derivatives.  Pressure gradients are
    assembled from the momentum equations of the order, with the quadratic
    source of the previous order when present.
    """

    def __init__(self, series, a, corrector=None, source=None):
        self.series = series
        self.a = a
        self.corrector = corrector
        self.source = source

    @property
    def n_theta(self):
        return self.series.n_theta

    def with_corrector(self, corrector):
        return OuterOrder(self.series, self.a, corrector, self.source)

    def u(self, r, dr=0):
        out = self.series.u(r, dr)
        if self.corrector is not None:
            out = out + self.corrector.shift(r, dr)[None, :]
        return out

    def v(self, r, dr=0):
        return self.series.v(r, dr)

    def _shift_int(self, r):
        if self.corrector is None:
            return np.zeros_like(r)
        # ∫_0^r (χA∞ + A) ds; A = a_i s on [0, 1/2]
        rr = np.asarray(r, dtype=float)
        fine = np.union1d(np.linspace(1e-8, 1.0, 2001), rr)
        g = self.corrector.shift(fine)
        cum = cumulative_integral(g, fine) + 0.5 * self.corrector.a_i * fine[0] ** 2
        return np.interp(rr, fine, cum)

    def _source_mode0(self, r):
        """φ_q(r) = -∫_0^r mean_θ(N_r)/s ds."""
        rr = np.asarray(r, dtype=float)
        fine = np.union1d(np.linspace(1e-6, 1.0, 4001), rr)
        _, nr = quadratic_forcing(self.source, fine)
        m = np.mean(nr, axis=0) / fine
        cum = cumulative_integral(m, fine)
        return np.interp(rr, fine, -cum)

    def p(self, r):
        r = np.asarray(r, dtype=float)
        out = self.series.p(r, self.a)
        if self.corrector is not None:
            out = out + 2 * self.a * self._shift_int(r)[None, :]
        if self.source is not None:
            nt, _ = quadratic_forcing(self.source, r)
            out = out - theta_antiderivative(nt, mean_tol=1e-8) + self._source_mode0(r)[None, :]
        return out

    def p_theta(self, r):
        r = np.asarray(r, dtype=float)
        out = dtheta(self.series.p(r, self.a))
        if self.source is not None:
            nt, _ = quadratic_forcing(self.source, r)
            out = out - (nt - np.mean(nt, axis=0))
        return out

    def p_r(self, r):
        r = np.asarray(r, dtype=float)
        out = self.series.p(r, self.a, dr=1)
        if self.corrector is not None:
            out = out + 2 * self.a * self.corrector.shift(r)[None, :]
        if self.source is not None:
            nt1, _ = quadratic_forcing(self.source, r, dr=1)
            _, nr = quadratic_forcing(self.source, r)
            out = out - theta_antiderivative(nt1, mean_tol=1e-8) - (np.mean(nr, axis=0) / r)[None, :]
        return out

    def momentum_residual(self, r):
        """Residuals of the order's linearized Euler equations on the grid."""
        r = np.asarray(r, dtype=float)
        a = self.a
        u, v = self.u(r), self.v(r)
        rt = a * r * dtheta(u) + 2 * a * r * v + self.p_theta(r)
        rr = a * r * dtheta(v) - 2 * a * r * u + r * self.p_r(r)
        if self.source is not None:
            nt, nr = quadratic_forcing(self.source, r)
            rt = rt + nt
            rr = rr + nr
        div = dtheta(u) + r * self.v(r, 1) + v
        return rt, rr, div

    def viscous_identity(self, r):
        """r²Δu - u + 2∂_θv, which vanishes for every outer order."""
        r = np.asarray(r, dtype=float)
        u = self.u(r)
        lap = self.u(r, 2) + self.u(r, 1) / r + dtheta(u, 2) / r ** 2
        return r ** 2 * lap - u + 2 * dtheta(self.v(r))


@dataclass
class EulerOrder:
    u: DiskField
    v: DiskField
    p: DiskField
    boundary_trace: PeriodicField
    outer: OuterOrder


def _grid_theta_fields(order, r):
    r = np.asarray(r, dtype=float)
    return (DiskField(order.u(r), r, "tangential"), DiskField(order.v(r), r, "radial"))


def harmonic_velocity_solve(boundary_trace, r, a=1.0):
    """Harmonic extension of the trace; pressure is attached by euler_pressure_solve."""
    series = HarmonicSeries.from_trace(boundary_trace)
    outer = OuterOrder(series, a)
    u, v = _grid_theta_fields(outer, r)
    return EulerOrder(u=u, v=v, p=None, boundary_trace=boundary_trace, outer=outer)


def euler_pressure_solve(order, a, lower_order_products=None):
    """Pressure from the θ-antiderivative of the θ-momentum equation plus a gauge φ(r).

    ``lower_order_products`` is an optional pair of DiskFields (N_θ, N_r) added
    to the θ and r equations.  φ solves r φ' = -mean_θ(r-equation terms) with
    φ(0) = 0; the grid is assumed to start close to r = 0.
    """
    r = order.u.r
    u, v = order.u.values, order.v.values
    st = a * r * dtheta(u) + 2 * a * r * v
    sr = a * r * dtheta(v) - 2 * a * r * u
    if lower_order_products is not None:
        st = st + lower_order_products[0].values
        sr = sr + lower_order_products[1].values
    p = -theta_antiderivative(st, mean_tol=1e-8)
    phi = -cumulative_integral(np.mean(sr, axis=0) / r, r)
    return DiskField(p + phi[None, :], r, "scalar")


def higher_order_euler(order_index, boundary_trace, known_lower_orders, r, a):
    """Outer order i >= 2: the same harmonic solve, pressure with lower-order products."""
    if order_index < 2:
        raise ValueError("higher_order_euler handles orders >= 2")
    series = HarmonicSeries.from_trace(boundary_trace)
    lower = known_lower_orders[-1] if known_lower_orders else None
    outer = OuterOrder(series, a, source=lower if order_index == 2 else None)
    u, v = _grid_theta_fields(outer, r)
    r = np.asarray(r, dtype=float)
    return EulerOrder(u=u, v=v, p=DiskField(outer.p(r), r, "scalar"),
                      boundary_trace=boundary_trace, outer=outer)
