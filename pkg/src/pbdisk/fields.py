"""
Periodic-spectral and grid machinery shared by every solver.

Conventions
-----------
Arrays of field samples are laid out with θ on axis 0 and the radial or
boundary-layer coordinate on the last axis.  θ nodes are θ_j = 2πj/n with n a
power of two.  Fourier coefficients follow numpy's ordering and are normalised
so that ``coeffs[k]`` is ĝ(k) in g(θ) = Σ ĝ(k) e^{ikθ}.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline, PchipInterpolator, make_interp_spline

__all__ = [
    "PeriodicField", "LayerField", "DiskField",
    "check_n_theta", "theta_grid", "wavenumbers", "fourier_roundtrip",
    "dtheta", "theta_derivative", "theta_antiderivative", "periodic_quadrature",
    "dealiased_product", "cumulative_integral", "half_line_integral",
    "fd_weights", "diff_matrix", "apply_along_y", "monotone_interpolate",
    "spline_resample",
]


def check_n_theta(n):
    n = int(n)
    if n < 4 or n & (n - 1):
        raise ValueError(f"n_theta must be a power of two >= 4, got {n}")
    return n


def theta_grid(n):
    n = check_n_theta(n)
    return 2.0 * np.pi * np.arange(n) / n


def wavenumbers(n):
    """Signed integer wavenumbers in numpy FFT order."""
    return np.fft.fftfreq(n, d=1.0 / n)


@dataclass(frozen=True)
class PeriodicField:
    """Real samples of a 2π-periodic function on the uniform θ grid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        check_n_theta(v.shape[0])
        if v.ndim != 1:
            raise ValueError("PeriodicField values must be one-dimensional")
        object.__setattr__(self, "values", v)

    @property
    def n_theta(self):
        return self.values.shape[0]

    @property
    def theta(self):
        return theta_grid(self.n_theta)

    @property
    def coeffs(self):
        return np.fft.fft(self.values) / self.n_theta

    @classmethod
    def from_function(cls, func, n_theta):
        return cls(np.asarray(func(theta_grid(n_theta)), dtype=float)
                   * np.ones(n_theta))

    @classmethod
    def from_coeffs(cls, coeffs):
        c = np.asarray(coeffs, dtype=complex)
        return cls(np.real(np.fft.ifft(c * c.shape[0])))

    @classmethod
    def from_modes(cls, modes, n_theta):
        """Build Σ c_n cos nθ + s_n sin nθ from ``[(n, c_n, s_n), ...]``."""
        th = theta_grid(n_theta)
        vals = np.zeros(n_theta)
        for n, c, s in modes:
            vals += c * np.cos(n * th) + s * np.sin(n * th)
        return cls(vals)

    def mode(self, k):
        return self.coeffs[int(k) % self.n_theta]

    def mean(self):
        return float(np.mean(self.values))


@dataclass(frozen=True)
class LayerField:
    """Boundary-layer field on [0,2π) x [-Y_max, 0] (or the ψ analogue)."""

    values: np.ndarray
    y: np.ndarray
    decaying: bool = False
    coord: str = "Y"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if v.ndim != 2 or v.shape[1] != y.shape[0]:
            raise ValueError("LayerField values must have shape (n_theta, n_y)")
        check_n_theta(v.shape[0])
        if y[-1] != 0.0 or np.any(np.diff(y) <= 0):
            raise ValueError("layer grid must increase strictly and end at 0")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "y", y)

    @property
    def n_theta(self):
        return self.values.shape[0]

    @property
    def theta(self):
        return theta_grid(self.n_theta)

    def decay_ok(self, decay_tol=1e-6):
        scale = np.max(np.abs(self.values))
        if scale == 0.0:
            return True
        return bool(np.max(np.abs(self.values[:, 0])) <= decay_tol * scale)

    def with_values(self, values, decaying=None):
        return LayerField(values, self.y,
                          self.decaying if decaying is None else decaying,
                          self.coord)


@dataclass(frozen=True)
class DiskField:
    """Field on [0,2π) x (0,1] in polar components."""

    values: np.ndarray
    r: np.ndarray
    component: str = "scalar"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if v.ndim != 2 or v.shape[1] != r.shape[0]:
            raise ValueError("DiskField values must have shape (n_theta, n_r)")
        if self.component not in ("tangential", "radial", "scalar"):
            raise ValueError(f"unknown component tag {self.component!r}")
        if np.any(r <= 0) or np.any(r > 1.0 + 1e-14):
            raise ValueError("radial nodes must lie in (0, 1]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "r", r)

    @property
    def n_theta(self):
        return self.values.shape[0]

    @property
    def theta(self):
        return theta_grid(self.n_theta)


def fourier_roundtrip(field):
    """Forward then inverse transform; returns a new PeriodicField."""
    check_n_theta(field.n_theta)
    return PeriodicField.from_coeffs(field.coeffs)


def dtheta(values, order=1):
    """Spectral θ-derivative of samples along axis 0; Nyquist mode zeroed."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if order == 0:
        return v.copy()
    vh = np.fft.rfft(v, axis=0)
    k = np.arange(vh.shape[0], dtype=float)
    mult = (1j * k) ** order
    mult[-1] = 0.0  # Nyquist
    shape = (-1,) + (1,) * (v.ndim - 1)
    return np.fft.irfft(vh * mult.reshape(shape), n=n, axis=0)


def theta_derivative(field, order=1):
    if isinstance(field, PeriodicField):
        return PeriodicField(dtheta(field.values, order))
    if isinstance(field, LayerField):
        return field.with_values(dtheta(field.values, order))
    if isinstance(field, DiskField):
        return DiskField(dtheta(field.values, order), field.r, field.component)
    return dtheta(field, order)


def theta_antiderivative(values, mean_tol=1e-10):
    """Zero-mean spectral antiderivative (division of mode k by ik).

    Raises ValueError if the θ-mean exceeds ``mean_tol`` times the field scale.
    """
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    vh = np.fft.rfft(v, axis=0)
    scale = max(np.max(np.abs(v)), 1.0)
    if np.max(np.abs(vh[0])) / n > mean_tol * scale:
        raise ValueError("antiderivative requested of a field with nonzero θ-mean")
    k = np.arange(vh.shape[0], dtype=float)
    inv = np.zeros(vh.shape[0], dtype=complex)
    inv[1:-1] = 1.0 / (1j * k[1:-1])
    shape = (-1,) + (1,) * (v.ndim - 1)
    return np.fft.irfft(vh * inv.reshape(shape), n=n, axis=0)


def periodic_quadrature(field):
    """∫_0^{2π} g dθ = 2π ĝ(0)."""
    v = field.values if isinstance(field, PeriodicField) else np.asarray(field)
    return 2.0 * np.pi * np.mean(v, axis=0)


def dealiased_product(f, g):
    """Product of two θ-sampled arrays formed on a 3/2-padded grid."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n = f.shape[0]
    m = 3 * n // 2
    fh = np.fft.rfft(f, axis=0)
    gh = np.fft.rfft(g, axis=0)
    fh[-1] = 0.0
    gh[-1] = 0.0
    pad = [(0, m // 2 + 1 - fh.shape[0])] + [(0, 0)] * (f.ndim - 1)
    fp = np.fft.irfft(np.pad(fh, pad), n=m, axis=0) * (m / n)
    gp = np.fft.irfft(np.pad(gh, pad), n=m, axis=0) * (m / n)
    ph = np.fft.rfft(fp * gp, axis=0)[: n // 2 + 1] * (n / m)
    ph[-1] = 0.0
    return np.fft.irfft(ph, n=n, axis=0)


def cumulative_integral(values, y, axis=-1):
    """∫_{y[0]}^{y} of samples, via the antiderivative of an interpolating spline.

    Quintic (sixth-order accurate) when there are at least six nodes, else the
    not-a-knot cubic.  Zero at the first node.
    """
    y = np.asarray(y, dtype=float)
    if y.size >= 6:
        anti = make_interp_spline(y, values, k=5, axis=axis).antiderivative()
    else:
        anti = CubicSpline(y, values, axis=axis).antiderivative()
    out = anti(y)
    return out - np.take(out, [0], axis=axis)


def half_line_integral(field):
    """Cumulative integral from -Y_max, which stands in for -∞."""
    if not field.decaying:
        raise ValueError("half_line_integral needs a field flagged as decaying")
    out = cumulative_integral(field.values, field.y, axis=1)
    out[:, 0] = 0.0
    return field.with_values(out, decaying=False)


def fd_weights(z, x, m):
    """Fornberg weights for the derivatives 0..m at z from nodes x.

    Returns an array of shape (m+1, len(x)).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def diff_matrix(y, m, accuracy=4):
    """Sparse finite-difference matrix for d^m/dy^m on the nodes ``y``.

    Centred stencils in the interior, one-sided stencils of width m+accuracy
    near the ends.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    half = (m + accuracy - 1) // 2
    wb = m + accuracy
    rows, cols, vals = [], [], []
    for i in range(n):
        if i - half >= 0 and i + half <= n - 1:
            idx = np.arange(i - half, i + half + 1)
        elif i - half < 0:
            idx = np.arange(0, min(wb, n))
        else:
            idx = np.arange(max(n - wb, 0), n)
        w = fd_weights(y[i], y[idx], m)[m]
        rows.extend([i] * idx.size)
        cols.extend(idx)
        vals.extend(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def apply_along_y(matrix, values):
    """Apply an (n_y x n_y) operator along the last axis of ``values``."""
    return np.asarray((matrix @ np.asarray(values).T).T)


def monotone_interpolate(x_src, y_src, x_dst):
    """Shape-preserving (PCHIP) interpolation; exact on the source nodes."""
    x_src = np.asarray(x_src, dtype=float)
    x_dst = np.asarray(x_dst, dtype=float)
    if np.any(np.diff(x_src) <= 0):
        raise ValueError("x_src must be strictly increasing")
    span = x_src[-1] - x_src[0]
    tol = 1e-12 * max(span, 1.0)
    if x_dst.min() < x_src[0] - tol or x_dst.max() > x_src[-1] + tol:
        raise ValueError("destination points outside the source range")
    return PchipInterpolator(x_src, y_src, axis=-1)(np.clip(x_dst, x_src[0], x_src[-1]))


def spline_resample(y_src, values, y_dst, deriv=0, k=5):
    """Degree-k interpolating spline along the last axis, with derivatives."""
    spl = make_interp_spline(y_src, values, k=k, axis=-1)
    if deriv:
        spl = spl.derivative(deriv)
    return spl(y_dst)
