"""
Leading-order nonlinear boundary layer near the wall r = 1.

The layer equations are recast in von Mises variables (θ, ψ), where the
unknown Q = U² - a² obeys a quasilinear heat equation.  Q is split as Q0 + Q
with Q0 the explicit solution of the linear problem carrying the wall data, and
the remainder is found from the fixed point Q = L(H(Q)).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.interpolate import make_interp_spline
from scipy.sparse.linalg import splu

from .fields import (LayerField, PeriodicField, cumulative_integral, diff_matrix,
                     dtheta, half_line_integral, periodic_quadrature)

__all__ = [
    "PhysicalParams", "VonMisesSolution", "LayerSeparationError",
    "ContractionFailure", "batchelor_wood_constant", "boundary_data_g",
    "psi_grid", "solve_Q0", "LOperator", "apply_L", "nonlinear_H",
    "solve_prandtl_fixed_point", "von_mises_invert", "compute_vp1",
    "compute_pp1",
]


class LayerSeparationError(ArithmeticError):
    """The layer profile U² lost positivity."""


class ContractionFailure(RuntimeError):
    """The fixed-point map did not contract."""


def batchelor_wood_constant(alpha, eta, f):
    """a = sqrt(α² + η²/(2π) ∫ f² dθ)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    f2 = PeriodicField(f.values ** 2)
    return float(np.sqrt(alpha ** 2 + eta ** 2 * periodic_quadrature(f2) / (2 * np.pi)))


@dataclass(frozen=True)
class PhysicalParams:
    alpha: float
    eta: float
    f: PeriodicField

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        scale = max(np.max(np.abs(self.f.values)), 1.0)
        if abs(self.f.mean()) > 1e-14 * scale:
            raise ValueError("wall perturbation f must have zero mean")

    @property
    def a(self):
        return batchelor_wood_constant(self.alpha, self.eta, self.f)

    @property
    def n_theta(self):
        return self.f.n_theta

    def wall_speed(self):
        return self.alpha + self.eta * self.f.values


def boundary_data_g(params):
    """g(θ) = (α + ηf)² - a², which has zero mean."""
    return PeriodicField(params.wall_speed() ** 2 - params.a ** 2)


def psi_grid(psi_max, n_psi):
    return np.linspace(-psi_max, 0.0, n_psi)


def solve_Q0(g, u_e1, psi):
    """Q0 = Σ_{k≠0} ĝ(k) e^{ikθ} e^{α_k ψ}, α_k = sqrt(|k|/(2a))(1 + i sgn k)."""
    n = g.n_theta
    gh = np.fft.rfft(g.values)
    scale = max(np.max(np.abs(g.values)), 1.0)
    if abs(gh[0]) / n > 1e-12 * scale:
        raise ValueError("boundary data g must have zero mean")
    k = np.arange(gh.shape[0])
    alpha_k = np.sqrt(k / (2.0 * u_e1)) * (1 + 1j)
    modes = gh[:, None] * np.exp(alpha_k[:, None] * psi[None, :])
    modes[0] = 0.0
    modes[-1] = 0.0
    return LayerField(np.fft.irfft(modes, n=n, axis=0), psi, decaying=True, coord="psi")


class LOperator:
    """Per-mode solver for ikΦ - aΦ'' = ikΛ with Φ = 0 at both ends of the ψ grid.

    The sparse LU factors of each mode's banded matrix are computed once and
    reused across fixed-point iterations.
    """

    def __init__(self, psi, n_theta, u_e1, fd_order=4):
        self.psi = np.asarray(psi, dtype=float)
        self.n_theta = n_theta
        self.u_e1 = u_e1
        n = self.psi.size
        d2 = diff_matrix(self.psi, 2, fd_order).tolil()
        eye = sparse.identity(n, format="lil")
        self._lu = []
        for k in range(1, n_theta // 2):
            a_k = (1j * k) * eye - u_e1 * d2
            a_k = a_k.tolil()
            for row in (0, n - 1):
                a_k.rows[row] = [row]
                a_k.data[row] = [1.0]
            self._lu.append(splu(sparse.csc_matrix(a_k, dtype=complex)))

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        lh = np.fft.rfft(lam, axis=0)
        out = np.zeros_like(lh)
        for k, lu in enumerate(self._lu, start=1):
            rhs = 1j * k * lh[k]
            rhs[0] = 0.0
            rhs[-1] = 0.0
            out[k] = lu.solve(rhs)
        return np.fft.irfft(out, n=self.n_theta, axis=0)


def apply_L(Lambda, u_e1, fd_order=4, operator=None):
    """Φ = L(Λ): Φ_θ - aΦ_ψψ = Λ_θ, zero at ψ = 0 and ψ = -ψ_max, zero θ-mean."""
    op = operator or LOperator(Lambda.y, Lambda.n_theta, u_e1, fd_order)
    return Lambda.with_values(op(Lambda.values), decaying=True)


def nonlinear_H(Q, Q0, u_e1):
    """H = Q + Q0 - 2a sqrt(Q + Q0 + a²) + 2a²."""
    q = np.asarray(getattr(Q, "values", Q)) + np.asarray(getattr(Q0, "values", Q0))
    arg = q + u_e1 ** 2
    if np.min(arg) <= 0:
        raise LayerSeparationError("layer separation: U² is not positive")
    return q - 2 * u_e1 * np.sqrt(arg) + 2 * u_e1 ** 2


@dataclass
class VonMisesSolution:
    Q: LayerField
    Q0: LayerField
    U: LayerField
    a: float
    iterations: int
    final_contraction_ratio: float
    increments: list = field(default_factory=list)


def solve_prandtl_fixed_point(params, psi, tol=1e-11, max_iter=50,
                              relax=1.0, fd_order=4, eta_max=0.1):
    """Iterate Q <- L(H(Q)) from Q = 0 until the sup-norm increment is below tol.

    The contraction ratio reported is the largest ratio of successive
    increments among those above the round-off floor.
    """
    if params.eta > eta_max:
        raise ContractionFailure(f"contraction failure: eta={params.eta} exceeds {eta_max}")
    a = params.a
    g = boundary_data_g(params)
    q0 = solve_Q0(g, a, psi)
    op = LOperator(psi, params.n_theta, a, fd_order)
    q = np.zeros_like(q0.values)
    increments = []
    floor = 1e3 * np.finfo(float).eps * max(a ** 2, 1.0)
    it = 0
    for it in range(1, max_iter + 1):
        q_new = op(nonlinear_H(q, q0.values, a))
        if relax != 1.0:
            q_new = (1 - relax) * q + relax * q_new
        inc = float(np.max(np.abs(q_new - q)))
        increments.append(inc)
        q = q_new
        if len(increments) >= 2 and increments[-2] > floor and inc > floor \
                and inc >= increments[-2]:
            raise ContractionFailure("contraction failure: eta too large")
        if inc <= tol:
            break
    else:
        raise ContractionFailure("contraction failure: eta too large "
                                 f"(no convergence in {max_iter} iterations)")
    ratios = [increments[i + 1] / increments[i] for i in range(len(increments) - 1)
              if increments[i] > floor and increments[i + 1] > floor]
    ratio = max(ratios) if ratios else 0.0
    u2 = q + q0.values + a ** 2
    if np.min(u2) <= 0:
        raise LayerSeparationError("layer separation: U² is not positive")
    return VonMisesSolution(Q=q0.with_values(q), Q0=q0,
                            U=q0.with_values(np.sqrt(u2), decaying=False),
                            a=a, iterations=it, final_contraction_ratio=ratio,
                            increments=increments)


def von_mises_invert(solution, y):
    """u_p0(θ, Y) = U(θ, ψ(Y)) - a on the Y grid.

    Y(ψ) = ∫_0^ψ ds/U is built per θ column with a spline antiderivative, then U
    is resampled against Y with a quintic spline.
    """
    U = solution.U.values
    psi = solution.U.y
    y = np.asarray(y, dtype=float)
    if np.min(U) <= 0:
        raise LayerSeparationError("von Mises inversion needs U > 0")
    cum = cumulative_integral(1.0 / U, psi, axis=1)
    ycol = cum - cum[:, -1:]
    if np.max(ycol[:, 0]) > y[0]:
        raise ValueError("psi grid does not cover the Y range; enlarge psi_max")
    out = np.empty((U.shape[0], y.size))
    for j in range(U.shape[0]):
        out[j] = make_interp_spline(ycol[j], U[j] - solution.a, k=5)(y)
    out[:, -1] = U[:, -1] - solution.a
    return LayerField(out, y, decaying=True)


def compute_vp1(u_p0):
    """v_p1 = -∫_{-∞}^Y ∂_θ u_p0."""
    return half_line_integral(u_p0.with_values(-dtheta(u_p0.values), decaying=True))


def compute_pp1(u_p0, u_e1):
    """p_p1 = ∫_{-∞}^Y (u_p0² + 2a u_p0)."""
    integrand = u_p0.values ** 2 + 2 * u_e1 * u_p0.values
    out = half_line_integral(u_p0.with_values(integrand, decaying=True))
    return out.with_values(out.values, decaying=True)
