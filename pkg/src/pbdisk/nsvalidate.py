"""
Steady Navier-Stokes on the unit disk in vorticity-streamfunction form.

    ω = Δψ,   ψ_r ω_θ - ψ_θ ω_r = ε² r Δω,   u = ψ_r,  v = -ψ_θ / r,
    ψ(θ,1) = 0,  ψ_r(θ,1) = α + ηf(θ).

θ is collocated spectrally; r uses three-point finite differences on nodes
r_m = R((m + 1/2)/(n + 1/2)), m = 0..n, so that r_n = 1 and no node sits at the
origin.  The stencil at r_0 reaches the ghost -r_0, whose values are those at
(θ + π, r_0).  The second wall condition enters through a ghost node beyond the
wall, which gives the usual Thom-type formula for the wall vorticity.  Newton
steps use the exact Jacobian, factored by block-tridiagonal elimination with
dense (2n_θ x 2n_θ) blocks.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq

from .fields import (DiskField, PeriodicField, apply_along_y, diff_matrix, dtheta,
                     fd_weights, theta_grid)

__all__ = [
    "NSGrid", "NSSolution", "NewtonFailure", "make_grid", "solve_steady_ns",
    "rigid_rotation_guess", "guess_from_velocity", "vorticity", "error_norms",
    "interior_vorticity_deviation", "streamline_flux_diagnostic",
    "primitive_residual", "ns_residual",
]


class NewtonFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class NSGrid:
    n_theta: int
    r: np.ndarray
    grading: float

    @property
    def n(self):
        return self.r.size - 1

    @property
    def theta(self):
        return theta_grid(self.n_theta)


def make_grid(n_theta, n_r, grading=2.0):
    """``n_r`` interior nodes plus the wall node, graded toward r = 1.

    r = 1 - sinh(β(1-s))/sinh(β) with s uniform on half-shifted points; β = 0
    gives a uniform grid.
    """
    s = (np.arange(n_r + 1) + 0.5) / (n_r + 0.5)
    if grading > 0:
        r = 1.0 - np.sinh(grading * (1 - s)) / np.sinh(grading)
    else:
        r = s.copy()
    r[-1] = 1.0
    return NSGrid(n_theta, r, grading)


class _Operators:
    def __init__(self, grid):
        self.grid = grid
        r = grid.r
        n = grid.n
        T = grid.n_theta
        self.T = T
        eye = np.eye(T)
        self.Dt = dtheta(eye)
        self.Dt2 = dtheta(eye, 2)
        self.perm = (np.arange(T) + T // 2) % T
        P = np.zeros((T, T))
        P[np.arange(T), self.perm] = 1.0
        self.P = P
        # three-point weights at interior nodes 0..n-1 (columns: m-1, m, m+1)
        self.w1 = np.zeros((n, 3))
        self.w2 = np.zeros((n, 3))
        for m in range(n):
            left = -r[0] if m == 0 else r[m - 1]
            w = fd_weights(r[m], np.array([left, r[m], r[m + 1]]), 2)
            self.w1[m], self.w2[m] = w[1], w[2]
        self.h_wall = r[n] - r[n - 1]
        # Poisson row equilibration: the r²ψ_rr coefficient becomes O(1)
        self.p_scale = 1.0 / np.maximum(1.0, r[:n] ** 2 * np.abs(self.w2[:, 1]))

    def dr(self, f, w):
        """Apply three-point r-stencils to columns 0..n-1 of f (T, n+1)."""
        left = np.concatenate([f[self.perm, :1], f[:, :-2]], axis=1)
        return w[None, :, 0] * left + w[None, :, 1] * f[:, :-1] + w[None, :, 2] * f[:, 1:]


def _wall_speed(params_alpha, params_eta, f):
    return params_alpha + params_eta * np.asarray(f.values)


def ns_residual(ops, psi, omega, eps, g):
    """Residual blocks (Poisson, transport) of shape (T, n+1) each."""
    r = ops.grid.r
    n = ops.grid.n
    ri = r[None, :n]
    pr = ops.dr(psi, ops.w1)
    prr = ops.dr(psi, ops.w2)
    orr_ = ops.dr(omega, ops.w2)
    or_ = ops.dr(omega, ops.w1)
    pt = dtheta(psi[:, :n])
    ot = dtheta(omega[:, :n])
    ott = dtheta(omega[:, :n], 2)
    ptt = dtheta(psi[:, :n], 2)
    Fp = np.empty_like(psi)
    Ft = np.empty_like(omega)
    Fp[:, :n] = (ri ** 2 * omega[:, :n] - ri ** 2 * prr - ri * pr - ptt) * ops.p_scale
    Ft[:, :n] = pr * ot - pt * or_ - eps ** 2 * (ri * orr_ + or_ + ott / ri)
    h = ops.h_wall
    Fp[:, n] = psi[:, n]
    # wall row scaled by h²/2 so its round-off is relative to ψ, not amplified by 1/h²
    Ft[:, n] = 0.5 * h ** 2 * omega[:, n] - psi[:, n - 1] - (h + 0.5 * h ** 2) * g
    return Fp, Ft


def _jacobian_blocks(ops, psi, omega, eps):
    """Lower, diagonal and upper blocks; unknown and row order [ψ_m; ω_m]."""
    r = ops.grid.r
    n = ops.grid.n
    T = ops.T
    I = np.eye(T)
    Dt, Dt2, P = ops.Dt, ops.Dt2, ops.P
    pr = ops.dr(psi, ops.w1)
    or_ = ops.dr(omega, ops.w1)
    pt = dtheta(psi[:, :n])
    ot = dtheta(omega[:, :n])
    L = np.zeros((n + 1, 2 * T, 2 * T))
    D = np.zeros((n + 1, 2 * T, 2 * T))
    U = np.zeros((n + 1, 2 * T, 2 * T))
    e2 = eps ** 2
    for m in range(n):
        rm = r[m]
        a1, b1, c1 = ops.w1[m]
        a2, b2, c2 = ops.w2[m]
        # Poisson rows
        D[m, :T, :T] = -(rm ** 2 * b2 + rm * b1) * I - Dt2
        D[m, :T, T:] = rm ** 2 * I
        lo_p = -(rm ** 2 * a2 + rm * a1)
        up_p = -(rm ** 2 * c2 + rm * c1)
        # transport rows: pr*ot - pt*or - e2(r orr + or + ott/r)
        dpsi_c = (ot[:, m] * b1)[:, None] * I - or_[:, m][:, None] * Dt
        dom_c = (pr[:, m][:, None] * Dt - (pt[:, m] * b1)[:, None] * I
                 - e2 * ((rm * b2 + b1) * I + Dt2 / rm))
        k_lo = rm * a2 + a1
        if m == 0:
            D[m, :T, :T] += lo_p * P
            D[m, T:, :T] = dpsi_c + (ot[:, m] * a1)[:, None] * P
            D[m, T:, T:] = dom_c - (pt[:, m] * a1)[:, None] * P - e2 * k_lo * P
        else:
            D[m, T:, :T] = dpsi_c
            D[m, T:, T:] = dom_c
            L[m, :T, :T] = lo_p * I
            L[m, T:, :T] = np.diag(ot[:, m] * a1)
            L[m, T:, T:] = np.diag(-pt[:, m] * a1) - e2 * k_lo * I
        U[m, :T, :T] = up_p * I
        U[m, T:, :T] = np.diag(ot[:, m] * c1)
        U[m, T:, T:] = np.diag(-pt[:, m] * c1) - e2 * (rm * c2 + c1) * I
        sc = ops.p_scale[m]
        D[m, :T] *= sc
        L[m, :T] *= sc
        U[m, :T] *= sc
    h = ops.h_wall
    D[n, :T, :T] = I
    D[n, T:, T:] = 0.5 * h ** 2 * I
    L[n, T:, :T] = -I
    return L, D, U


def _block_solve(L, D, U, rhs):
    """Block-tridiagonal elimination; rhs has shape (n+1, 2T)."""
    nb = D.shape[0]
    facs = []
    C = np.zeros_like(U)
    y = np.zeros_like(rhs)
    for m in range(nb):
        Dm = D[m] - (L[m] @ C[m - 1] if m else 0.0)
        bm = rhs[m] - (L[m] @ y[m - 1] if m else 0.0)
        fac = lu_factor(Dm, check_finite=False)
        facs.append(fac)
        if m < nb - 1:
            C[m] = lu_solve(fac, U[m], check_finite=False)
        y[m] = lu_solve(fac, bm, check_finite=False)
    x = np.zeros_like(rhs)
    x[-1] = y[-1]
    for m in range(nb - 2, -1, -1):
        x[m] = y[m] - C[m] @ x[m + 1]
    return x


@dataclass
class NSSolution:
    epsilon: float
    u: DiskField
    v: DiskField
    psi: DiskField
    omega: DiskField
    newton_iters: int
    final_residual: float
    grid: NSGrid = None
    history: list = field(default_factory=list)
    alpha: float = None
    eta: float = None
    f: PeriodicField = None

    @property
    def r(self):
        return self.psi.r


def _velocities(ops, psi, g):
    n = ops.grid.n
    r = ops.grid.r
    u = np.empty_like(psi)
    u[:, :n] = ops.dr(psi, ops.w1)
    u[:, n] = g
    v = -dtheta(psi) / r[None, :]
    return u, v


def rigid_rotation_guess(grid, a):
    """ψ = a(r² - 1)/2, ω = 2a."""
    r = grid.r
    psi = np.ones((grid.n_theta, 1)) * (0.5 * a * (r ** 2 - 1))[None, :]
    return psi, 2 * a * np.ones_like(psi)


def guess_from_velocity(grid, u_func, n_gauss=6):
    """ψ(θ, r_m) = -∫_{r_m}^1 u ds from a callable u(r) -> (T, len(r)).

    ω is the discrete Laplacian of ψ (its wall value is recomputed by Newton).
    """
    r = grid.r
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    lo, hi = r[:-1], r[1:]
    pts = (0.5 * (hi - lo)[:, None] * x[None, :] + 0.5 * (hi + lo)[:, None]).ravel()
    uq = u_func(pts).reshape(grid.n_theta, r.size - 1, n_gauss)
    seg = np.sum(uq * w[None, None, :], axis=2) * (0.5 * (hi - lo))[None, :]
    psi = np.zeros((grid.n_theta, r.size))
    psi[:, :-1] = -np.cumsum(seg[:, ::-1], axis=1)[:, ::-1]
    ops = _Operators(grid)
    n = grid.n
    rr = r[None, :n]
    om = np.empty_like(psi)
    om[:, :n] = (ops.dr(psi, ops.w2) + ops.dr(psi, ops.w1) / rr
                 + dtheta(psi[:, :n], 2) / rr ** 2)
    om[:, n] = om[:, n - 1]
    return psi, om


def solve_steady_ns(epsilon, alpha, eta, f, grid, initial_guess=None, tol=1e-10,
                    max_iter=20, damping=1.0):
    """Newton iteration on (ψ, ω).

    ``initial_guess`` is an NSSolution on the same grid, a (ψ, ω) pair, or
    None (rigid rotation at the Batchelor-Wood constant).
    """
    from .prandtl0 import batchelor_wood_constant

    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ops = _Operators(grid)
    g = _wall_speed(alpha, eta, f)
    a = batchelor_wood_constant(alpha, eta, f)
    if initial_guess is None:
        psi, om = rigid_rotation_guess(grid, a)
    elif isinstance(initial_guess, NSSolution):
        psi, om = initial_guess.psi.values.copy(), initial_guess.omega.values.copy()
    else:
        psi, om = (np.array(x, dtype=float) for x in initial_guess)
    psi[:, -1] = 0.0
    T = grid.n_theta
    hist = []
    it = 0
    Fp, Ft = ns_residual(ops, psi, om, epsilon, g)
    res = max(np.max(np.abs(Fp)), np.max(np.abs(Ft)))
    hist.append(float(res))
    while res > tol:
        if it >= max_iter:
            raise NewtonFailure(
                f"Newton did not converge at epsilon={epsilon} (residual {res:.3e}); "
                "walk down the epsilon ladder using the previous solution as guess "
                "or reduce the damping factor")
        L, D, U = _jacobian_blocks(ops, psi, om, epsilon)
        rhs = np.concatenate([Fp.T, Ft.T], axis=1)
        dx = _block_solve(L, D, U, -rhs)
        if not np.all(np.isfinite(dx)):
            raise NewtonFailure("singular Jacobian in the Newton step")
        psi = psi + damping * dx[:, :T].T
        om = om + damping * dx[:, T:].T
        it += 1
        Fp, Ft = ns_residual(ops, psi, om, epsilon, g)
        res = max(np.max(np.abs(Fp)), np.max(np.abs(Ft)))
        hist.append(float(res))
        if not np.isfinite(res) or (it > 3 and res > 1e3 * hist[0]):
            raise NewtonFailure(f"Newton diverged at epsilon={epsilon}; use continuation "
                                "from a larger epsilon or damping < 1")
    u, v = _velocities(ops, psi, g)
    r = grid.r
    return NSSolution(
        epsilon=epsilon, u=DiskField(u, r, "tangential"), v=DiskField(v, r, "radial"),
        psi=DiskField(psi, r), omega=DiskField(om, r), newton_iters=it,
        final_residual=float(res), grid=grid, history=hist, alpha=alpha, eta=eta, f=f)


def vorticity(u, v):
    """ω = (1/r)(∂_r(ru) - ∂_θv); fourth-order r-stencils, one-sided at the ends."""
    r = u.r
    d = apply_along_y(diff_matrix(r, 1, 4), u.values * r[None, :])
    return DiskField((d - dtheta(v.values)) / r[None, :], r)


def primitive_residual(ns):
    """Curl of the non-pressure part of both momentum equations.

    The pressure gradient is eliminated: with G_θ, G_r the r-weighted momentum
    terms without the pressure, ∂_r(G_θ)  - ∂_θ(G_r / r) must vanish.
    Derivatives use second-order np.gradient in r and spectral θ on (u, v),
    independent of the solver's stencils.
    """
    r = ns.r
    u, v = ns.u.values, ns.v.values
    eps2 = ns.epsilon ** 2
    R = r[None, :]

    def d_r(x):
        return np.gradient(x, r, axis=1, edge_order=2)

    ut, vt = dtheta(u), dtheta(v)
    ur, vr = d_r(u), d_r(v)
    urr, vrr = d_r(ur), d_r(vr)
    Gt = (u * ut + R * v * ur + u * v
          - eps2 * (R * urr + ur + dtheta(u, 2) / R + 2 * vt / R - u / R))
    Gr = (u * vt + R * v * vr - u * u
          - eps2 * (R * vrr + vr + dtheta(v, 2) / R - 2 * ut / R - v / R))
    # G_θ = -p_θ and G_r = -r p_r, so ∂_r G_θ = ∂_θ (G_r / r)
    return DiskField(d_r(Gt) - dtheta(Gr / R), r)


def error_norms(ns, reference):
    """E_u∞ = max|u - ref_u|, E_v∞ = max|v - ref_v| and their L² analogues.

    ``reference`` is an NSSolution, a CompositeSolution sampled on the same
    nodes, or a pair (ref_u, ref_v) of arrays.
    """
    if isinstance(reference, NSSolution):
        ru, rv = reference.u.values, reference.v.values
    elif hasattr(reference, "u_a"):
        ru, rv = reference.u_a.values, reference.v_a.values
    else:
        ru, rv = reference
    ru = np.asarray(ru, dtype=float)
    rv = np.asarray(rv, dtype=float)
    if ru.shape != ns.u.values.shape or rv.shape != ns.v.values.shape:
        raise ValueError("reference grid does not match the solution grid")
    du = ns.u.values - ru
    dv = ns.v.values - rv
    r = ns.r
    w = np.gradient(r) * r * 2 * np.pi / ns.u.n_theta

    def l2(x):
        return float(np.sqrt(np.sum(x ** 2 * w[None, :])))

    return {"E_u_inf": float(np.max(np.abs(du))), "E_v_inf": float(np.max(np.abs(dv))),
            "E_u_l2": l2(du), "E_v_l2": l2(dv)}


def leading_order_reference(stack, ns):
    """u_e + u_p⁰(θ, (r-1)/ε) and v = 0 on the solution grid."""
    r = ns.r
    Y = np.clip((r - 1) / ns.epsilon, stack.y[0], 0.0)
    spl = make_interp_spline(stack.y, stack.u_layer[0].values, k=5, axis=1)
    ref_u = stack.a * r[None, :] + spl(Y)
    return ref_u, np.zeros_like(ref_u)


def interior_vorticity_deviation(omega, a, r0=0.5):
    """max over r ≤ r0 of |ω - 2a|."""
    if not r0 < 1:
        raise ValueError("r0 must be below 1")
    mask = omega.r <= r0
    return float(np.max(np.abs(omega.values[:, mask] - 2 * a)))


def streamline_flux_diagnostic(ns, levels):
    """Signed and absolute ∮ ∂ω/∂n dl on the contours ψ = c·min ψ.

    Each contour r = R(θ) is found per θ node by root finding on a cubic
    spline of ψ in r; R' is spectral.  Along the contour
    ∂ω/∂n dl = (R ω_r - (R'/R) ω_θ) dθ.  Returns a list of dicts.
    """
    r = ns.r
    psi = ns.psi.values
    om = ns.omega.values
    T = psi.shape[0]
    if np.any(np.diff(psi, axis=1) <= 0):
        raise ValueError("level sets are not nested: ψ is not monotone in r")
    pmin = float(np.min(psi[:, 0]))
    om_r = np.gradient(om, r, axis=1, edge_order=2)
    om_t = dtheta(om)
    floor = 1e-10 * max(1.0, float(np.max(np.abs(om))))
    out = []
    for frac in levels:
        if not 0 < frac < 1:
            raise ValueError(f"level fraction {frac} must lie strictly inside (0, 1); "
                             "the contour degenerates at the extremes")
        c = frac * pmin
        R = np.empty(T)
        dr_vals = np.empty(T)
        dt_vals = np.empty(T)
        for j in range(T):
            if not (psi[j, 0] < c < psi[j, -1]):
                raise ValueError(f"level {c} outside the ψ range on ray {j}")
            sp = CubicSpline(r, psi[j])
            R[j] = brentq(lambda x: sp(x) - c, r[0], r[-1], xtol=1e-14)
            dr_vals[j] = CubicSpline(r, om_r[j])(R[j])
            dt_vals[j] = CubicSpline(r, om_t[j])(R[j])
        Rp = dtheta(R)
        integrand = R * dr_vals - Rp / R * dt_vals
        dth = 2 * np.pi / T
        signed = float(np.sum(integrand) * dth)
        absolute = float(np.sum(np.abs(integrand)) * dth)
        # a flux at round-off level (constant ω) has no meaningful ratio
        ratio = abs(signed) / absolute if absolute > floor else 0.0
        out.append({"level": frac, "c": c, "signed": signed, "absolute": absolute,
                    "ratio": ratio})
    return out
