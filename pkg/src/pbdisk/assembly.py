"""
Composite approximate solution and its Navier-Stokes residual.

The expansion stack (outer orders, layer orders, far-field constants) is built
once on fixed grids and is independent of ε.  For a given ε and truncation N
the composite is evaluated pointwise: outer orders exactly in r, layer fields
through quintic splines in Y = (r - 1)/ε, θ-derivatives spectrally.
"""

import warnings
from dataclasses import dataclass, field
from math import comb

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import make_interp_spline

from . import euler
from .euler import HarmonicSeries, OuterOrder, RadialCorrector
from .fields import DiskField, LayerField, PeriodicField, dtheta, theta_antiderivative
from .prandtl0 import (compute_pp1, compute_vp1, psi_grid, solve_prandtl_fixed_point,
                       von_mises_invert)
from .prandtllin import (LayerProvider, LinearizedPrandtlProblem, assemble_f1,
                         assemble_f2, assemble_g1, assemble_g2, pressure_from_g,
                         solve_linearized_prandtl)

__all__ = [
    "cutoff_chi", "ExpansionStack", "build_expansion", "CompositeSolution",
    "compose", "corrector_h", "evaluate_residual", "ResidualReport",
    "residual_grid", "UnderResolvedWarning",
]


class UnderResolvedWarning(UserWarning):
    pass


def cutoff_chi(r_grid, n_theta=None, deriv=0):
    """χ on ``r_grid``; a DiskField when ``n_theta`` is given, else a 1-D array."""
    r = np.asarray(r_grid, dtype=float)
    c = euler.cutoff_chi(r, deriv)
    if n_theta is None:
        return c
    return DiskField(np.ones((n_theta, 1)) * c[None, :], r, "scalar")


@dataclass
class ExpansionStack:
    """ε-independent pieces of the expansion up to ``order``.

    ``outer[i]`` is the modified outer order ũ_e^(i) (i ≥ 1); ``u_layer[i]``
    is ũ_p^(i); ``v_layer[i]`` the decaying v_p^(i); ``v_top[i]`` the
    wall-normalised v_p^(i) used when i = N + 1; ``p_layer[i]`` is p_p^(i).
    """

    alpha: float
    eta: float
    f: PeriodicField
    a: float
    y: np.ndarray
    order: int
    outer: dict = field(default_factory=dict)
    u_layer: dict = field(default_factory=dict)
    v_layer: dict = field(default_factory=dict)
    v_top: dict = field(default_factory=dict)
    p_layer: dict = field(default_factory=dict)
    A_inf: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    fixed_point: object = None

    @property
    def n_theta(self):
        return self.f.n_theta

    @property
    def y_max(self):
        return -float(self.y[0])

    def to_dict(self):
        def lay(d):
            return {str(k): v.values.tolist() for k, v in sorted(d.items())}
        out = {
            "alpha": self.alpha, "eta": self.eta, "a": self.a, "order": self.order,
            "n_theta": self.n_theta, "f": self.f.values.tolist(),
            "y": self.y.tolist(),
            "A_inf": {str(k): v for k, v in sorted(self.A_inf.items())},
            "outer_traces": {str(k): o.series.v(np.array([1.0]))[:, 0].tolist()
                             for k, o in sorted(self.outer.items())},
            "u_layer": lay(self.u_layer), "v_layer": lay(self.v_layer),
            "v_top": lay(self.v_top), "p_layer": lay(self.p_layer),
        }
        return out


def build_expansion(alpha, eta, f, order=2, y_max=20.0, n_y=401, n_psi=401,
                    psi_margin=1.1, fp_tol=1e-11, delta=0.0, forcing="derived",
                    fd_order=4, krylov_tol=1e-13):
    """Solve the layer and outer hierarchy through ``order`` (0, 1 or 2).

    ``forcing`` chooses between the corrected forcings ("derived") and the
    literal printed ones ("printed").
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    from .prandtl0 import PhysicalParams

    params = PhysicalParams(alpha, eta, f)
    a = params.a
    y = np.linspace(-y_max, 0.0, n_y)
    stack = ExpansionStack(alpha=alpha, eta=eta, f=f, a=a, y=y, order=order)
    log = stack.log
    nt = f.n_theta

    psi = psi_grid(psi_margin * a * y_max, n_psi)
    sol = solve_prandtl_fixed_point(params, psi, tol=fp_tol, fd_order=fd_order)
    stack.fixed_point = sol
    log.append(f"prandtl0: a={a!r} iterations={sol.iterations} "
               f"ratio={sol.final_contraction_ratio:.3e}")
    up0 = von_mises_invert(sol, y)
    vp1 = compute_vp1(up0)
    pp1 = compute_pp1(up0, a)
    stack.u_layer[0] = up0
    stack.v_layer[1] = vp1
    stack.p_layer[1] = pp1
    v1w = vp1.with_values(vp1.values - vp1.values[:, -1:], decaying=False)
    stack.v_top[1] = v1w
    if order == 0:
        return stack

    trace1 = PeriodicField(-vp1.values[:, -1])
    o1 = OuterOrder(HarmonicSeries.from_trace(trace1, mean_tol=1e-10), a)
    ubar = up0.with_values(a + up0.values, decaying=False)
    prov = LayerProvider(y, a, up={0: up0.values}, vp={1: vp1.values},
                         pp={1: pp1.values}, outer={1: o1}, fd_order=fd_order)
    f1 = LayerField(assemble_f1(prov) * np.ones((nt, 1)), y)
    pb1 = LinearizedPrandtlProblem(ubar=ubar, vbar=v1w, forcing=f1,
                                   wall_bc=PeriodicField(-o1.u(np.array([1.0]))[:, 0]),
                                   v_prev=vp1, delta=delta)
    s1 = solve_linearized_prandtl(pb1, fd_order=fd_order, tol=krylov_tol)
    A1 = s1.A_inf
    stack.A_inf[1] = A1
    log.append(f"order1: A_inf={A1!r} gmres_iters={s1.gmres_iters}")
    oc1 = o1.with_corrector(RadialCorrector(A1) if A1 != 0.0 else None)
    ut1 = s1.u_tilde
    stack.outer[1] = oc1
    stack.u_layer[1] = ut1
    stack.v_layer[2] = s1.v
    stack.v_top[2] = s1.v_wall
    prov = LayerProvider(y, a, up={0: up0.values, 1: ut1.values},
                         vp={1: vp1.values}, pp={1: pp1.values}, outer={1: oc1},
                         fd_order=fd_order)
    g1 = LayerField(assemble_g1(prov, forcing) * np.ones((nt, 1)), y, decaying=True)
    stack.p_layer[2] = pressure_from_g(g1)
    if order == 1:
        return stack

    o2 = OuterOrder(HarmonicSeries.from_trace(s1.next_trace, mean_tol=1e-10), a, source=oc1)
    pp2 = stack.p_layer[2]
    prov = LayerProvider(y, a, up={0: up0.values, 1: ut1.values},
                         vp={1: vp1.values, 2: s1.v.values},
                         pp={1: pp1.values, 2: pp2.values},
                         outer={1: oc1, 2: o2}, fd_order=fd_order)
    f2 = LayerField(assemble_f2(prov, forcing) * np.ones((nt, 1)), y)
    pb2 = LinearizedPrandtlProblem(ubar=ubar, vbar=v1w, forcing=f2,
                                   wall_bc=PeriodicField(-o2.u(np.array([1.0]))[:, 0]),
                                   v_prev=s1.v, delta=delta)
    s2 = solve_linearized_prandtl(pb2, fd_order=fd_order, tol=krylov_tol)
    A2 = s2.A_inf
    stack.A_inf[2] = A2
    log.append(f"order2: A_inf={A2!r} gmres_iters={s2.gmres_iters}")
    oc2 = o2.with_corrector(RadialCorrector(A2) if A2 != 0.0 else None)
    ut2 = s2.u_tilde
    stack.outer[2] = oc2
    stack.u_layer[2] = ut2
    stack.v_layer[3] = s2.v
    stack.v_top[3] = s2.v_wall
    prov = LayerProvider(y, a, up={0: up0.values, 1: ut1.values, 2: ut2.values},
                         vp={1: vp1.values, 2: s1.v.values, 3: s2.v.values},
                         pp={1: pp1.values, 2: pp2.values},
                         outer={1: oc1, 2: oc2}, fd_order=fd_order)
    g2 = LayerField(assemble_g2(prov, forcing) * np.ones((nt, 1)), y, decaying=True)
    stack.p_layer[3] = pressure_from_g(g2)
    return stack


class _LayerSpline:
    """Quintic spline in Y of a layer field, evaluated on r = 1 + εY."""

    def __init__(self, lf):
        self.y0 = float(lf.y[0])
        self.spl = [make_interp_spline(lf.y, lf.values, k=5, axis=1)]
        for _ in range(3):
            self.spl.append(self.spl[-1].derivative())

    def __call__(self, Y, m=0):
        return self.spl[m](np.clip(Y, self.y0, 0.0))


def _leibniz(c, f, kmax):
    """r-derivatives 0..kmax of c·f from the jets of each factor."""
    return [sum(comb(k, j) * c[j] * f[k - j] for j in range(k + 1)) for k in range(kmax + 1)]


@dataclass
class CompositeSolution:
    order: int
    epsilon: float
    u_a: DiskField
    v_a: DiskField
    p_a: DiskField
    h: DiskField
    parts: ExpansionStack
    K_raw: np.ndarray = None

    def evaluate(self, r):
        return _Composite(self.parts, self.order, self.epsilon).fields(r)


class _Composite:
    def __init__(self, stack, order, eps):
        if order > stack.order:
            raise ValueError(f"stack built to order {stack.order}, composite needs {order}")
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        if 0.5 / eps > stack.y_max * (1 + 1e-12):
            raise ValueError(f"Y_max={stack.y_max} does not cover the cut-off support at "
                             f"epsilon={eps}; enlarge Y_max to at least {0.5 / eps}")
        self.s = stack
        self.N = order
        self.eps = eps
        self.lu = {i: _LayerSpline(stack.u_layer[i]) for i in range(order + 1)}
        vs = {i: stack.v_layer[i] for i in range(1, order + 1)}
        vs[order + 1] = stack.v_top[order + 1]
        self.lv = {i: _LayerSpline(v) for i, v in vs.items()}
        self.lp = {i: _LayerSpline(stack.p_layer[i]) for i in range(1, order + 2)}

    def _layer_jet(self, splines, r, kmax):
        eps = self.eps
        Y = (r - 1.0) / eps
        nt = self.s.n_theta
        out = [np.zeros((nt, r.size)) for _ in range(kmax + 1)]
        for i, sp in splines.items():
            for k in range(kmax + 1):
                out[k] = out[k] + eps ** (i - k) * sp(Y, k)
        return out

    def jets(self, r):
        """r-derivative jets of u, v (0..3) and p (0..1) before the h correction."""
        r = np.asarray(r, dtype=float)
        a, eps, N = self.s.a, self.eps, self.N
        nt = self.s.n_theta
        one = np.ones((nt, 1))
        chi = [euler.cutoff_chi(r, k)[None, :] for k in range(4)]
        u = [one * (a * r)[None, :], one * a * np.ones_like(r)[None, :],
             np.zeros((nt, r.size)), np.zeros((nt, r.size))]
        v = [np.zeros((nt, r.size)) for _ in range(4)]
        p = [one * (0.5 * a * a * r * r)[None, :], one * (a * a * r)[None, :]]
        pt = np.zeros((nt, r.size))
        for i in range(1, N + 1):
            o = self.s.outer[i]
            for k in range(4):
                u[k] = u[k] + eps ** i * o.u(r, k)
                v[k] = v[k] + eps ** i * o.v(r, k)
            p[0] = p[0] + eps ** i * o.p(r)
            p[1] = p[1] + eps ** i * o.p_r(r)
            pt = pt + eps ** i * o.p_theta(r)
        lu = _leibniz(chi, self._layer_jet(self.lu, r, 3), 3)
        lv = _leibniz(chi, self._layer_jet(self.lv, r, 3), 3)
        chi2 = [chi[0] ** 2, 2 * chi[0] * chi[1]]
        lp = _leibniz(chi2, self._layer_jet(self.lp, r, 1), 1)
        for k in range(4):
            u[k] = u[k] + lu[k]
            v[k] = v[k] + lv[k]
        p[0] = p[0] + lp[0]
        p[1] = p[1] + lp[1]
        pt = pt + dtheta(lp[0])
        return u, v, p, pt

    def fields(self, r):
        """Corrected velocity jets (0..2), pressure gradient and the raw defect K."""
        r = np.asarray(r, dtype=float)
        u, v, p, pt = self.jets(r)
        rr = r[None, :]
        K = [dtheta(u[0]) + v[0] + rr * v[1],
             dtheta(u[1]) + 2 * v[1] + rr * v[2],
             dtheta(u[2]) + 3 * v[2] + rr * v[3]]
        h = [corrector_h(k_, mean_tol=1e-8) for k_ in K]
        uc = [u[k] - h[k] for k in range(3)]
        vc = list(v[:3])
        b = self._wall_defect()
        if b is not None:
            # divergence-free repair with streamfunction b(θ)(r-1)χ(r)
            chi = [euler.cutoff_chi(r, k) for k in range(4)]
            s = [(r - 1) * chi[0]] + [k * chi[k - 1] + (r - 1) * chi[k] for k in range(1, 4)]
            q = [s[0] / r, s[1] / r - s[0] / r ** 2,
                 s[2] / r - 2 * s[1] / r ** 2 + 2 * s[0] / r ** 3]
            bt = dtheta(b)[:, None]
            for k in range(3):
                uc[k] = uc[k] + b[:, None] * s[k + 1][None, :]
                vc[k] = vc[k] - bt * q[k][None, :]
        return {"u": uc, "v": vc, "p": p[0], "p_r": p[1], "p_theta": pt,
                "h": h[0], "K": K[0]}

    def _wall_defect(self):
        """h(θ,1), nonzero only through discretization error of the layer fields."""
        if not hasattr(self, "_b"):
            u, v, _, _ = self.jets(np.array([1.0]))
            k1 = dtheta(u[0]) + v[0] + v[1]
            b = corrector_h(k1, mean_tol=1e-8)[:, 0]
            self._b = b if np.any(b != 0.0) else None
        return self._b


def corrector_h(K, mean_tol=1e-10):
    """h with ∂_θh = K, zero θ-mean; rejects K with nonzero θ-mean."""
    k = getattr(K, "values", K)
    h = theta_antiderivative(k, mean_tol=mean_tol)
    if isinstance(K, DiskField):
        return DiskField(h, K.r, K.component)
    return h


def compose(order, epsilon, stack, r_grid):
    """Composite (u^a, v^a, p^a) of truncation ``order`` sampled on ``r_grid``."""
    ev = _Composite(stack, order, epsilon)
    r = np.asarray(r_grid, dtype=float)
    fl = ev.fields(r)
    return CompositeSolution(
        order=order, epsilon=epsilon,
        u_a=DiskField(fl["u"][0], r, "tangential"),
        v_a=DiskField(fl["v"][0], r, "radial"),
        p_a=DiskField(fl["p"], r, "scalar"),
        h=DiskField(fl["h"], r, "tangential"), parts=stack, K_raw=fl["K"])


def momentum_residuals(fl, r, eps):
    """(R_u, R_v) of the r-weighted polar Navier-Stokes equations."""
    r = np.asarray(r, dtype=float)[None, :]
    u, ur, urr = fl["u"]
    v, vr, vrr = fl["v"]
    ut, vt = dtheta(u), dtheta(v)
    utt, vtt = dtheta(u, 2), dtheta(v, 2)
    e2 = eps * eps
    Ru = (u * ut + r * v * ur + u * v + fl["p_theta"]
          - e2 * (r * urr + ur + utt / r + 2 * vt / r - u / r))
    Rv = (u * vt + r * v * vr - u * u + r * fl["p_r"]
          - e2 * (r * vrr + vr + vtt / r - 2 * ut / r - v / r))
    return Ru, Rv


def residual_grid(eps, n_gauss=8, n_interior=8, n_layer=24, n_inner_layer=10):
    """Gauss-Legendre nodes/weights on (0,1): uniform panels on (0,1/2), and on
    (1/2,1) panels graded geometrically toward the wall with width ≈ ε/4 there.
    """
    x, w = leggauss(n_gauss)
    edges = list(np.linspace(0.0, 0.5, n_interior + 1))
    near = 1.0 - np.linspace(0.0, min(3 * eps, 0.25), n_inner_layer + 1)[::-1]
    far = np.geomspace(0.5, near[0], max(n_layer - n_inner_layer, 2) + 1)
    edges += list(far[1:-1]) + list(near)
    edges = np.unique(np.array(edges))
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class ResidualReport:
    epsilon: float
    order: int
    res_u_weighted: float
    res_v_weighted: float
    res_interior: float
    res_layer: float
    max_abs: float
    divergence: float
    wall_u: float
    wall_v: float
    under_resolved: bool = False

    @property
    def res_weighted(self):
        return float(np.hypot(self.res_u_weighted, self.res_v_weighted))


def evaluate_residual(sol, epsilon=None, n_gauss=8, n_theta_min=8):
    """Pointwise residuals on a quadrature grid plus their weighted norms.

    Returns (R_u, R_v, report) where R_u, R_v are DiskFields on the
    quadrature nodes and the norms are (∬ R²/r dθ dr)^{1/2}.
    """
    eps = sol.epsilon if epsilon is None else epsilon
    stack = sol.parts
    ev = _Composite(stack, sol.order, eps)
    r, w = residual_grid(eps, n_gauss)
    fl = ev.fields(r)
    Ru, Rv = momentum_residuals(fl, r, eps)
    nt = stack.n_theta
    dth = 2 * np.pi / nt
    wr = (w / r)[None, :] * dth
    inner = r < 0.5

    def norm(R, mask=slice(None)):
        return float(np.sqrt(np.sum(R[:, mask] ** 2 * wr[:, mask])))

    ru, rv = norm(Ru), norm(Rv)
    r_in = float(np.hypot(norm(Ru, inner), norm(Rv, inner)))
    r_out = float(np.hypot(norm(Ru, ~inner), norm(Rv, ~inner)))
    u, v = fl["u"][0], fl["v"][0]
    div = dtheta(u) + v + r[None, :] * fl["v"][1]
    wall = ev.fields(np.array([1.0]))
    target = stack.alpha + stack.eta * stack.f.values
    wall_u = float(np.max(np.abs(wall["u"][0][:, 0] - target)))
    wall_v = float(np.max(np.abs(wall["v"][0][:, 0])))
    # resolution check: the highest θ modes of the layer fields should be small
    under = False
    coeffs = np.abs(np.fft.rfft(u, axis=0))
    if coeffs.shape[0] > n_theta_min:
        tail = np.max(coeffs[-3:-1]) / max(np.max(coeffs[1:]), 1e-300)
        under = bool(tail > 1e-8 and stack.eta > 0)
    if under:
        warnings.warn("composite under-resolved in θ; increase n_theta", UnderResolvedWarning)
    report = ResidualReport(
        epsilon=eps, order=sol.order, res_u_weighted=ru, res_v_weighted=rv,
        res_interior=r_in, res_layer=r_out,
        max_abs=float(max(np.max(np.abs(Ru)), np.max(np.abs(Rv)))),
        divergence=float(np.max(np.abs(div))), wall_u=wall_u, wall_v=wall_v,
        under_resolved=under)
    return DiskField(Ru, r, "tangential"), DiskField(Rv, r, "radial"), report
