"""
Linearized boundary-layer orders 1 and 2.

Forcing terms are assembled from a *provider* that hands out layer fields,
outer Taylor coefficients at r = 1 and their derivatives.  Notation inside the
term functions:

    up(j)  ũ_p^(j)  (u_p^(0) for j = 0; u_p^(j) - A_j∞ otherwise)
    vp(j)  v_p^(j)  decaying layer normal velocity, v_p^(0) = 0
    pp(j)  p_p^(j)
    ue(i, k)  ∂_r^k ũ_e^(i)(θ, 1), with ũ_e^(0) = a r
    ve(i, k)  ∂_r^k ṽ_e^(i)(θ, 1), with ṽ_e^(0) = 0

Each term function returns a list of summands so the index ranges of the
multiple sums can be audited.  Summands whose coefficient is identically zero
(ṽ_e^(0), v_p^(0)) are kept in the count and evaluate to zero.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, gmres, splu, spsolve

from .euler import RadialCorrector, cutoff_chi
from .fields import LayerField, PeriodicField, diff_matrix, dtheta, half_line_integral

__all__ = [
    "lift_function", "lift_integral", "LayerProvider", "f1_terms", "assemble_f1",
    "f2_terms", "assemble_f2", "g1_terms", "assemble_g1", "g2_terms",
    "assemble_g2", "LinearizedPrandtlProblem", "LinearizedPrandtlSolution",
    "solve_linearized_prandtl", "operator_residual", "pressure_from_g",
    "corrector_A", "modify_euler", "SolverFailure", "interval_weights",
]


class SolverFailure(RuntimeError):
    pass


def lift_function(y):
    """ℓ(Y) = (1 + 2Y)e^{2Y}: ℓ(0) = 1 and ∫_{-∞}^0 ℓ = 0."""
    y = np.asarray(y, dtype=float)
    return (1 + 2 * y) * np.exp(2 * y)


def lift_integral(y):
    """∫_Y^0 ℓ(z) dz = -Y e^{2Y}."""
    y = np.asarray(y, dtype=float)
    return -y * np.exp(2 * y)


class LayerProvider:
    """Layer fields and outer traces on a common (θ, Y) grid.

    Derivatives are spectral in θ and finite-difference in Y (``fd_order``).
    """

    def __init__(self, y, a, up=None, vp=None, pp=None, outer=None, fd_order=4):
        self.y = np.asarray(y, dtype=float)
        self.Y = self.y[None, :]
        self.a = a
        self._up = dict(up or {})
        self._vp = dict(vp or {})
        self._pp = dict(pp or {})
        self._outer = dict(outer or {})
        self._d = {m: diff_matrix(self.y, m, fd_order) for m in (1, 2)}
        self._cache = {}

    @property
    def zero(self):
        return np.zeros((1, self.y.size))

    def _field(self, store, name, j, t, y):
        key = (name, j, t, y)
        if key not in self._cache:
            v = np.asarray(store[j], dtype=float)
            if y:
                v = np.asarray((self._d[y] @ v.T).T)
            if t:
                v = dtheta(v, t)
            self._cache[key] = v
        return self._cache[key]

    def up(self, j, t=0, y=0):
        return self._field(self._up, "up", j, t, y)

    def vp(self, j, t=0, y=0):
        if j == 0:
            return 0.0
        return self._field(self._vp, "vp", j, t, y)

    def pp(self, j, t=0, y=0):
        if j == 0:
            return 0.0
        return self._field(self._pp, "pp", j, t, y)

    def ue(self, i, k, t=0):
        if i == 0:
            if t:
                return 0.0
            return [self.a, self.a, 0.0, 0.0][k]
        key = ("ue", i, k, t)
        if key not in self._cache:
            v = self._outer[i].u(np.array([1.0]), dr=k)
            self._cache[key] = dtheta(v, t) if t else v
        return self._cache[key]

    def ve(self, i, k, t=0):
        if i == 0:
            return 0.0
        key = ("ve", i, k, t)
        if key not in self._cache:
            v = self._outer[i].v(np.array([1.0]), dr=k)
            self._cache[key] = dtheta(v, t) if t else v
        return self._cache[key]

    def rdr_ue(self, j, k):
        """∂_r^k (r ∂_r ũ_e^(j)) at r = 1, i.e. k ∂_r^k ũ + ∂_r^{k+1} ũ."""
        return k * self.ue(j, k) + self.ue(j, k + 1)


def _zero(p):
    return p.zero


def _sum_terms(p, terms):
    out = p.zero
    for t in terms:
        out = out + t
    return out


def f1_terms(p):
    """Summands of f₁ exactly as printed (grouping of the v_p^(1) product kept)."""
    Y, a = p.Y, p.a
    u0 = p.up(0)
    return [
        -p.pp(1, t=1),
        Y * p.up(0, y=2),
        p.up(0, y=1),
        -u0 * (p.ue(1, 0, t=1) + p.ve(1, 0) + p.vp(1)),
        -a * Y * p.up(0, t=1),
        -(p.ve(1, 1) + p.ve(1, 0)) * Y * p.up(0, y=1),
        -(a + Y * p.up(0, y=1) + a) * p.vp(1),
    ]


def assemble_f1(p):
    return _sum_terms(p, f1_terms(p))


def _f2_line(p):
    Y = p.Y
    return [
        -p.pp(2, t=1),
        Y * p.up(1, y=2),
        p.up(1, y=1),
        p.up(0, t=2),
        -p.up(0),
        -p.up(1) * p.up(1, t=1),
        -p.vp(2) * p.up(1, y=1),
    ]


def _f2_layer_advection(p):
    # -Σ_{i+j=2} v_p^(i) Y ∂_Y u_p^(j)
    return [-(p.vp(i) * p.Y * p.up(2 - i, y=1)) if i else _zero(p) for i in range(3)]


def _f2_tangential_taylor(p):
    # -Σ_{k≤2} Σ_{i+j=2-k, (k,j)≠(0,2)} [∂_r^kũ_e^(i) Y^k/k! ∂_θũ_p^(j) + ũ_p^(j) ∂_r^k∂_θũ_e^(i) Y^k/k!]
    out = []
    for k in range(3):
        for i in range(3 - k):
            j = 2 - k - i
            if (k, j) == (0, 2):
                continue
            c = p.Y ** k / factorial(k)
            out.append(-(p.ue(i, k) * c * p.up(j, t=1)))
            out.append(-(p.up(j) * p.ue(i, k, t=1) * c))
    return out


def _f2_wall_term(p):
    return [p.ue(2, 0) * p.up(0, t=1)]


def _f2_radial_taylor(p):
    # -Σ_{k≤1} Σ_{i+j=2-k} [∂_r^kṽ_e^(i) Y^{k+1}/k! ∂_Yũ_p^(j) + v_p^(i) ∂_r^k(r∂_rũ_e^(j)) Y^k/k!]
    out = []
    for k in range(2):
        for i in range(3 - k):
            j = 2 - k - i
            c = p.Y ** k / factorial(k)
            out.append(-(p.ve(i, k) * p.Y * c * p.up(j, y=1)) if i else _zero(p))
            out.append(-(p.vp(i) * p.rdr_ue(j, k) * c) if i else _zero(p))
    return out


def _f2_normal_taylor(p):
    # -Σ_{k≤2} Σ_{i+j=3-k, (k,j)∉{(0,2),(0,0)}} ∂_r^kṽ_e^(i) Y^k/k! ∂_Yũ_p^(j)
    out = []
    for k in range(3):
        for i in range(4 - k):
            j = 3 - k - i
            if (k, j) in ((0, 2), (0, 0)):
                continue
            c = p.Y ** k / factorial(k)
            out.append(-(p.ve(i, k) * c * p.up(j, y=1)) if i else _zero(p))
    return out


def _f2_uv_products(p):
    # Terms of the uv product in the θ-momentum equation at order ε²:
    # -Σ_{k≤2} Σ_{i+j=2-k} [∂_r^kũ_e^(i) Y^k/k! v_p^(j) + ũ_p^(i) ∂_r^kṽ_e^(j) Y^k/k!]
    # -Σ_{i+j=2} ũ_p^(i) v_p^(j)
    out = []
    for k in range(3):
        for i in range(3 - k):
            j = 2 - k - i
            c = p.Y ** k / factorial(k)
            out.append(-(p.ue(i, k) * c * p.vp(j)) if j else _zero(p))
            out.append(-(p.up(i) * p.ve(j, k) * c) if j else _zero(p))
    for i in range(3):
        j = 2 - i
        out.append(-(p.up(i) * p.vp(j)) if j else _zero(p))
    return out


F2_PRINTED_GROUPS = ("line", "layer_advection", "tangential_taylor", "wall",
                     "radial_taylor", "normal_taylor")


def f2_terms(p, variant="derived"):
    """Summands of f₂ grouped as printed; ``derived`` adds the uv-product group."""
    groups = {
        "line": _f2_line(p),
        "layer_advection": _f2_layer_advection(p),
        "tangential_taylor": _f2_tangential_taylor(p),
        "wall": _f2_wall_term(p),
        "radial_taylor": _f2_radial_taylor(p),
        "normal_taylor": _f2_normal_taylor(p),
    }
    if variant == "derived":
        groups["uv_products"] = _f2_uv_products(p)
    elif variant != "printed":
        raise ValueError(f"unknown forcing variant {variant!r}")
    return groups


def assemble_f2(p, variant="derived"):
    return _sum_terms(p, [t for g in f2_terms(p, variant).values() for t in g])


def g1_terms(p, variant="derived"):
    """Summands of g₁; the printed variant carries the opposite sign on the u² products."""
    Y, a = p.Y, p.a
    u0, u1 = p.up(0), p.up(1)
    sign = 2.0 if variant == "derived" else -2.0
    if variant not in ("derived", "printed"):
        raise ValueError(f"unknown forcing variant {variant!r}")
    return [
        -Y * p.pp(1, y=1),
        p.vp(1, y=2),
        -a * p.vp(1, t=1),
        -u0 * (p.ve(1, 0, t=1) + p.vp(1, t=1)),
        -p.vp(1, y=1) * (p.ve(1, 0) + p.vp(1)),
        sign * (Y * a * u0 + a * u1 + p.ue(1, 0) * u0 + u0 * u1),
    ]


def assemble_g1(p, variant="derived"):
    return _sum_terms(p, g1_terms(p, variant))


def g2_terms(p, variant="derived"):
    """Summands of g₂ grouped as printed; ``derived`` flips the u² group and adds ṽ_e ∂_Y v_p terms."""
    if variant not in ("derived", "printed"):
        raise ValueError(f"unknown forcing variant {variant!r}")
    Y, a = p.Y, p.a
    groups = {}
    groups["line"] = [p.vp(2, y=2), Y * p.vp(1, y=2), p.vp(1, y=1),
                      -2 * p.up(0, t=1), -Y * p.pp(2, y=1)]
    groups["layer_normal"] = [-(p.vp(i) * p.vp(3 - i, y=1)) if 0 < i < 3 else _zero(p)
                              for i in range(4)]
    pair = []
    for i in range(3):
        j = 2 - i
        pair.append(-(p.up(i) * p.vp(j, t=1)) if j else _zero(p))
        pair.append(-(p.vp(i) * Y * p.vp(j, y=1)) if i and j else _zero(p))
        pair.append(p.up(i) * p.up(j))
        pair.append(-(p.ve(i, 0) * Y * p.vp(j, y=1)) if i and j else _zero(p))
        pair.append(-(p.vp(i) * p.ve(j, 1)) if i and j else _zero(p))
    groups["pair"] = pair
    tay = []
    for k in range(2):
        for i in range(3 - k):
            j = 2 - k - i
            c = Y ** k / factorial(k)
            tay.append(-(p.ue(i, k) * c * p.vp(j, t=1)) if j else _zero(p))
            tay.append(-(p.ve(j, k, t=1) * c * p.up(i)) if j else _zero(p))
    groups["tangential_taylor"] = tay
    sign = 1.0 if variant == "derived" else -1.0
    sq = []
    for k in range(3):
        for i in range(3 - k):
            j = 2 - k - i
            c = Y ** k / factorial(k)
            sq.append(sign * p.ue(i, k) * c * p.up(j))
            sq.append(sign * p.ue(j, k) * c * p.up(i))
    groups["square_taylor"] = sq
    if variant == "derived":
        # -Σ_{k≤1} Σ_{i+j=3-k} ∂_r^kṽ_e^(i) Y^k/k! ∂_Y v_p^(j)
        extra = []
        for k in range(2):
            for i in range(4 - k):
                j = 3 - k - i
                c = Y ** k / factorial(k)
                ok = i and j and j < 3
                extra.append(-(p.ve(i, k) * c * p.vp(j, y=1)) if ok else _zero(p))
        groups["outer_normal"] = extra
    return groups


def assemble_g2(p, variant="derived"):
    return _sum_terms(p, [t for g in g2_terms(p, variant).values() for t in g])


def pressure_from_g(g):
    """p(θ, Y) = ∫_{-∞}^Y g, decaying at -Y_max."""
    out = half_line_integral(g.with_values(g.values, decaying=True))
    return out.with_values(out.values, decaying=True)


@dataclass
class LinearizedPrandtlProblem:
    """Order-i layer problem for the total u = u_p^(i):

    ū u_θ + v̄ u_Y + V ū_Y + (u - u_w) ū_θ - u_YY - δ u_θθ = f̃,
    V = ∫_Y^0 ∂_θu dz - Y v_prev,  u(θ,0) = u_w,  u_Y(θ,-Y_max) = 0.

    V equals v_e^(i+1)(θ,1) + v_p^(i+1), the normal velocity normalised to
    vanish at the wall.
    """

    ubar: LayerField
    vbar: LayerField
    forcing: LayerField
    wall_bc: PeriodicField
    v_prev: LayerField = None
    delta: float = 0.0

    def check(self, alpha=None, tol=1e-8):
        ub = self.ubar.values
        if np.min(ub) <= 0:
            raise ValueError("ubar must stay positive")
        if alpha is not None and np.min(ub) < alpha / 2:
            raise ValueError("ubar dropped below alpha/2")
        d1 = diff_matrix(self.ubar.y, 1, 6)
        div = dtheta(ub) + np.asarray((d1 @ self.vbar.values.T).T)
        return float(np.max(np.abs(div)))


@dataclass
class LinearizedPrandtlSolution:
    u: LayerField
    v: LayerField
    v_wall: LayerField
    A_inf: float
    p_next: LayerField = None
    gmres_iters: int = 0

    @property
    def u_tilde(self):
        return self.u.with_values(self.u.values - self.A_inf, decaying=True)

    @property
    def next_trace(self):
        """-v_p^(i+1)(θ, 0) = V(θ, -∞), the datum of the next outer order."""
        return PeriodicField(self.v_wall.values[:, 0] - np.mean(self.v_wall.values[:, 0]))


def interval_weights(y):
    """Rows W with (W g)_m ≈ ∫_{y_m}^{y_{m+1}} g, 4-point Lagrange rule."""
    y = np.asarray(y, dtype=float)
    n = y.size
    rows, cols, vals = [], [], []
    for m in range(n - 1):
        lo = min(max(m - 1, 0), n - 4)
        idx = np.arange(lo, lo + 4)
        c = 0.5 * (y[m] + y[m + 1])
        x = y[idx] - c
        a0, b0 = y[m] - c, y[m + 1] - c
        mom = np.array([(b0 ** (q + 1) - a0 ** (q + 1)) / (q + 1) for q in range(4)])
        w = np.linalg.solve(np.vander(x, 4, increasing=True).T, mom)
        rows.extend([m] * 4)
        cols.extend(idx)
        vals.extend(w)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n - 1, n))


class _Discretization:
    def __init__(self, problem, fd_order):
        self.pb = problem
        y = problem.ubar.y
        self.y = y
        self.n_theta = problem.ubar.n_theta
        self.n_y = y.size
        self.d1 = diff_matrix(y, 1, fd_order)
        self.d2 = diff_matrix(y, 2, fd_order)
        self.w = interval_weights(y)
        ub = problem.ubar.values
        self.ub = ub
        self.ub_t = dtheta(ub)
        self.ub_y = np.asarray((self.d1 @ ub.T).T)
        self.vb = problem.vbar.values
        self.delta = problem.delta
        self.size = 2 * self.n_theta * self.n_y

    def split(self, x):
        n = self.n_theta * self.n_y
        return x[:n].reshape(self.n_theta, self.n_y), x[n:].reshape(self.n_theta, self.n_y)

    def apply(self, x):
        u, V = self.split(x)
        ut = dtheta(u)
        uy = np.asarray((self.d1 @ u.T).T)
        uyy = np.asarray((self.d2 @ u.T).T)
        ru = self.ub * ut + self.vb * uy + V * self.ub_y + u * self.ub_t - uyy
        if self.delta:
            ru = ru - self.delta * dtheta(u, 2)
        ru[:, -1] = u[:, -1]
        ru[:, 0] = uy[:, 0]
        rv = np.empty_like(V)
        rv[:, :-1] = V[:, 1:] - V[:, :-1] + np.asarray((self.w @ ut.T).T)
        rv[:, -1] = V[:, -1]
        return np.concatenate([ru.ravel(), rv.ravel()])

    def mode_matrix(self, k):
        """Block matrix of the θ-averaged operator for Fourier mode k."""
        n = self.n_y
        ub0 = np.mean(self.ub, axis=0)
        vb0 = np.mean(self.vb, axis=0)
        uby0 = np.mean(self.ub_y, axis=0)
        ik = 1j * k
        top = (sparse.diags(ik * ub0 + self.delta * k * k) + sparse.diags(vb0) @ self.d1
               - self.d2).tolil()
        top_v = sparse.diags(uby0).tolil()
        top[n - 1, :] = 0
        top[n - 1, n - 1] = 1.0
        top_v[n - 1, :] = 0
        top[0, :] = self.d1[0, :]
        top_v[0, :] = 0
        bv = sparse.lil_matrix((n, n), dtype=complex)
        bu = sparse.lil_matrix((n, n), dtype=complex)
        bv[: n - 1, :] = sparse.eye(n - 1, n, 1) - sparse.eye(n - 1, n)
        bu[: n - 1, :] = ik * self.w
        bv[n - 1, n - 1] = 1.0
        mat = sparse.bmat([[top, top_v], [bu, bv]], format="csc")
        return mat.astype(complex)

    def full_matrix(self):
        """Sparse matrix of the full operator (dense in θ); small grids only."""
        nt, n = self.n_theta, self.n_y
        eye_t = np.eye(nt)
        dth = dtheta(eye_t)
        row_u = []
        ub, vb = self.ub.ravel(), self.vb.ravel()
        kt = sparse.kron(sparse.csr_matrix(dth), sparse.eye(n))
        ky1 = sparse.kron(sparse.eye(nt), self.d1)
        ky2 = sparse.kron(sparse.eye(nt), self.d2)
        luu = (sparse.diags(ub) @ kt + sparse.diags(vb) @ ky1
               + sparse.diags(self.ub_t.ravel()) - ky2)
        if self.delta:
            kt2 = sparse.kron(sparse.csr_matrix(dtheta(eye_t, 2)), sparse.eye(n))
            luu = luu - self.delta * kt2
        luv = sparse.diags(self.ub_y.ravel())
        luu = luu.tolil()
        luv = luv.tolil()
        bnd = sparse.kron(sparse.eye(nt), self.d1).tolil()
        for j in range(nt):
            r0, r1 = j * n, j * n + n - 1
            luu[r1, :] = 0
            luu[r1, r1] = 1.0
            luv[r1, :] = 0
            luu[r0, :] = bnd[r0, :]
            luv[r0, :] = 0
        step = sparse.eye(n - 1, n, 1) - sparse.eye(n - 1, n)
        last = sparse.csr_matrix(([1.0], ([0], [n - 1])), shape=(1, n))
        blk = sparse.vstack([step, last])
        wv = sparse.vstack([self.w, sparse.csr_matrix((1, n))])
        lvv = sparse.kron(sparse.eye(nt), blk)
        lvu = sparse.kron(sparse.eye(nt), wv) @ kt
        del row_u
        return sparse.bmat([[luu, luv], [lvu, lvv]], format="csc")


def _known_v(problem, lift_int):
    """Known part of V: u_w'(θ) ∫_Y^0 ℓ - Y v_prev."""
    uw = problem.wall_bc.values
    out = dtheta(uw)[:, None] * lift_int[None, :]
    if problem.v_prev is not None:
        out = out - problem.ubar.y[None, :] * problem.v_prev.values
    return out


def solve_linearized_prandtl(problem, fd_order=4, method="gmres", tol=1e-13,
                             max_iter=200):
    """Solve the order-i layer problem with the wall datum lifted by ℓ(Y).

    ``method`` is "gmres" (default; preconditioned by per-mode solves of the
    θ-averaged operator) or "direct" (sparse LU of the full system).
    """
    disc = _Discretization(problem, fd_order)
    y = disc.y
    uw = problem.wall_bc.values
    ell = lift_function(y)
    d1l = disc.d1 @ ell
    d2l = disc.d2 @ ell
    # ∫_Y^0 ℓ by the same interval rule as V, so the discrete V is consistent
    steps = disc.w @ ell
    lint = np.concatenate([np.cumsum(steps[::-1])[::-1], [0.0]])
    vk = _known_v(problem, lint)
    ul = uw[:, None] * ell[None, :]
    known = (disc.ub * dtheta(uw)[:, None] * ell[None, :] + disc.vb * uw[:, None] * d1l[None, :]
             + vk * disc.ub_y + (ul - uw[:, None]) * disc.ub_t - uw[:, None] * d2l[None, :])
    if problem.delta:
        known = known - problem.delta * dtheta(uw, 2)[:, None] * ell[None, :]
    rhs_u = problem.forcing.values - known
    rhs_u[:, -1] = 0.0
    rhs_u[:, 0] = -uw * d1l[0]
    rhs = np.concatenate([rhs_u.ravel(), np.zeros(disc.n_theta * disc.n_y)])

    iters = 0
    if method == "direct":
        x = spsolve(disc.full_matrix(), rhs)
    elif method == "gmres":
        nt, n = disc.n_theta, disc.n_y
        lus = []
        for k in range(nt // 2 + 1):
            kk = 0 if k == nt // 2 else k
            lus.append(splu(disc.mode_matrix(kk)))

        def precond(r):
            ru, rv = disc.split(r)
            hu = np.fft.rfft(ru, axis=0)
            hv = np.fft.rfft(rv, axis=0)
            ou = np.empty_like(hu)
            ov = np.empty_like(hv)
            for k, lu in enumerate(lus):
                s = lu.solve(np.concatenate([hu[k], hv[k]]))
                ou[k], ov[k] = s[:n], s[n:]
            return np.concatenate([np.fft.irfft(ou, n=nt, axis=0).ravel(),
                                   np.fft.irfft(ov, n=nt, axis=0).ravel()])

        A = LinearOperator((disc.size, disc.size), matvec=disc.apply, dtype=float)
        M = LinearOperator((disc.size, disc.size), matvec=precond, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            x = np.zeros_like(rhs)
        else:
            x, info = gmres(A, rhs, M=M, rtol=tol, atol=0.0, restart=60,
                            maxiter=max_iter, callback=cb, callback_type="pr_norm")
            if info != 0:
                raise SolverFailure("linearized layer solve did not converge; "
                                    "try a positive regularization delta")
        iters = count[0]
    else:
        raise ValueError(f"unknown method {method!r}")

    uh, Vh = disc.split(x)
    u = uh + ul
    V = Vh + vk
    A_inf = float(np.mean(u[:, 0]))
    v_dec = V - V[:, :1]
    return LinearizedPrandtlSolution(
        u=LayerField(u, y), v=LayerField(v_dec, y, decaying=True),
        v_wall=LayerField(V, y), A_inf=A_inf, gmres_iters=iters)


def operator_residual(problem, solution, fd_order=4):
    """Pointwise residual of the order-i layer equation and of V's definition."""
    disc = _Discretization(problem, fd_order)
    u = solution.u.values
    V = solution.v_wall.values
    ut = dtheta(u)
    uy = np.asarray((disc.d1 @ u.T).T)
    uyy = np.asarray((disc.d2 @ u.T).T)
    uw = u[:, -1:]
    res = (disc.ub * ut + disc.vb * uy + V * disc.ub_y + (u - uw) * disc.ub_t - uyy
           - problem.forcing.values)
    if problem.delta:
        res = res - problem.delta * dtheta(u, 2)
    res[:, 0] = 0.0
    res[:, -1] = u[:, -1] - problem.wall_bc.values
    vk = V.copy()
    if problem.v_prev is not None:
        vk = vk + disc.y[None, :] * problem.v_prev.values
    vres = np.zeros_like(V)
    vres[:, :-1] = vk[:, 1:] - vk[:, :-1] + np.asarray((disc.w @ ut.T).T)
    vres[:, -1] = vk[:, -1]
    return res, vres


def corrector_A(A_inf, chi=None, r_grid=None):
    """Radial corrector removing the far-field constant A∞ of a layer order.

    ``chi`` is accepted for interface symmetry; the analytic cut-off is used.
    Returns the corrector object and, when ``r_grid`` is given, A sampled on it.
    """
    corr = RadialCorrector(A_inf)
    if r_grid is None:
        return corr, corr.a_i
    return corr, corr.a_i, corr.A(np.asarray(r_grid, dtype=float))


def modify_euler(order, A_inf, corrector=None):
    """ũ_e = u_e + χA∞ + A, ṽ_e = v_e, p̃_e = p_e + 2a∫_0^r (χA∞ + A)."""
    outer = getattr(order, "outer", order)
    if corrector is None:
        corrector = RadialCorrector(A_inf)
    if corrector.A_inf != A_inf:
        raise ValueError("corrector does not match A_inf")
    return outer.with_corrector(corrector if A_inf != 0.0 else None)


def chi_values(r):
    return cutoff_chi(r)
