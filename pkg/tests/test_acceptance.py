"""One test per acceptance criterion, at the stated tolerances and time budgets."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from pbdisk.assembly import build_expansion, compose, evaluate_residual
from pbdisk.cli import (load_config, main, parse_config, residual_study, serialize_config,
                        validation_criteria, validation_ladder)
from pbdisk.euler import HarmonicSeries, OuterOrder, harmonic_velocity_solve
from pbdisk.fields import LayerField, PeriodicField, diff_matrix, dtheta, theta_grid
from pbdisk.nsvalidate import (interior_vorticity_deviation, make_grid,
                               solve_steady_ns)
from pbdisk.prandtl0 import PhysicalParams, psi_grid, solve_prandtl_fixed_point
from pbdisk.prandtllin import LinearizedPrandtlProblem, solve_linearized_prandtl

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
COS64 = PeriodicField.from_modes([(1, 1.0, 0.0)], 64)


def test_1_rigid_rotation():
    t0 = time.perf_counter()
    alpha = 1.3
    f = PeriodicField.from_modes([(2, 1.0, 0.0)], 64)
    stack = build_expansion(alpha, 0.0, f, order=2)
    assert stack.a == alpha
    for fam in (stack.u_layer, stack.v_layer, stack.p_layer):
        assert all(np.max(np.abs(lf.values)) == 0.0 for lf in fam.values())
    r = np.linspace(0.01, 1.0, 200)
    for N in (0, 1, 2):
        for eps in (0.1, 0.05):
            sol = compose(N, eps, stack, r)
            assert np.max(np.abs(sol.u_a.values - alpha * r)) <= 1e-11
            assert np.max(np.abs(sol.v_a.values)) <= 1e-11
            _, _, rep = evaluate_residual(sol)
            assert max(rep.max_abs, rep.res_weighted) <= 1e-11
    grid = make_grid(64, 384)
    for eps in (0.1, 0.035):
        ns = solve_steady_ns(eps, alpha, 0.0, f, grid)
        assert ns.newton_iters <= 2
        assert ns.final_residual <= 1e-11
        assert np.max(np.abs(ns.omega.values - 2 * alpha)) <= 1e-10
        assert np.max(np.abs(ns.u.values - alpha * ns.r)) <= 1e-11
        assert np.max(np.abs(ns.v.values)) <= 1e-11
    assert time.perf_counter() - t0 < 10


def test_2_batchelor_wood_invariance():
    t0 = time.perf_counter()
    p = PhysicalParams(1.0, 0.05, COS64)
    sol = solve_prandtl_fixed_point(p, psi_grid(1.1 * p.a * 20.0, 401))
    U, psi = sol.U.values, sol.U.y
    integral = 2 * np.pi * np.mean(U ** 2, axis=0)
    d = diff_matrix(psi, 1, accuracy=4) @ integral
    assert np.max(np.abs(d)) <= 1e-8
    assert abs(np.mean(U[:, -1] ** 2) - p.a ** 2) <= 1e-10
    assert time.perf_counter() - t0 < 30


def test_3_contraction():
    p = PhysicalParams(1.0, 0.05, COS64)
    sol = solve_prandtl_fixed_point(p, psi_grid(1.1 * p.a * 20.0, 401), tol=1e-11)
    inc = sol.increments
    assert sol.final_contraction_ratio <= 0.5
    assert all(b <= 0.5 * a for a, b in zip(inc, inc[1:]) if b > 1e-13)
    assert inc[-1] <= 1e-11
    assert sol.iterations <= 25


def test_4_harmonic_euler():
    r = np.linspace(0.01, 1.0, 60)
    t = theta_grid(32)
    th = t[:, None]
    for n in (1, 2):
        o = harmonic_velocity_solve(PeriodicField(np.cos(n * t)), r)
        rp = r[None, :] ** (n - 1)
        assert np.max(np.abs(o.v.values - rp * np.cos(n * th))) <= 1e-12
        assert np.max(np.abs(o.u.values + rp * np.sin(n * th))) <= 1e-12
    rng = np.random.default_rng(7)
    c = rng.standard_normal((2, 6))
    trace = sum(c[0, k] * np.cos((k + 1) * t) + c[1, k] * np.sin((k + 1) * t) for k in range(6))
    o = OuterOrder(HarmonicSeries.from_trace(PeriodicField(trace)), 1.0)
    div = dtheta(o.u(r)) + o.v(r) + r * o.v(r, 1)
    assert np.max(np.abs(div)) <= 1e-10
    assert np.max(np.abs(o.viscous_identity(r))) <= 1e-10
    t1, t2 = PeriodicField(np.cos(t)), PeriodicField(trace)
    s = PeriodicField(2.0 * t1.values - 3.0 * t2.values)
    o1, o2, o3 = (harmonic_velocity_solve(x, r) for x in (t1, t2, s))
    assert np.max(np.abs(o3.u.values - 2 * o1.u.values + 3 * o2.u.values)) <= 1e-12
    assert np.max(np.abs(o3.v.values - 2 * o1.v.values + 3 * o2.v.values)) <= 1e-12


def _manufactured_error(n_theta, n_y, y_max=20.0):
    """u* = cos θ e^Y about ū = 1, v̄ = 0; forcing is the operator applied to u*."""
    y = np.linspace(-y_max, 0, n_y)
    th = theta_grid(n_theta)[:, None]
    us = np.cos(th) * np.exp(y)
    f = -np.sin(th) * np.exp(y) - np.cos(th) * np.exp(y)
    pb = LinearizedPrandtlProblem(LayerField(1.0 + 0 * us, y), LayerField(0 * us, y),
                                  LayerField(f, y), PeriodicField(np.cos(th[:, 0])))
    return np.max(np.abs(solve_linearized_prandtl(pb).u.values - us))


def test_5_manufactured_solution():
    fine = _manufactured_error(64, 401)
    coarse = _manufactured_error(64, 201)
    assert fine <= 1e-6
    assert coarse / fine >= 3.5


def test_6_residual_scaling():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "residual.cfg")
    assert cfg.eta == 0.05 and cfg.order == 2 and cfg.epsilons == (0.1, 0.05, 0.025)
    _, slopes = residual_study(cfg)
    assert slopes[2] >= 2.5
    assert slopes[1] >= 1.5
    assert slopes[0] < slopes[1] < slopes[2]
    assert time.perf_counter() - t0 < 300


@pytest.fixture(scope="module")
def ladder():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "validate.cfg")
    rows, sols, stack = validation_ladder(cfg)
    return cfg, rows, sols, stack, time.perf_counter() - t0


def test_7_navier_stokes_ladder(ladder):
    cfg, rows, sols, stack, elapsed = ladder
    assert cfg.epsilons == (0.1, 0.07, 0.05, 0.035)
    assert (cfg.grid.n_theta, cfg.grid.n_r) == (64, 384)
    a = stack.a
    iters = [r[1] for r in rows]
    assert all(0 <= i <= 12 for i in iters)
    for col in (3, 4):
        v = [r[col] for r in rows]
        assert max(v) / min(v) < 2
    dev = [interior_vorticity_deviation(s.omega, a, 0.5) for s in sols]
    assert all(b < a_ for a_, b in zip(dev, dev[1:]))
    assert dev[-1] <= 0.05 * 2 * a
    assert all(c["pass"] for c in validation_criteria(cfg, rows, a))
    assert elapsed <= 900


def test_8_streamline_flux(ladder):
    from pbdisk.nsvalidate import streamline_flux_diagnostic
    cfg, _, sols, _, _ = ladder
    ns = next(s for s in sols if abs(s.epsilon - 0.05) < 1e-12)
    assert ns.eta == 0.05
    for d in streamline_flux_diagnostic(ns, (0.2, 0.5, 0.8)):
        assert d["ratio"] <= 0.05


def test_9_determinism_and_round_trip(tmp_path):
    small = ["--override", "grid.n_theta=16", "--override", "grid.n_r=64",
             "--override", "grid.n_y=201", "--override", "grid.n_psi=201",
             "--override", "epsilons=0.1,0.07"]
    outputs = {}
    for run in ("first", "second"):
        out = tmp_path / run
        for cmd in ("expand", "residual", "validate"):
            assert main([cmd, "--out", str(out), *small]) in (0, 2)
        outputs[run] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert set(outputs["first"]) >= {"snapshot.json", "build.log", "residual.csv",
                                     "residual_summary.json", "validate.csv", "summary.json"}
    assert outputs["first"] == outputs["second"]
    for item in json.loads(outputs["first"]["summary.json"]):
        assert set(item) == {"criterion_id", "value", "threshold", "pass"}
    for path in sorted(CONFIGS.glob("*.cfg")):
        cfg = load_config(path)
        text = serialize_config(cfg)
        assert parse_config(text) == cfg
        assert serialize_config(parse_config(text)) == text
