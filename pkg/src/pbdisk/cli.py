"""
Command line driver: ``pbdisk expand|residual|validate --config FILE --out DIR``.

Config files are flat ``key = value`` text with dotted section keys; ``#``
starts a comment.  Exit codes: 0 all criteria pass, 2 a numerical criterion
failed, 3 solver failure, 4 config error.
"""

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

__all__ = [
    "RunConfig", "ConfigError", "parse_config", "serialize_config", "load_config",
    "apply_overrides", "cmd_expand", "cmd_residual", "cmd_validate", "main",
    "format_float", "read_csv",
]

EXIT_OK, EXIT_CRITERION, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    n_theta: int = 64
    n_r: int = 384
    n_y: int = 401
    y_max: float = 20.0
    n_psi: int = 401
    psi_max: float = 0.0  # 0 selects 1.1·a·y_max
    grading: float = 2.0


@dataclass(frozen=True)
class TolConfig:
    fixed_point: float = 1e-11
    newton: float = 1e-10
    krylov: float = 1e-13
    delta: float = 0.0


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 1.0
    eta: float = 0.05
    f_modes: tuple = ((1, 1.0, 0.0),)
    epsilons: tuple = (0.1, 0.07, 0.05, 0.035)
    order: int = 2
    output_dir: str = "out"
    grid: GridConfig = field(default_factory=GridConfig)
    tol: TolConfig = field(default_factory=TolConfig)

    def validate(self):
        if not self.alpha > 0:
            raise ConfigError("alpha: must be positive")
        if not self.eta >= 0:
            raise ConfigError("eta: must be non-negative")
        if self.order not in (0, 1, 2):
            raise ConfigError("order: must be 0, 1 or 2")
        if not self.epsilons:
            raise ConfigError("epsilons: empty ladder")
        for e in self.epsilons:
            if not 0 < e <= 0.5:
                raise ConfigError(f"epsilons: value {e!r} outside (0, 0.5]")
        if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ConfigError("epsilons: must be strictly decreasing")
        n = self.grid.n_theta
        if n < 4 or n & (n - 1):
            raise ConfigError("grid.n_theta: must be a power of two >= 4")
        for m, _, _ in self.f_modes:
            if m <= 0 or m >= n // 2:
                raise ConfigError(f"f_modes: mode {m} must satisfy 0 < n < n_theta/2")
        if self.grid.n_y < 8 or self.grid.n_r < 8 or self.grid.n_psi < 8:
            raise ConfigError("grid: n_y, n_r and n_psi must be at least 8")
        if not self.grid.y_max > 0:
            raise ConfigError("grid.y_max: must be positive")
        if self.tol.delta < 0:
            raise ConfigError("tol.delta: must be non-negative")
        return self


def format_float(x):
    """17 significant digits, the lossless CSV format."""
    return format(float(x), ".17g")


def _fmt_value(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg):
    lines = ["# pbdisk run configuration"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "f_modes":
            lines.append("f_modes = " + "; ".join(
                f"{n}:{_fmt_value(float(c))}:{_fmt_value(float(s))}" for n, c, s in v))
        elif f.name == "epsilons":
            lines.append("epsilons = " + ", ".join(_fmt_value(float(e)) for e in v))
        elif f.name in ("grid", "tol"):
            for g in fields(v):
                lines.append(f"{f.name}.{g.name} = {_fmt_value(getattr(v, g.name))}")
        else:
            lines.append(f"{f.name} = {_fmt_value(v)}")
    return "\n".join(lines) + "\n"


def _convert(key, raw, proto):
    try:
        if key == "f_modes":
            modes = []
            for part in filter(None, (p.strip() for p in raw.split(";"))):
                n, c, s = part.split(":")
                modes.append((int(n), float(c), float(s)))
            return tuple(modes)
        if key == "epsilons":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if isinstance(proto, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


def _set(cfg, key, raw):
    if "." in key:
        sec, sub = key.split(".", 1)
        if sec not in ("grid", "tol"):
            raise ConfigError(f"{key}: unknown section")
        block = getattr(cfg, sec)
        names = {f.name for f in fields(block)}
        if sub not in names:
            raise ConfigError(f"{key}: unknown key")
        return replace(cfg, **{sec: replace(block, **{sub: _convert(key, raw, getattr(block, sub))})})
    names = {f.name for f in fields(cfg)} - {"grid", "tol"}
    if key not in names:
        raise ConfigError(f"{key}: unknown key")
    return replace(cfg, **{key: _convert(key, raw, getattr(cfg, key))})


def parse_config(text, base=None):
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        cfg = _set(cfg, key, raw)
    return cfg.validate()


def apply_overrides(cfg, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        cfg = _set(cfg, key, raw)
    return cfg.validate()


def load_config(path, overrides=None):
    text = Path(path).read_text() if path else ""
    return apply_overrides(parse_config(text), overrides)


def _wall_f(cfg):
    from .fields import PeriodicField
    return PeriodicField.from_modes(cfg.f_modes, cfg.grid.n_theta)


def _build(cfg, order=None):
    from .assembly import build_expansion
    from .prandtl0 import batchelor_wood_constant

    f = _wall_f(cfg)
    a = batchelor_wood_constant(cfg.alpha, cfg.eta, f)
    n_psi = cfg.grid.n_psi
    margin = cfg.grid.psi_max / (a * cfg.grid.y_max) if cfg.grid.psi_max > 0 else 1.1
    return build_expansion(
        cfg.alpha, cfg.eta, f, order=cfg.order if order is None else order,
        y_max=cfg.grid.y_max, n_y=cfg.grid.n_y, n_psi=n_psi, psi_margin=margin,
        fp_tol=cfg.tol.fixed_point, delta=cfg.tol.delta, krylov_tol=cfg.tol.krylov)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(x) if isinstance(x, float) else x for x in row])


def read_csv(path):
    """Rows as dicts; numeric cells become floats."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                try:
                    rec[k] = float(v)
                except ValueError:
                    rec[k] = v
            out.append(rec)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _criterion(cid, value, threshold, ok):
    return {"criterion_id": cid, "value": float(value), "threshold": float(threshold),
            "pass": bool(ok)}


def cmd_expand(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stack = _build(cfg)
    _write_json(out / "snapshot.json", stack.to_dict())
    (out / "build.log").write_text("\n".join(stack.log) + "\n")
    return EXIT_OK


def fitted_slope(eps, res):
    """Least-squares slope of log res against log ε."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(res, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


RESIDUAL_THRESHOLDS = {1: 1.5, 2: 2.5}


def residual_study(cfg, stack=None):
    """Rows of the residual CSV, one per (order, ε), plus fitted slopes per order."""
    import warnings
    from .assembly import UnderResolvedWarning, compose, evaluate_residual

    stack = stack or _build(cfg)
    rows = []
    slopes = {}
    for N in range(cfg.order + 1):
        prev = None
        series = []
        for eps in cfg.epsilons:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", UnderResolvedWarning)
                sol = compose(N, eps, stack, np.array([1.0]))
                _, _, rep = evaluate_residual(sol)
            warn = "under_resolved" if rep.under_resolved or caught else ""
            res = rep.res_weighted
            slope = ""
            if prev is not None and prev[1] > 0 and res > 0:
                slope = math.log(prev[1] / res) / math.log(prev[0] / eps)
            rows.append([eps, N, rep.res_u_weighted, rep.res_v_weighted,
                         rep.res_interior, rep.res_layer, slope, warn])
            series.append(res)
            prev = (eps, res)
        if len(series) >= 2 and min(series) > 0:
            slopes[N] = fitted_slope(cfg.epsilons, series)
    return rows, slopes


def cmd_residual(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows, slopes = residual_study(cfg)
    header = ["epsilon", "order", "res_u_weighted", "res_v_weighted", "res_interior",
              "res_layer", "slope", "warning"]
    _write_csv(out / "residual.csv", header, rows)
    crit = []
    if cfg.eta == 0:
        worst = max(max(r[2], r[3]) for r in rows)
        crit.append(_criterion("1.residual", worst, 1e-11, worst <= 1e-11))
    else:
        for N, th in RESIDUAL_THRESHOLDS.items():
            if N in slopes:
                crit.append(_criterion(f"6.slope_N{N}", slopes[N], th, slopes[N] >= th))
        ordered = [slopes[N] for N in sorted(slopes)]
        if len(ordered) >= 2:
            gap = min(b - a for a, b in zip(ordered, ordered[1:]))
            crit.append(_criterion("6.monotone_in_N", gap, 0.0, gap > 0))
    _write_json(out / "residual_summary.json", crit)
    return EXIT_OK if all(c["pass"] for c in crit) else EXIT_CRITERION


def validation_ladder(cfg, stack=None, levels=(0.2, 0.5, 0.8)):
    """Solve the NS ladder from composite seeds; returns (rows, solutions)."""
    from .assembly import _Composite
    from .nsvalidate import (NewtonFailure, error_norms, guess_from_velocity,
                             interior_vorticity_deviation, leading_order_reference,
                             make_grid, solve_steady_ns, streamline_flux_diagnostic)

    stack = stack or _build(cfg)
    f = _wall_f(cfg)
    grid = make_grid(cfg.grid.n_theta, cfg.grid.n_r, cfg.grid.grading)
    rows, sols = [], []
    prev = None
    for eps in cfg.epsilons:
        ev = _Composite(stack, cfg.order, eps)
        seed = guess_from_velocity(grid, lambda r: ev.fields(r)["u"][0])
        try:
            try:
                sol = solve_steady_ns(eps, cfg.alpha, cfg.eta, f, grid, seed,
                                      tol=cfg.tol.newton)
            except NewtonFailure:
                if prev is None:
                    raise
                sol = solve_steady_ns(eps, cfg.alpha, cfg.eta, f, grid, prev,
                                      tol=cfg.tol.newton)
        except NewtonFailure:
            nan = float("nan")
            rows.append([eps, -1, nan, nan, nan, nan, nan])
            sols.append(None)
            if prev is None:
                break
            continue
        en = error_norms(sol, leading_order_reference(stack, sol))
        dev = interior_vorticity_deviation(sol.omega, stack.a, 0.5)
        if cfg.eta == 0:
            flux = 0.0
        else:
            flux = max(d["ratio"] for d in streamline_flux_diagnostic(sol, levels))
        rows.append([eps, sol.newton_iters, en["E_u_inf"], en["E_u_inf"] / eps,
                     en["E_v_inf"] / eps, dev, flux])
        sols.append(sol)
        prev = sol
    return rows, sols, stack


def _band(values):
    v = [x for x in values if np.isfinite(x)]
    if not v or max(v) <= 1e-10:  # exact solution, errors at round-off
        return 1.0
    if min(v) <= 0:
        return float("inf")
    return max(v) / min(v)


def validation_criteria(cfg, rows, a):
    crit = []
    iters = [r[1] for r in rows]
    worst_it = max(iters) if all(i >= 0 for i in iters) else float("inf")
    crit.append(_criterion("7a.newton_iters", worst_it, 12, worst_it <= 12))
    bu, bv = _band([r[3] for r in rows]), _band([r[4] for r in rows])
    crit.append(_criterion("7b.E_u_over_eps_band", bu, 2.0, bu < 2.0))
    crit.append(_criterion("7b.E_v_over_eps_band", bv, 2.0, bv < 2.0))
    dev = [r[5] for r in rows]
    if max(dev) <= 1e-12:
        worst_ratio = 0.0
    else:
        worst_ratio = max((b / a_ if a_ > 0 else float("inf"))
                          for a_, b in zip(dev, dev[1:])) if len(dev) > 1 else 0.0
    crit.append(_criterion("7c.vort_dev_ratio", worst_ratio, 1.0, worst_ratio < 1.0))
    crit.append(_criterion("7c.vort_dev_final", dev[-1], 0.1 * a, dev[-1] <= 0.1 * a))
    for r in rows:
        if abs(r[0] - 0.05) < 1e-12:
            crit.append(_criterion("8.flux_ratio", r[6], 0.05, r[6] <= 0.05))
    return crit


def cmd_validate(cfg, out):
    from .nsvalidate import NewtonFailure

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, sols, stack = validation_ladder(cfg)
    except NewtonFailure as exc:
        print(f"validate: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    header = ["epsilon", "newton_iters", "E_u_inf", "E_u_inf_over_eps",
              "E_v_inf_over_eps", "vort_dev_r050", "flux_diag_max"]
    _write_csv(out / "validate.csv", header, rows)
    crit = validation_criteria(cfg, rows, stack.a)
    _write_json(out / "summary.json", crit)
    if any(r[1] < 0 for r in rows):
        return EXIT_SOLVER
    return EXIT_OK if all(c["pass"] for c in crit) else EXIT_CRITERION


COMMANDS = {"expand": cmd_expand, "residual": cmd_residual, "validate": cmd_validate}


def main(argv=None):
    from .prandtl0 import ContractionFailure, LayerSeparationError
    from .prandtllin import SolverFailure

    ap = argparse.ArgumentParser(prog="pbdisk", description=__doc__.strip().splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value config file (defaults if omitted)")
    ap.add_argument("--out", help="output directory (default: output_dir from config)")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    try:
        return COMMANDS[args.command](cfg, out)
    except (ContractionFailure, LayerSeparationError, SolverFailure) as exc:
        print(f"{args.command}: solver failure in {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
