import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbdisk.cli import (ConfigError, RunConfig, apply_overrides, fitted_slope,
                        format_float, load_config, main, parse_config, read_csv,
                        serialize_config)

SMALL = [a for kv in ("grid.n_theta=16", "grid.n_y=201", "grid.n_psi=201", "grid.n_r=48")
         for a in ("--override", kv)]

eps_ladders = st.lists(st.floats(1e-3, 0.5, allow_nan=False), min_size=1, max_size=5,
                       unique=True).map(lambda v: tuple(sorted(v, reverse=True)))
modes = st.lists(st.tuples(st.integers(1, 7), st.floats(-5, 5), st.floats(-5, 5)),
                 min_size=1, max_size=3)


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.01, 10), eta=st.floats(0, 1), eps=eps_ladders, fm=modes,
       order=st.sampled_from([0, 1, 2]), y_max=st.floats(1, 60), grading=st.floats(0, 4))
def test_config_round_trip(alpha, eta, eps, fm, order, y_max, grading):
    text = "\n".join([
        f"alpha = {alpha!r}", f"eta = {eta!r}",
        "epsilons = " + ", ".join(repr(e) for e in eps),
        "f_modes = " + "; ".join(f"{n}:{c!r}:{s!r}" for n, c, s in fm),
        f"order = {order}", "grid.n_theta = 16", f"grid.y_max = {y_max!r}",
        f"grid.grading = {grading!r}",
    ])
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)
    assert cfg.epsilons == eps


def test_defaults_round_trip():
    cfg = RunConfig()
    assert parse_config(serialize_config(cfg)) == cfg


def test_comments_and_sections():
    cfg = parse_config("# header\nalpha = 2.0  # trailing\n\ngrid.n_r = 100\ntol.newton = 1e-9\n")
    assert cfg.alpha == 2.0 and cfg.grid.n_r == 100 and cfg.tol.newton == 1e-9


def test_overrides():
    cfg = apply_overrides(RunConfig(), ["eta=0", "epsilons=0.2,0.1", "grid.n_theta=32"])
    assert cfg.eta == 0.0 and cfg.epsilons == (0.2, 0.1) and cfg.grid.n_theta == 32


@pytest.mark.parametrize("item, name", [
    ("epsilons=0", "epsilons"),
    ("epsilons=0.05,0.1", "epsilons"),
    ("epsilons=0.6", "epsilons"),
    ("eta=-0.1", "eta"),
    ("order=3", "order"),
    ("alpha=abc", "alpha"),
    ("grid.n_theta=48", "grid.n_theta"),
    ("grid.bogus=1", "grid.bogus"),
    ("nothing=1", "nothing"),
    ("f_modes=40:1:0", "f_modes"),
])
def test_config_errors_name_field(item, name):
    with pytest.raises(ConfigError, match=name):
        apply_overrides(RunConfig(), [item])


def test_exit_code_config_error(tmp_path, capsys):
    assert main(["expand", "--out", str(tmp_path), "--override", "epsilons=0"]) == 4
    assert "epsilons" in capsys.readouterr().err
    assert main(["expand", "--config", str(tmp_path / "missing.cfg")]) == 4


def test_load_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("alpha = 1.5\norder = 1\n")
    cfg = load_config(p, ["order=0"])
    assert cfg.alpha == 1.5 and cfg.order == 0


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_lossless(x):
    assert float(format_float(x)) == x


def test_csv_round_trip(tmp_path):
    from pbdisk.cli import _write_csv
    rng = np.random.default_rng(0)
    vals = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-15, 15, (5, 3))
    _write_csv(tmp_path / "t.csv", ["a", "b", "c"], [[float(x) for x in row] for row in vals])
    back = read_csv(tmp_path / "t.csv")
    assert [[r["a"], r["b"], r["c"]] for r in back] == vals.tolist()


def test_fitted_slope():
    eps = [0.1, 0.05, 0.025]
    assert fitted_slope(eps, [3 * e ** 2.5 for e in eps]) == pytest.approx(2.5, abs=1e-12)


def test_expand_trivial(tmp_path):
    code = main(["expand", "--out", str(tmp_path), "--override", "eta=0", *SMALL])
    assert code == 0
    snap = json.loads((tmp_path / "snapshot.json").read_text())
    assert snap["a"] == 1.0
    for key in ("u_layer", "v_layer", "p_layer"):
        for vals in snap[key].values():
            assert np.max(np.abs(vals)) == 0.0
    assert all(v == 0.0 for v in snap["A_inf"].values())
    assert (tmp_path / "build.log").read_text().strip()


def test_expand_records_far_field(tmp_path):
    assert main(["expand", "--out", str(tmp_path), *SMALL]) == 0
    snap = json.loads((tmp_path / "snapshot.json").read_text())
    assert abs(snap["A_inf"]["1"]) > 1e-4 and abs(snap["A_inf"]["2"]) > 1e-4


def test_residual_trivial(tmp_path):
    code = main(["residual", "--out", str(tmp_path), "--override", "eta=0",
                 "--override", "epsilons=0.1,0.05", *SMALL])
    assert code == 0
    rows = read_csv(tmp_path / "residual.csv")
    assert len(rows) == 6
    assert max(max(r["res_u_weighted"], r["res_v_weighted"]) for r in rows) <= 1e-11
    summary = json.loads((tmp_path / "residual_summary.json").read_text())
    assert set(summary[0]) == {"criterion_id", "value", "threshold", "pass"}


def test_validate_trivial(tmp_path):
    code = main(["validate", "--out", str(tmp_path), "--override", "eta=0",
                 "--override", "epsilons=0.1,0.05", *SMALL])
    assert code == 0
    rows = read_csv(tmp_path / "validate.csv")
    for r in rows:
        assert r["E_u_inf"] <= 1e-10 and r["vort_dev_r050"] <= 1e-10
        assert r["newton_iters"] <= 2


def test_outputs_deterministic(tmp_path):
    args = ["--override", "order=1", "--override", "epsilons=0.1,0.05", *SMALL]
    for run in ("a", "b"):
        assert main(["expand", "--out", str(tmp_path / run), *args]) == 0
        main(["residual", "--out", str(tmp_path / run), *args])
    for name in ("snapshot.json", "build.log", "residual.csv", "residual_summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
