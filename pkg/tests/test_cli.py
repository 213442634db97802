import json
import os

import jsonschema
import numpy as np
import pytest

from ensemble_minimax import QubitEnsemble, TimeGrid
from ensemble_minimax.cli import main
from ensemble_minimax.io import CONFIG_SCHEMA, REPORT_SCHEMA, read_control, read_csv, write_control

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
T20_CONFIG = os.path.join(ROOT, "configs", "paper_t20.json")
T50_CONFIG = os.path.join(ROOT, "configs", "paper_t50.json")

SMALL = {
    "problem": "qubit", "E": 1.0, "alpha_lo": -0.5, "alpha_hi": 0.5, "gamma": 0.0625,
    "T": 2.0, "dt": 0.03125, "N": 5, "test_N": 21, "tau0": 8.0, "max_iter": 20,
    "warmstart_iter": 10, "warmstart_tau": 4.0, "eps1": 1.0, "eps2": 0.5,
    "terminal_weight": 0.5, "initial_guess": "analytic", "levels": [3, 5],
    "activation_tol": None, "seed": 1, "plots": False,
}


@pytest.fixture
def config(tmp_path):
    def make(**overrides):
        cfg = dict(SMALL, **overrides)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        return str(path)
    return make


def run(*argv):
    return main([str(a) for a in argv])


def load_report(out):
    with open(os.path.join(out, "report.json")) as fh:
        rep = json.load(fh)
    jsonschema.validate(rep, REPORT_SCHEMA)
    return rep


def test_shipped_configs_valid():
    for path in (T20_CONFIG, T50_CONFIG):
        with open(path) as fh:
            jsonschema.validate(json.load(fh), CONFIG_SCHEMA)


def test_solve_outputs(config, tmp_path):
    out = tmp_path / "out"
    assert run("solve", "--config", config(plots=True), "--out", out) == 0
    rep = load_report(out)
    assert rep["command"] == "solve" and rep["grid"]["cells"] == 64
    header, rows = read_csv(out / "profile.csv")
    assert header == ["alpha", "overlap", "infidelity", "cost_sq"] and len(rows) == 21
    header, rows = read_csv(out / "trace.csv")
    assert header == ["iter", "worst_alpha", "worst_cost_sq", "worst_infidelity", "l2_sq", "J", "tau"]
    assert len(rows) == 20 and rows[0][0] == "1" and float(rows[0][-1]) == 9.0
    header, rows = read_csv(out / "control.csv")
    assert header == ["t", "u"] and len(rows) == 64
    assert (out / "profile.svg").exists() and (out / "control.svg").exists()
    inf = np.array([float(r[2]) for r in read_csv(out / "profile.csv")[1]])
    assert rep["solve"]["test_net"]["max_infidelity"] == inf.max()


def test_control_roundtrip_bitwise(tmp_path, rng):
    grid = TimeGrid(2.0, 2**-5)
    from ensemble_minimax import Control

    u = Control(grid, rng.normal(size=(grid.n_cells, 1)) * 10.0 ** rng.integers(-300, 300, size=(grid.n_cells, 1)))
    write_control(tmp_path / "c.csv", u)
    v = read_control(tmp_path / "c.csv", grid)
    assert np.array_equal(u.values, v.values)


def test_zero_iterations_zero_control(config, tmp_path):
    out = tmp_path / "z"
    cfg = config(max_iter=0, warmstart_iter=0, initial_guess="zero")
    assert run("solve", "--config", cfg, "--out", out) == 0
    _, rows = read_csv(out / "control.csv")
    assert all(float(r[1]) == 0.0 for r in rows)
    rep = load_report(out)
    assert rep["solve"]["test_net"]["max_infidelity"] == pytest.approx(1.0, abs=1e-12)


def test_missing_config(tmp_path, capsys):
    assert run("solve", "--config", tmp_path / "nope.json") == 2
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize("overrides", [
    {"gamma": -1.0},
    {"dt": 0.3},
    {"alpha_lo": 1.0},
    {"initial_guess": "random"},
    {"eps1": None},
    {"unknown": 1},
])
def test_invalid_config(config, tmp_path, overrides):
    assert run("solve", "--config", config(**overrides), "--out", tmp_path / "x") == 2
    assert not (tmp_path / "x").exists()


def test_missing_field(tmp_path):
    cfg = dict(SMALL)
    del cfg["tau0"]
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("solve", "--config", tmp_path / "c.json") == 2


def test_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    assert run("solve", "--config", tmp_path / "c.json") == 2


def test_sweep(config, tmp_path):
    out = tmp_path / "s"
    assert run("sweep", "--config", config(), "--out", out) == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header == ["N", "max_infidelity", "min_infidelity", "control_l2_sq"]
    assert [r[0] for r in rows] == ["3", "5"]
    rep = load_report(out)
    assert rep["warnings"] == [] and rep["sweep"][-1]["distance_to_ref"] == 0.0


def test_sweep_levels_flag(config, tmp_path):
    out = tmp_path / "s1"
    assert run("sweep", "--config", config(), "--out", out, "--levels", "5") == 0
    assert len(read_csv(out / "sweep.csv")[1]) == 1
    out = tmp_path / "s2"
    assert run("sweep", "--config", config(), "--out", out, "--levels", "3,4") == 0
    assert load_report(out)["warnings"]
    assert run("sweep", "--config", config(), "--out", out, "--levels", "5,3") == 2
    assert run("sweep", "--config", config(), "--out", out, "--levels", "a,b") == 2


@pytest.mark.parametrize("path, eps", [(T20_CONFIG, (0.5, 0.1)), (T50_CONFIG, (0.25, 0.08))])
def test_analytic_shipped_configs(path, eps, tmp_path):
    out = tmp_path / "a"
    assert run("analytic", "--config", path, "--out", out) == 0
    rep = load_report(out)
    assert (rep["analytic"]["eps1"], rep["analytic"]["eps2"]) == eps
    header, rows = read_csv(out / "profile.csv")
    assert header == ["alpha", "overlap", "infidelity", "cost_sq"] and len(rows) == 1001


def test_analytic_inconsistent_horizon(config, tmp_path):
    assert run("analytic", "--config", config(eps2=0.25, initial_guess="zero"), "--out", tmp_path) == 2


def test_grad_check(config, capsys):
    assert run("grad-check", "--config", config()) == 0
    assert "ok" in capsys.readouterr().out
    assert run("grad-check", "--config", config(max_iter=0, warmstart_iter=0)) == 0


def test_grad_check_oscillator(config):
    assert run("grad-check", "--config", config(problem="oscillator", initial_guess="zero")) == 0


def test_grad_check_detects_sign_flip(config, monkeypatch, capsys):
    original = QubitEnsemble.couplings

    def flipped(self, params, u, cost, indices):
        return -original(self, params, u, cost, indices)

    monkeypatch.setattr(QubitEnsemble, "couplings", flipped)
    assert run("grad-check", "--config", config()) == 1
    assert "FAILED" in capsys.readouterr().out


def test_pmp_check(config, tmp_path):
    out = tmp_path / "p"
    cfg = config()
    assert run("solve", "--config", cfg, "--out", out) == 0
    assert run("pmp-check", "--config", cfg, "--out", out, "--control", out / "control.csv") == 0
    rep = load_report(out)
    header, rows = read_csv(out / "multiplier.csv")
    assert header == ["alpha", "weight"] and len(rows) == 5
    w = np.array([float(r[1]) for r in rows])
    assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)
    assert rep["pmp"]["support_slack"] <= rep["pmp"]["activation_tol"]


def test_pmp_check_zero_control(config, tmp_path):
    out = tmp_path / "p0"
    cfg = config(max_iter=0, warmstart_iter=0, initial_guess="zero")
    assert run("solve", "--config", cfg, "--out", out) == 0
    assert run("pmp-check", "--config", cfg, "--out", out, "--control", out / "control.csv") == 0
    pmp = load_report(out)["pmp"]
    assert pmp["residual"] == 0.0 and pmp["support_slack"] == 0.0 and pmp["max_profile"] == 0.0


def test_pmp_check_errors(config, tmp_path):
    out = tmp_path / "pe"
    assert run("solve", "--config", config(max_iter=0, warmstart_iter=0), "--out", out) == 0
    # control written on a 64-cell grid, config asks for 128 cells
    assert run("pmp-check", "--config", config(dt=2**-6), "--control", out / "control.csv") == 2
    assert run("pmp-check", "--config", config(), "--control", tmp_path / "none.csv") == 2
    assert run("pmp-check", "--config", config()) == 2


@pytest.mark.parametrize("spec, expected", [
    ({"A": {"points": [0.0, 1.0]}, "B": {"points": [0.0, 1.0]}}, 0.0),
    ({"A": {"points": [0.0]}, "B": {"points": [1.0]}}, 1.0),
    ({"A": {"points": [0.0, 1.0]}, "B": {"points": [0.0, 0.5, 1.0]}}, 0.5),
    ({"A": {"lo": 0, "hi": 1, "n": 2}, "B": {"lo": 0, "hi": 1, "n": 3}}, 0.5),
    ({"A": {"lo": -0.5, "hi": 0.5, "n": 101}, "B": "interval"}, 0.005),
])
def test_hausdorff(spec, expected, tmp_path, capsys):
    (tmp_path / "h.json").write_text(json.dumps(spec))
    assert run("hausdorff", "--config", tmp_path / "h.json") == 0
    assert abs(float(capsys.readouterr().out) - expected) <= 1e-15


def test_hausdorff_bad_input(tmp_path):
    (tmp_path / "h.json").write_text(json.dumps({"A": {"points": [0.0]}}))
    assert run("hausdorff", "--config", tmp_path / "h.json") == 2
    (tmp_path / "h.json").write_text(json.dumps({"A": {"points": [[0, 0]]}, "B": "interval"}))
    assert run("hausdorff", "--config", tmp_path / "h.json") == 2


def test_thread_override(config, monkeypatch):
    monkeypatch.setenv("ENSEMBLE_MINIMAX_THREADS", "1")
    assert run("grad-check", "--config", config(max_iter=0)) == 0
