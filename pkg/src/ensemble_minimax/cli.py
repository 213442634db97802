"""Command-line front end.

    ensemble-minimax solve|sweep|analytic|grad-check|pmp-check|hausdorff --config PATH [--out DIR]

Exit status: 0 success, 1 runtime or numerical failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import builtin
from .adjoint import gateaux_gradient, pmp_check
from .core import Control, ParamSet, TimeGrid, control_lp_norm
from .cost import worst_case
from .errors import ConfigurationError, EnsembleError
from .gamma import (
    NetSpec, hausdorff_finite, hausdorff_net_to_interval, is_nested_sequence, make_uniform_net,
    sweep_refinement,
)
from .io import (
    REPORT_SCHEMA, load_config, line_plot_svg, read_control, write_control, write_csv, write_json,
)
from .qubit import AnalyticPulseParams, FidelityCost, analytic_control
from .solver import SolverConfig, solve_averaged, solve_minimax

log = logging.getLogger("ensemble_minimax")

THREADS_ENV = "ENSEMBLE_MINIMAX_THREADS"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

PROFILE_HEADER = ["alpha", "overlap", "infidelity", "cost_sq"]
TRACE_HEADER = ["iter", "worst_alpha", "worst_cost_sq", "worst_infidelity", "l2_sq", "J", "tau"]
SWEEP_HEADER = ["N", "max_infidelity", "min_infidelity", "control_l2_sq"]


# ------------------------------------------------------------------ helpers


class Run:
    """Objects derived from one validated configuration."""

    def __init__(self, cfg, out=None):
        self.cfg = cfg
        self.out = out or cfg.get("out") or os.getcwd()
        self.grid = TimeGrid(cfg["T"], cfg["dt"])
        self.problem, self.cost = builtin.build(cfg)
        self.box = (cfg["alpha_lo"], cfg["alpha_hi"])
        self.params = self.net(cfg["N"])
        self.test_net = self.net(cfg["test_N"])

    def net(self, n):
        return make_uniform_net(NetSpec.interval(*self.box, n))

    def analytic_params(self):
        if self.cfg["eps1"] is None or self.cfg["eps2"] is None:
            raise ConfigurationError("eps1 and eps2 are required")
        return AnalyticPulseParams(self.cfg["eps1"], self.cfg["eps2"])

    def initial_control(self):
        if self.cfg["initial_guess"] == "analytic":
            if not _is_qubit(self):
                raise ConfigurationError("initial_guess 'analytic' is only defined for the qubit problem")
            return analytic_control(self.analytic_params(), self.problem.spec, self.grid)
        return Control.zeros(self.grid, self.problem.control_dim)

    def solver_config(self):
        c = self.cfg
        return SolverConfig(
            gamma=c["gamma"], tau0=c["tau0"], max_iter=c["max_iter"],
            warmstart_iter=c["warmstart_iter"], warmstart_tau=c["warmstart_tau"],
            initial_control=self.initial_control(), grid=self.grid,
        )

    def path(self, name):
        return os.path.join(self.out, name)

    def grid_json(self):
        return {"T": self.grid.horizon, "dt": self.grid.dt, "cells": self.grid.n_cells}


def _is_qubit(run):
    return isinstance(run.cost, FidelityCost)


def profile_rows(run, params, costs):
    """``alpha, overlap, infidelity, cost_sq`` per parameter (nan for non-qubit problems)."""
    alphas = params.points[:, 0]
    if _is_qubit(run):
        cost_sq = run.cost.cost_sq(costs)
        overlap = np.sqrt(np.clip(1.0 - cost_sq, 0.0, 1.0))
        return list(zip(alphas, overlap, 1.0 - overlap, cost_sq))
    nan = np.full(len(alphas), np.nan)
    return list(zip(alphas, nan, nan, costs))


def net_summary(run, params, costs):
    wc = worst_case(costs, params)
    out = dict(size=len(params), worst_index=wc.index, worst_alpha=float(wc.theta[0]),
               max_cost=float(costs.max()), min_cost=float(costs.min()),
               max_infidelity=None, min_infidelity=None)
    if _is_qubit(run):
        inf = run.cost.infidelity(costs)
        out.update(max_infidelity=float(inf.max()), min_infidelity=float(inf.min()))
    return out


def write_profile(run, name, params, costs):
    write_csv(run.path(name), PROFILE_HEADER, profile_rows(run, params, costs))


def write_trace(run, name, trace):
    rows = []
    for r in trace:
        cost_sq = run.cost.cost_sq(r.worst_cost) if _is_qubit(run) else r.worst_cost
        rows.append((r.iteration, r.worst_theta, cost_sq, r.worst_infidelity, r.l2_sq, r.J, r.tau))
    write_csv(run.path(name), TRACE_HEADER, rows)


def plot_outputs(run, tag, u, params, costs):
    if not run.cfg["plots"]:
        return
    rows = np.array(profile_rows(run, params, costs), dtype=float)
    y = rows[:, 1] if _is_qubit(run) else rows[:, 3]
    line_plot_svg(run.path("profile.svg"), rows[:, 0], {tag: y}, "alpha",
                  "|<tar|psi(T)>|" if _is_qubit(run) else "terminal cost")
    line_plot_svg(run.path("control.svg"), u.grid.left_points,
                  {f"{tag} u{i}": u.values[:, i] for i in range(u.k)}, "t", "u")


# ----------------------------------------------------------------- commands


def cmd_solve(run, args):
    cfg, f = run.solver_config(), None
    f = cfg.running_cost()
    warm = solve_averaged(run.problem, run.params, run.cost, f, cfg)
    rep = solve_minimax(run.problem, run.params, run.cost, f, cfg, warm, test_net=run.test_net)
    u = rep.control
    write_control(run.path("control.csv"), u)
    write_profile(run, "profile.csv", run.test_net, rep.costs_test)
    write_trace(run, "trace.csv", rep.trace)
    report = {
        "command": "solve", "config": run.cfg, "grid": run.grid_json(),
        "solve": {
            "best_J": rep.best_J, "best_iteration": rep.best_iteration,
            "iterations": len(rep.trace), "control_l2_sq": control_lp_norm(u, 2) ** 2,
            "opt_net": net_summary(run, run.params, rep.costs_opt),
            "test_net": net_summary(run, run.test_net, rep.costs_test),
        },
    }
    write_json(run.path("report.json"), report, REPORT_SCHEMA)
    plot_outputs(run, "minimax", u, run.test_net, rep.costs_test)
    s = report["solve"]["test_net"]
    print(f"best J^N = {rep.best_J:.6g}  worst test cost = {s['max_cost']:.6g}  "
          f"max infidelity = {s['max_infidelity']}  |u|^2 = {report['solve']['control_l2_sq']:.6g}")
    return EXIT_OK


def _levels(run, args):
    if args.levels:
        try:
            return [int(v) for v in args.levels.split(",") if v.strip()]
        except ValueError:
            raise ConfigurationError(f"bad --levels value: {args.levels!r}") from None
    return list(run.cfg["levels"])


def cmd_sweep(run, args):
    levels = _levels(run, args)
    if sorted(levels) != levels or len(set(levels)) != len(levels):
        raise ConfigurationError("levels must be strictly increasing")
    cfg = run.solver_config()
    specs = [NetSpec.interval(*run.box, n) for n in levels]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = sweep_refinement(run.problem, specs, run.cost, cfg.running_cost(), cfg, run.test_net,
                               progress=lambda lv: log.info("N=%d done: worst=%.4g", lv.N, lv.worst_test))
    write_csv(run.path("sweep.csv"), SWEEP_HEADER,
              [(lv.N, lv.worst_test, lv.min_test, lv.control_l2_sq) for lv in rep.levels])
    for lv in rep.levels:
        write_control(run.path(f"control_N{lv.N}.csv"), lv.report.control)
        write_trace(run, f"trace_N{lv.N}.csv", lv.report.trace)
    report = {
        "command": "sweep", "config": run.cfg, "grid": run.grid_json(), "warnings": rep.warnings,
        "sweep": [
            dict(N=lv.N, eps=lv.eps, J=lv.J, worst_opt=lv.worst_opt, max_infidelity=lv.worst_test,
                 min_infidelity=lv.min_test, control_l2_sq=lv.control_l2_sq,
                 distance_to_ref=lv.distance_to_ref, norm_gap_to_ref=lv.norm_gap_to_ref)
            for lv in rep.levels
        ],
    }
    write_json(run.path("report.json"), report, REPORT_SCHEMA)
    for lv in rep.levels:
        print(f"N={lv.N:5d}  max={lv.worst_test:.4f}  min={lv.min_test:.4f}  |u|^2={lv.control_l2_sq:.4f}")
    return EXIT_OK


def cmd_analytic(run, args):
    if not _is_qubit(run):
        raise ConfigurationError("the analytic pulse is only defined for the qubit problem")
    p = run.analytic_params()
    u = analytic_control(p, run.problem.spec, run.grid)
    costs = run.problem.terminal_costs(run.test_net, u, run.cost)
    write_control(run.path("control.csv"), u)
    write_profile(run, "profile.csv", run.test_net, costs)
    report = {
        "command": "analytic", "config": run.cfg, "grid": run.grid_json(),
        "analytic": {"eps1": p.eps1, "eps2": p.eps2, "control_l2_sq": control_lp_norm(u, 2) ** 2,
                     "test_net": net_summary(run, run.test_net, costs)},
    }
    write_json(run.path("report.json"), report, REPORT_SCHEMA)
    plot_outputs(run, "analytic", u, run.test_net, costs)
    s = report["analytic"]["test_net"]
    print(f"analytic pulse: max infidelity = {s['max_infidelity']:.6g}  min = {s['min_infidelity']:.6g}")
    return EXIT_OK


def grad_check(problem, params, cost, f, grid, rng, n_trials=20, eps=1e-5, scale=0.5):
    """Largest relative error of the adjoint gradient against central differences.

    The relative error is ``|g - fd| / max(|fd|, 1e-3)``, so that a value below
    ``1e-5`` means ``|g - fd| <= max(1e-5 |fd|, 1e-8)``.
    """
    worst = 0.0
    for _ in range(n_trials):
        u = Control(grid, scale * rng.normal(size=(grid.n_cells, problem.control_dim)))
        j = int(rng.integers(len(params)))
        m = int(rng.integers(grid.n_cells))
        w = np.zeros(len(params))
        w[j] = 1.0
        g = gateaux_gradient(problem, params, w, u, cost, f)[m]
        single = ParamSet(params.points[j:j + 1])

        def J(v):
            return problem.terminal_costs(single, v, cost)[0] + f.integral(v)

        fd = np.empty(problem.control_dim)
        for i in range(problem.control_dim):
            up, um = u.values.copy(), u.values.copy()
            up[m, i] += eps
            um[m, i] -= eps
            fd[i] = (J(u.with_values(up)) - J(u.with_values(um))) / (2 * eps * grid.dt)
        err = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
        worst = max(worst, float(err.max()))
    return worst


def cmd_grad_check(run, args):
    rng = np.random.default_rng(run.cfg["seed"])
    f = run.solver_config().running_cost()
    err = grad_check(run.problem, run.params, run.cost, f, run.grid, rng)
    ok = err <= 1e-5
    print(f"max relative error = {err:.3e}  ({'ok' if ok else 'FAILED'}, threshold 1e-05)")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_pmp_check(run, args):
    if not args.control:
        raise ConfigurationError("pmp-check needs --control")
    try:
        u = read_control(args.control, run.grid)
    except FileNotFoundError:
        raise ConfigurationError(f"control file not found: {args.control}") from None
    f = run.solver_config().running_cost()
    rep = pmp_check(run.problem, run.params, u, run.cost, f, run.cfg["activation_tol"])
    w = rep.multiplier.weights
    write_csv(run.path("multiplier.csv"), ["alpha", "weight"], list(zip(run.params.points[:, 0], w)))
    summary = {
        "residual": rep.multiplier.residual, "support_slack": rep.support_slack,
        "activation_tol": rep.activation_tol, "active": rep.multiplier.active,
        "max_profile": float(rep.residual_profile.max()), "weight_sum": float(w.sum()),
    }
    write_json(run.path("report.json"),
               {"command": "pmp-check", "config": run.cfg, "grid": run.grid_json(), "pmp": summary},
               REPORT_SCHEMA)
    print(json.dumps({k: summary[k] for k in ("residual", "support_slack", "activation_tol")}))
    return EXIT_OK


def _net_from_json(obj):
    if isinstance(obj, dict) and "points" in obj:
        return ParamSet(obj["points"])
    try:
        return NetSpec(obj["lo"], obj["hi"], obj["n"])
    except (KeyError, TypeError):
        raise ConfigurationError("a net is {'lo', 'hi', 'n'} or {'points'}") from None


def cmd_hausdorff(path):
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(spec, dict) or "A" not in spec or "B" not in spec:
        raise ConfigurationError("hausdorff config needs keys 'A' and 'B'")
    A = _net_from_json(spec["A"])
    if spec["B"] == "interval":
        if not isinstance(A, NetSpec):
            raise ConfigurationError("distance to the interval needs a uniform net spec for A")
        d = hausdorff_net_to_interval(A)
    else:
        B = _net_from_json(spec["B"])
        as_set = lambda s: make_uniform_net(s) if isinstance(s, NetSpec) else s
        d = hausdorff_finite(as_set(A), as_set(B))
    print(repr(d))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "analytic": cmd_analytic,
    "grad-check": cmd_grad_check,
    "pmp-check": cmd_pmp_check,
}


def parser():
    p = argparse.ArgumentParser(prog="ensemble-minimax", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=[*COMMANDS, "hausdorff"])
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output directory (default: config 'out' or the current directory)")
    p.add_argument("--levels", help="comma-separated net sizes for sweep, e.g. 26,51,101")
    p.add_argument("--control", help="control.csv to check (pmp-check)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _set_threads():
    n = os.environ.get(THREADS_ENV)
    if n:
        import numba

        try:
            n = int(n)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {n!r}") from None
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None):
    args = parser().parse_args(argv)
    # old system TBB: numba falls back to another threading layer, nothing to report
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _set_threads()
        if args.command == "hausdorff":
            return cmd_hausdorff(args.config)
        cfg = load_config(args.config)
        if args.command == "sweep" and args.levels is None and not is_nested_sequence(cfg["levels"]):
            log.warning("sweep levels %s are not nested", cfg["levels"])
        run = Run(cfg, args.out)
        return COMMANDS[args.command](run, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnsembleError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
