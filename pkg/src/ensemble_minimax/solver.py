"""Worst-case iterative maximum principle and the averaged warm start.

Each worst-case iteration simulates every ensemble member, picks the member
with the largest terminal cost (smallest index on ties), computes its
adjoint, and moves the control on every cell to the maximiser of the
augmented Hamiltonian

    b(t) v - gamma |v|^2 - tau/2 |v - u(t)|^2,

with ``tau = tau0 + n - 1`` on iteration ``n``. The proximal weight grows by
one per iteration, so the step sizes ``1/tau`` vanish but are not summable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adjoint import aug_hamiltonian_argmax
from .core import Control, TimeGrid
from .cost import QuadraticRunningCost, worst_case
from .errors import ConfigurationError

__all__ = ["SolverConfig", "IterationRecord", "SolveReport", "tau_schedule", "solve_averaged", "solve_minimax"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    gamma: float = 2.0**-4
    tau0: float = 8.0
    max_iter: int = 1000
    warmstart_iter: int = 400
    warmstart_tau: float = 4.0
    initial_control: Control | None = None
    grid: TimeGrid | None = None

    def __post_init__(self):
        if not (self.gamma > 0 and self.tau0 > 0 and self.warmstart_tau > 0):
            raise ConfigurationError("gamma, tau0 and warmstart_tau must be positive")
        if self.max_iter < 0 or self.warmstart_iter < 0:
            raise ConfigurationError("iteration counts must be nonnegative")
        if self.initial_control is None and self.grid is None:
            raise ConfigurationError("give either a time grid or an initial control")
        if self.initial_control is not None and self.grid is not None \
                and self.initial_control.grid != self.grid:
            raise ConfigurationError("initial control lives on a different grid")

    def start(self, k=1):
        if self.initial_control is not None:
            return self.initial_control
        return Control.zeros(self.grid, k)

    def running_cost(self):
        return QuadraticRunningCost(self.gamma)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    worst_index: int
    worst_theta: float
    worst_cost: float
    worst_infidelity: float
    l2_sq: float
    J: float
    tau: float


@dataclass
class SolveReport:
    control: Control
    last_control: Control
    trace: list
    best_J: float
    best_iteration: int
    costs_opt: np.ndarray
    worst_opt: object
    costs_test: np.ndarray | None = None
    worst_test: object = None
    test_params: object = None
    pmp: object = None
    best_J_history: list = field(default_factory=list)

    def worst_cost_spread(self, frac=0.1):
        """Range of the worst-case cost over the last ``frac`` of the iterations.

        The proximal iteration only resolves the maximum up to this
        oscillation, which makes it a natural activation tolerance for the
        multiplier estimate.
        """
        if not self.trace:
            return 0.0
        tail = self.trace[-max(1, int(round(frac * len(self.trace)))):]
        w = [r.worst_cost for r in tail]
        return float(max(w) - min(w))


def tau_schedule(tau0, max_iter):
    """Proximal weights used on iterations 1..max_iter."""
    return tau0 + np.arange(max_iter, dtype=float)


def _require_quadratic(f, config):
    if not isinstance(f, QuadraticRunningCost):
        raise ConfigurationError("the solver needs the quadratic running cost")
    if f.gamma != config.gamma:
        raise ConfigurationError("running-cost weight differs from config.gamma")


def _infidelity(a, cost):
    if hasattr(a, "infidelity"):
        return float(a.infidelity(cost))
    return float("nan")


def solve_averaged(problem, params, a, f, config):
    """Proximal maximum-principle iteration on the uniformly averaged cost.

    Uses the fixed proximal weight ``config.warmstart_tau`` and starts from
    ``config.initial_control`` (zero by default).
    """
    _require_quadratic(f, config)
    u = config.start(problem.control_dim)
    n = len(params)
    all_idx = np.arange(n)
    tau = config.warmstart_tau
    for _ in range(config.warmstart_iter):
        b = problem.couplings(params, u, a, all_idx).mean(axis=0)
        u = u.with_values(aug_hamiltonian_argmax(b, u.values, config.gamma, tau))
    return u


def solve_minimax(problem, params, a, f, config, warm_start, *, test_net=None, pmp=False,
                  activation_tol=None):
    """Run the worst-case iteration from ``warm_start``.

    The returned control is the iterate with the smallest ``J^N``
    encountered, including the one produced by the last update. With
    ``pmp=True`` the first-order conditions are checked at that control;
    ``activation_tol`` then defaults to :meth:`SolveReport.worst_cost_spread`.
    """
    _require_quadratic(f, config)
    u = warm_start
    if u.k != problem.control_dim:
        raise ConfigurationError("warm start has the wrong number of channels")
    taus = tau_schedule(config.tau0, config.max_iter)
    trace = []
    best = (np.inf, -1, u, None)
    history = []

    def evaluate(u):
        costs = problem.terminal_costs(params, u, a)
        return costs, worst_case(costs, params)

    for n in range(1, config.max_iter + 1):
        costs, wc = evaluate(u)
        l2 = float(np.sum(u.values**2) * u.grid.dt)
        J = wc.value + config.gamma * l2
        if J < best[0]:
            best = (J, n - 1, u, costs)
        history.append(best[0])
        tau = float(taus[n - 1])
        trace.append(IterationRecord(
            iteration=n, worst_index=wc.index, worst_theta=float(wc.theta[0]),
            worst_cost=wc.value, worst_infidelity=_infidelity(a, wc.value),
            l2_sq=l2, J=J, tau=config.tau0 + n,
        ))
        b = problem.couplings(params, u, a, [wc.index])[0]
        u = u.with_values(aug_hamiltonian_argmax(b, u.values, config.gamma, tau))
        if n % 100 == 0:
            log.debug("iter %d  J=%.6g  worst=%d", n, J, wc.index)

    costs, wc = evaluate(u)
    J = wc.value + config.gamma * float(np.sum(u.values**2) * u.grid.dt)
    if J < best[0]:
        best = (J, config.max_iter, u, costs)
    best_J, best_it, best_u, best_costs = best

    report = SolveReport(
        control=best_u, last_control=u, trace=trace, best_J=best_J, best_iteration=best_it,
        costs_opt=best_costs, worst_opt=worst_case(best_costs, params),
        best_J_history=history,
    )
    if test_net is not None:
        ct = problem.terminal_costs(test_net, best_u, a)
        report.costs_test = ct
        report.worst_test = worst_case(ct, test_net)
        report.test_params = test_net
    if pmp:
        from .adjoint import pmp_check

        if activation_tol is None:
            activation_tol = report.worst_cost_spread() or None
        report.pmp = pmp_check(problem, params, best_u, a, f, activation_tol)
    return report
