"""
Worst-case pulse for a qubit with uncertain detuning
====================================================

A single control field drives every qubit of the ensemble

    i psi' = ((E + alpha) sz + u(t) sx) psi,    alpha in [-0.5, 0.5],

from the ground state towards the excited state. We optimise the worst
member on a 101-point net, then compare the result on a 1001-point test net
with the open-loop pulse of the uniform-controllability construction.

Run from the repository root: ``python notebooks/plot_worst_case_qubit.py``.
"""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ensemble_minimax import (
    AnalyticPulseParams, FidelityCost, QubitEnsemble, QubitEnsembleSpec, SolverConfig, TimeGrid,
    analytic_control, solve_averaged, solve_minimax,
)
from ensemble_minimax.gamma import NetSpec, make_uniform_net

OUT = os.environ.get("OUT", ".")
T, eps = 20.0, (0.5, 0.1)

###############################################################################
# The ensemble and the two parameter nets

spec = QubitEnsembleSpec(E=1.0, alpha_lo=-0.5, alpha_hi=0.5)
qubit = QubitEnsemble(spec)
grid = TimeGrid(T, 2**-5)
opt_net = make_uniform_net(NetSpec.interval(-0.5, 0.5, 101))
test_net = make_uniform_net(NetSpec.interval(-0.5, 0.5, 1001))

###############################################################################
# The analytic pulse has a slowly varying envelope and a chirped carrier.
# It also serves as the starting point of the iteration: the zero control
# is a critical point and the iteration would never leave it.

u_an = analytic_control(AnalyticPulseParams(*eps), spec, grid)

cost = FidelityCost(weight=0.5)
cfg = SolverConfig(gamma=2**-4, tau0=8, max_iter=1000, warmstart_iter=400, warmstart_tau=4,
                   initial_control=u_an)
f = cfg.running_cost()

warm = solve_averaged(qubit, opt_net, cost, f, cfg)
rep = solve_minimax(qubit, opt_net, cost, f, cfg, warm, test_net=test_net)
print(f"best J^N = {rep.best_J:.4f} at iteration {rep.best_iteration}")

###############################################################################
# Infidelity 1 - |<tar|psi(T)>| across the detuning range

alpha = test_net.scalars
inf_mm = cost.infidelity(rep.costs_test)
inf_an = cost.infidelity(qubit.terminal_costs(test_net, u_an, cost))
print(f"worst infidelity: minimax {inf_mm.max():.4f}, analytic {inf_an.max():.4f}")

fig, ax = plt.subplots(1, 2, figsize=(10, 3.5))
ax[0].plot(alpha, 1 - inf_an, label="analytic")
ax[0].plot(alpha, 1 - inf_mm, label="minimax")
ax[0].set_xlabel("alpha")
ax[0].set_ylabel("|<tar|psi(T)>|")
ax[0].legend()
ax[1].plot(grid.left_points, u_an.values[:, 0], lw=0.6, label="analytic")
ax[1].plot(grid.left_points, rep.control.values[:, 0], lw=0.8, label="minimax")
ax[1].set_xlabel("t")
ax[1].set_ylabel("u")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "worst_case_qubit.svg"))

###############################################################################
# Convergence of the iteration: J^N along the iterations and its running best.
# The worst member jumps around, so J^N is not monotone.

J = np.array([r.J for r in rep.trace])
fig, ax = plt.subplots(figsize=(5, 3))
ax.semilogy(J - rep.best_J + 1e-6, lw=0.6, label="J^N - best")
ax.set_xlabel("iteration")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "worst_case_trace.svg"))
