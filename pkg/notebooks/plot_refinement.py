"""
Refining the parameter net
==========================

The worst case over a finite net approximates the worst case over the whole
interval. For nested uniform nets (26, 51, 101 points) the discrete minimax
values can only grow, and the minimisers should settle down. This script
runs the sweep and draws the minimiser norms and distances.

Run from the repository root: ``python notebooks/plot_refinement.py``.
"""
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ensemble_minimax import FidelityCost, QubitEnsemble, QubitEnsembleSpec, SolverConfig, TimeGrid
from ensemble_minimax.gamma import NetSpec, hausdorff_net_to_interval, make_uniform_net, sweep_refinement
from ensemble_minimax.qubit import AnalyticPulseParams, analytic_control

OUT = os.environ.get("OUT", ".")

spec = QubitEnsembleSpec(E=1.0, alpha_lo=-0.5, alpha_hi=0.5)
qubit = QubitEnsemble(spec)
grid = TimeGrid(20.0, 2**-5)
levels = [NetSpec.interval(-0.5, 0.5, n) for n in (26, 51, 101)]

###############################################################################
# A net with N equispaced points including the endpoints is within half a
# spacing of every point of the interval.

for s in levels:
    print(f"N={s.points_per_axis[0]:4d}  eps_N={hausdorff_net_to_interval(s):.4f}")

###############################################################################
# One warm start plus worst-case iteration per level

cfg = SolverConfig(gamma=2**-4, tau0=8, max_iter=1000, warmstart_iter=400, warmstart_tau=4,
                   initial_control=analytic_control(AnalyticPulseParams(0.5, 0.1), spec, grid))
cost = FidelityCost(0.5)
test_net = make_uniform_net(NetSpec.interval(-0.5, 0.5, 1001))
rep = sweep_refinement(qubit, levels, cost, cfg.running_cost(), cfg, test_net)

for lv in rep.levels:
    print(f"N={lv.N:4d}  J={lv.J:.5f}  max={lv.worst_test:.4f}  min={lv.min_test:.4f}  "
          f"|u|^2={lv.control_l2_sq:.4f}  |u-u_ref|={lv.distance_to_ref:.4f}")

###############################################################################
# Per-alpha infidelity of each level's minimiser on the test net

fig, ax = plt.subplots(figsize=(6, 3.5))
for lv in rep.levels:
    ax.plot(test_net.scalars, cost.infidelity(lv.report.costs_test), lw=0.8, label=f"N={lv.N}")
ax.set_xlabel("alpha")
ax.set_ylabel("1 - |<tar|psi(T)>|")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "refinement.svg"))
