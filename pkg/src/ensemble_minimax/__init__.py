"""Worst-case optimal control of parameter ensembles of control-affine systems."""

from .core import (
    Control,
    EnsembleProblem,
    ParamSet,
    TimeGrid,
    TrajectoryBundle,
    bound_check,
    control_lp_norm,
    simulate_bundle,
    simulate_trajectory,
)
from .cost import (
    ConvexRunningCost,
    QuadraticRunningCost,
    TerminalCost,
    WorstCase,
    eval_averaged,
    eval_minimax,
    terminal_costs,
    worst_case,
)
from .adjoint import (
    aug_hamiltonian_argmax,
    estimate_multiplier,
    gateaux_gradient,
    pmp_check,
    simulate_adjoint,
)
from .qubit import (
    AnalyticPulseParams,
    FidelityCost,
    QubitEnsemble,
    QubitEnsembleSpec,
    analytic_control,
    fidelity_cost,
    pauli_step,
    simulate_qubit,
    simulate_qubit_adjoint,
)
from .solver import SolverConfig, SolveReport, solve_averaged, solve_minimax
from .gamma import (
    NetSpec,
    hausdorff_finite,
    hausdorff_net_to_interval,
    make_uniform_net,
    nestedness_audit,
    sweep_refinement,
)

__version__ = "0.1.0"
