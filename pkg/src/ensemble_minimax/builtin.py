"""Named problems available to the command-line tool."""
import numpy as np

from .core import EnsembleProblem
from .cost import SquaredNormCost
from .qubit import FidelityCost, QubitEnsemble, QubitEnsembleSpec


class DetunedOscillator(EnsembleProblem):
    """Harmonic oscillator with uncertain stiffness ``1 + alpha``, forced by ``u``.

    ``q' = p``, ``p' = -(1 + alpha) q + u``, starting from ``(1, 0)``; the
    terminal cost is ``|x|^2`` (bring every member to rest at the origin).
    """

    state_dim = 2
    control_dim = 1

    def drift(self, x, theta):
        return np.array([x[1], -(1.0 + theta[0]) * x[0]])

    def fields(self, x, theta):
        return np.array([[0.0], [1.0]])

    def drift_jacobian(self, x, theta):
        return np.array([[0.0, 1.0], [-(1.0 + theta[0]), 0.0]])

    def fields_jacobian(self, x, theta):
        return np.zeros((1, 2, 2))

    def initial_state(self, theta):
        return np.array([1.0, 0.0])


def build(cfg):
    """``(problem, terminal_cost)`` for a validated run configuration."""
    name = cfg["problem"]
    if name == "qubit":
        spec = QubitEnsembleSpec(cfg["E"], cfg["alpha_lo"], cfg["alpha_hi"])
        return QubitEnsemble(spec), FidelityCost(cfg["terminal_weight"])
    if name == "oscillator":
        return DetunedOscillator(), SquaredNormCost(np.zeros(2))
    raise KeyError(name)


NAMES = ("qubit", "oscillator")
