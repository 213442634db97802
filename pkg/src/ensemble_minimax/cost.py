"""Terminal and running costs; minimax and averaged functionals."""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation, NonsmoothCostError

__all__ = [
    "TerminalCost",
    "ZeroCost",
    "SquaredNormCost",
    "LinearCost",
    "QuadraticRunningCost",
    "ConvexRunningCost",
    "WorstCase",
    "terminal_costs",
    "worst_case",
    "eval_minimax",
    "eval_averaged",
]


class TerminalCost(abc.ABC):
    """Nonnegative end-point cost ``a(x, theta)`` with its state gradient."""

    @abc.abstractmethod
    def value(self, x, theta): ...

    @abc.abstractmethod
    def gradient(self, x, theta): ...


class ZeroCost(TerminalCost):
    def value(self, x, theta):
        return 0.0

    def gradient(self, x, theta):
        return np.zeros_like(np.asarray(x, dtype=float))


class SquaredNormCost(TerminalCost):
    """``a(x) = |x - target|^2``."""

    def __init__(self, target=0.0):
        self.target = np.asarray(target, dtype=float)

    def value(self, x, theta):
        r = np.asarray(x) - self.target
        return float(r @ r)

    def gradient(self, x, theta):
        return 2.0 * (np.asarray(x) - self.target)


class LinearCost(TerminalCost):
    """``a(x) = c . x``; only nonnegative on part of the state space, meant for tests."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value(self, x, theta):
        return float(self.c @ np.asarray(x))

    def gradient(self, x, theta):
        return self.c.copy()


@dataclass(frozen=True)
class QuadraticRunningCost:
    """Tikhonov density ``f(t, v) = gamma |v|^2`` (growth exponent p = 2)."""

    gamma: float
    p: int = 2

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if self.p != 2:
            raise ConfigurationError("the quadratic running cost has p = 2")

    def density(self, t, v):
        v = np.asarray(v, dtype=float)
        return self.gamma * np.sum(v * v, axis=-1)

    def gradient(self, t, v):
        return 2.0 * self.gamma * np.asarray(v, dtype=float)

    def integral(self, u):
        return float(self.gamma * np.sum(u.values**2) * u.grid.dt)


class ConvexRunningCost:
    """User-supplied convex density with an optional gradient.

    ``density(t, v)`` and ``gradient(t, v)`` receive a time and one control
    value. When ``gradient`` is None, or returns None, the cost is treated as
    nonsmooth at that point.
    """

    def __init__(self, density, gradient=None, p=2):
        self._density = density
        self._gradient = gradient
        self.p = p

    def density(self, t, v):
        return float(self._density(t, np.asarray(v, dtype=float)))

    def gradient(self, t, v):
        g = None if self._gradient is None else self._gradient(t, np.asarray(v, dtype=float))
        if g is None:
            raise NonsmoothCostError(f"running cost has no gradient at t={t}")
        return np.asarray(g, dtype=float)

    def integral(self, u):
        ts = u.grid.left_points
        return float(sum(self.density(t, v) for t, v in zip(ts, u.values)) * u.grid.dt)

    def check_convexity(self, samples, t=0.0, tol=1e-12):
        """Midpoint inequality on consecutive pairs of sampled control values."""
        samples = np.asarray(samples, dtype=float)
        for v, w in zip(samples[:-1], samples[1:]):
            mid = self.density(t, 0.5 * (v + w))
            if mid > 0.5 * (self.density(t, v) + self.density(t, w)) + tol:
                return False
        return True


@dataclass(frozen=True)
class WorstCase:
    index: int
    theta: np.ndarray
    value: float


def terminal_costs(bundle, cost):
    """Per-member terminal costs ``a(X(T, theta_j), theta_j)``."""
    out = np.array(
        [cost.value(x, th) for x, th in zip(bundle.terminal, bundle.params)], dtype=float
    )
    if np.any(out < 0):
        j = int(np.flatnonzero(out < 0)[0])
        raise ContractViolation(f"terminal cost is negative ({out[j]!r}) at parameter {j}")
    return out


def worst_case(costs, params):
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 1 or costs.size == 0 or costs.size != len(params):
        raise ConfigurationError("costs must be a nonempty vector matching params")
    j = int(np.argmax(costs))  # argmax returns the first maximiser
    return WorstCase(j, params[j], float(costs[j]))


def eval_minimax(problem, params, u, a, f):
    """``max_j a(X_u(T, theta_j), theta_j) + int f(t, u(t)) dt``."""
    costs = problem.terminal_costs(params, u, a)
    return worst_case(costs, params).value + f.integral(u)


def eval_averaged(problem, params, u, a, f):
    costs = problem.terminal_costs(params, u, a)
    return float(np.mean(costs)) + f.integral(u)
