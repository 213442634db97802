"""Ensemble dynamics: time grids, parameter sets, controls and RK4 propagation.

An ensemble is a family of control-affine systems

    x'(t) = F0(x, theta) + sum_i F_i(x, theta) u_i(t),    x(0) = x0(theta)

driven by one shared control ``u``. Controls are piecewise constant on a
uniform grid and every member is integrated with classical RK4 aligned to
the control cells.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationDiverged

__all__ = [
    "TimeGrid",
    "ParamSet",
    "Control",
    "EnsembleProblem",
    "TrajectoryBundle",
    "rk4_step",
    "simulate_trajectory",
    "simulate_bundle",
    "control_lp_norm",
    "bound_check",
]


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``n_cells`` cells of width ``dt`` covering ``[0, horizon]``."""

    horizon: float
    dt: float
    n_cells: int = field(init=False)

    def __post_init__(self):
        if not (self.horizon > 0 and self.dt > 0):
            raise ConfigurationError("horizon and dt must be positive")
        n = int(round(self.horizon / self.dt))
        if n < 1 or not math.isclose(n * self.dt, self.horizon, rel_tol=1e-12, abs_tol=0.0):
            raise ConfigurationError(
                f"dt={self.dt!r} does not divide horizon={self.horizon!r}"
            )
        object.__setattr__(self, "n_cells", n)

    @classmethod
    def from_cells(cls, horizon, n_cells):
        return cls(horizon, horizon / n_cells)

    @property
    def nodes(self):
        """Cell boundaries ``t_0 = 0, ..., t_M = horizon`` (length M+1)."""
        return np.arange(self.n_cells + 1) * self.dt

    @property
    def left_points(self):
        return np.arange(self.n_cells) * self.dt

    @property
    def midpoints(self):
        return (np.arange(self.n_cells) + 0.5) * self.dt


class ParamSet:
    """Ordered, duplicate-free finite set of parameter points in R^l.

    Parameters
    ----------
    points : array_like, shape (n,) or (n, l)
        Parameter values. A 1-D input is read as n scalar parameters.
    box : tuple of array_like, optional
        ``(lo, hi)`` ambient box; every point must lie inside it.
    """

    def __init__(self, points, box=None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigurationError("ParamSet needs a nonempty (n, l) array of points")
        if not np.all(np.isfinite(pts)):
            raise ConfigurationError("parameter points must be finite")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ConfigurationError("duplicate parameter points")
        if box is not None:
            lo = np.broadcast_to(np.asarray(box[0], dtype=float), (pts.shape[1],))
            hi = np.broadcast_to(np.asarray(box[1], dtype=float), (pts.shape[1],))
            if np.any(pts < lo) or np.any(pts > hi):
                raise ConfigurationError("parameter point outside the declared box")
            box = (_frozen(lo), _frozen(hi))
        self._points = _frozen(pts)
        self.box = box

    @property
    def points(self):
        return self._points

    @property
    def dim(self):
        return self._points.shape[1]

    @property
    def scalars(self):
        """The points as a flat vector (1-D sets only)."""
        if self.dim != 1:
            raise ValueError("scalars is only defined for one-dimensional parameter sets")
        return self._points[:, 0]

    def __len__(self):
        return self._points.shape[0]

    def __getitem__(self, j):
        return self._points[j]

    def __iter__(self):
        return iter(self._points)

    def __repr__(self):
        return f"ParamSet(n={len(self)}, dim={self.dim})"

    def index_of(self, point, tol=0.0):
        """Position of ``point`` in the set, or -1."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        hits = np.flatnonzero(np.all(np.abs(self._points - p) <= tol, axis=1))
        return int(hits[0]) if hits.size else -1

    def issubset(self, other, tol=0.0):
        return all(other.index_of(p, tol) >= 0 for p in self._points)


class Control:
    """Piecewise-constant control: row ``m`` of ``values`` acts on cell ``m``."""

    def __init__(self, grid, values):
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != grid.n_cells:
            raise ConfigurationError(
                f"control needs {grid.n_cells} rows, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("control values must be finite")
        self.grid = grid
        self._values = _frozen(vals)

    @classmethod
    def zeros(cls, grid, k=1):
        return cls(grid, np.zeros((grid.n_cells, k)))

    @classmethod
    def constant(cls, grid, value):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.n_cells, 1)))

    @property
    def values(self):
        return self._values

    @property
    def k(self):
        return self._values.shape[1]

    def with_values(self, values):
        return Control(self.grid, values)

    def __repr__(self):
        return f"Control(cells={self.grid.n_cells}, k={self.k}, T={self.grid.horizon})"


class EnsembleProblem(abc.ABC):
    """Control-affine ensemble ``x' = F0(x, th) + F(x, th) u``.

    Subclasses set ``state_dim`` and ``control_dim`` and implement the field
    evaluators. ``fields`` returns the ``(d, k)`` matrix whose columns are the
    control vector fields; ``fields_jacobian`` returns ``(k, d, d)``.

    ``substeps`` is the number of RK4 steps taken inside each control cell.
    """

    state_dim: int
    control_dim: int
    substeps: int = 1

    @abc.abstractmethod
    def drift(self, x, theta): ...

    @abc.abstractmethod
    def fields(self, x, theta): ...

    @abc.abstractmethod
    def drift_jacobian(self, x, theta): ...

    @abc.abstractmethod
    def fields_jacobian(self, x, theta): ...

    @abc.abstractmethod
    def initial_state(self, theta): ...

    def velocity(self, x, theta, u):
        return self.drift(x, theta) + self.fields(x, theta) @ u

    def jacobian(self, x, theta, u):
        """State Jacobian of the closed-loop field for a frozen control value."""
        return self.drift_jacobian(x, theta) + np.tensordot(u, self.fields_jacobian(x, theta), axes=1)

    # Ensemble-level hooks. Subclasses with a faster native propagator may
    # override these; the defaults use RK4 and its discrete adjoint.
    def terminal_costs(self, params, u, cost):
        from .cost import terminal_costs

        return terminal_costs(simulate_bundle(self, params, u), cost)

    def couplings(self, params, u, cost, indices):
        """Hamiltonian coupling profiles ``b_j(t_m)`` for the given indices.

        Returns an array of shape ``(len(indices), M, k)``.
        """
        from .adjoint import coupling_profile

        return np.stack([coupling_profile(self, params[j], u, cost) for j in indices])


@dataclass(frozen=True)
class TrajectoryBundle:
    """States ``X_u(t_m, theta_j)`` stored as an ``(M+1, n, d)`` array."""

    grid: TimeGrid
    params: ParamSet
    states: np.ndarray

    @property
    def terminal(self):
        return self.states[-1]


def rk4_step(problem, x, theta, u, h):
    f = problem.velocity
    k1 = f(x, theta, u)
    k2 = f(x + 0.5 * h * k1, theta, u)
    k3 = f(x + 0.5 * h * k2, theta, u)
    k4 = f(x + h * k3, theta, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_control(problem, u):
    if u.k != problem.control_dim:
        raise ConfigurationError(
            f"control has {u.k} channels, problem expects {problem.control_dim}"
        )


def simulate_trajectory(problem, theta, u, *, theta_index=None):
    """Integrate one ensemble member; returns the ``(M+1, d)`` state path."""
    _check_control(problem, u)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grid = u.grid
    nsub = int(problem.substeps)
    h = grid.dt / nsub
    path = np.empty((grid.n_cells + 1, problem.state_dim))
    x = np.asarray(problem.initial_state(theta), dtype=float)
    path[0] = x
    for m in range(grid.n_cells):
        um = u.values[m]
        for _ in range(nsub):
            x = rk4_step(problem, x, theta, um, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationDiverged(m, theta_index)
        path[m + 1] = x
    return path


def simulate_bundle(problem, params, u):
    """Trajectories of every member of ``params`` under the shared control ``u``."""
    if len(params) == 0:
        raise ConfigurationError("empty parameter set")
    states = np.empty((u.grid.n_cells + 1, len(params), problem.state_dim))
    for j, theta in enumerate(params):
        states[:, j, :] = simulate_trajectory(problem, theta, u, theta_index=j)
    states.flags.writeable = False
    return TrajectoryBundle(u.grid, params, states)


def control_lp_norm(u, p=2.0):
    """Exact L^p norm of a piecewise-constant control (Euclidean norm pointwise)."""
    if not (math.isfinite(p) and p >= 1):
        raise ConfigurationError("p must be finite and >= 1")
    scale = np.abs(u.values).max()
    if scale == 0.0:
        return 0.0
    # work relative to the largest entry so tiny or huge values do not under/overflow
    pointwise = np.linalg.norm(u.values / scale, axis=1)
    return float(scale * np.sum(pointwise**p * u.grid.dt) ** (1.0 / p))


def bound_check(bundle, radius):
    """Whether every sampled state satisfies ``|X(t, theta)|_2 <= radius``.

    Returns ``(ok, max_norm)``.
    """
    if not radius > 0:
        raise ConfigurationError("radius must be positive")
    max_norm = float(np.max(np.linalg.norm(bundle.states, axis=-1)))
    return max_norm <= radius, max_norm
