"""Two-level system with uncertain detuning.

    i psi' = (H0(alpha) + H1 u(t)) psi,    psi(0) = (0, 1)^T,
    H0(alpha) = diag(E + alpha, -E - alpha),    H1 = sigma_x.

On every control cell the propagator is the exact exponential of a
traceless Hermitian 2x2 matrix. With ``d = E + alpha`` and
``w = sqrt(d^2 + u^2)``::

    exp(-i h (d sz + u sx)) = cos(w h) I - i sin(w h) (d sz + u sx) / w

The hot loops are compiled with numba.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import Control, EnsembleProblem
from .cost import TerminalCost
from .errors import ConfigurationError, ContractViolation

__all__ = [
    "TARGET",
    "QubitEnsembleSpec",
    "AnalyticPulseParams",
    "QubitEnsemble",
    "FidelityCost",
    "pauli_step",
    "simulate_qubit",
    "simulate_qubit_adjoint",
    "qubit_coupling",
    "fidelity_cost",
    "overlaps",
    "analytic_control",
    "max_norm_deviation",
]

TARGET = np.array([1.0 + 0j, 0.0 + 0j])
INITIAL = np.array([0.0 + 0j, 1.0 + 0j])


@dataclass(frozen=True)
class QubitEnsembleSpec:
    E: float
    alpha_lo: float
    alpha_hi: float

    def __post_init__(self):
        if not self.E > 0:
            raise ConfigurationError("E must be positive")
        if not self.alpha_lo < self.alpha_hi:
            raise ConfigurationError("need alpha_lo < alpha_hi")


@dataclass(frozen=True)
class AnalyticPulseParams:
    eps1: float
    eps2: float

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ConfigurationError("eps1 and eps2 must be positive")

    @property
    def horizon(self):
        return 1.0 / (self.eps1 * self.eps2)


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True, inline="always")
def _rot(d, u, h):
    w = math.sqrt(d * d + u * u)
    c = math.cos(w * h)
    if w == 0.0:
        return c, 0.0, 0.0
    s = math.sin(w * h) / w
    return c, s * d, s * u


@numba.njit(cache=True)
def _step(p0, p1, d, u, h):
    c, sd, su = _rot(d, u, h)
    q0 = complex(c, -sd) * p0 - 1j * su * p1
    q1 = -1j * su * p0 + complex(c, sd) * p1
    return q0, q1


@numba.njit(cache=True)
def _step_back(p0, p1, d, u, h):
    c, sd, su = _rot(d, u, h)
    q0 = complex(c, sd) * p0 + 1j * su * p1
    q1 = 1j * su * p0 + complex(c, -sd) * p1
    return q0, q1


@numba.njit(cache=True, parallel=True)
def _terminal_states(ds, u, h):
    n = ds.shape[0]
    out = np.empty((n, 2), dtype=np.complex128)
    for j in numba.prange(n):
        p0 = 0.0 + 0.0j
        p1 = 1.0 + 0.0j
        d = ds[j]
        for m in range(u.shape[0]):
            p0, p1 = _step(p0, p1, d, u[m], h)
        out[j, 0] = p0
        out[j, 1] = p1
    return out


@numba.njit(cache=True)
def _path(d, u, h):
    M = u.shape[0]
    out = np.empty((M + 1, 2), dtype=np.complex128)
    out[0, 0] = 0.0
    out[0, 1] = 1.0
    for m in range(M):
        out[m + 1, 0], out[m + 1, 1] = _step(out[m, 0], out[m, 1], d, u[m], h)
    return out


@numba.njit(cache=True, parallel=True)
def _max_norm_dev(ds, u, h):
    n = ds.shape[0]
    dev = np.zeros(n)
    for j in numba.prange(n):
        p0 = 0.0 + 0.0j
        p1 = 1.0 + 0.0j
        worst = 0.0
        for m in range(u.shape[0]):
            p0, p1 = _step(p0, p1, ds[j], u[m], h)
            e = abs(math.sqrt(p0.real**2 + p0.imag**2 + p1.real**2 + p1.imag**2) - 1.0)
            if e > worst:
                worst = e
        dev[j] = worst
    return dev


@numba.njit(cache=True)
def _cell_coupling(d, um, h, p0, p1, c0, c1):
    """Cell average of Im<chi(s)|sx|psi(s)> from the cell-start values.

    Inside a cell psi and chi are moved by the same unitary U(s), so the
    integrand is Im<chi_m| U(s)^+ sx U(s) |psi_m>. The Heisenberg-picture sx
    rotates about (u, 0, d)/w at angular rate 2w; its average is closed form.
    """
    w2 = d * d + um * um
    x = 2.0 * math.sqrt(w2) * h
    if x < 1e-4:
        # series of (1 - sin x / x) / w^2 and (1 - cos x) / (x w)
        one_minus_c = (2.0 * h * h / 3.0) * (1.0 - x * x / 20.0)
        s_over_w = h * (1.0 - x * x / 12.0)
    else:
        one_minus_c = (1.0 - math.sin(x) / x) / w2
        s_over_w = (1.0 - math.cos(x)) / (x * math.sqrt(w2))
    ax = 1.0 - one_minus_c * d * d
    ay = -s_over_w * d
    az = one_minus_c * um * d
    cc0 = c0.conjugate()
    cc1 = c1.conjugate()
    sx = cc0 * p1 + cc1 * p0
    sy = -1j * cc0 * p1 + 1j * cc1 * p0
    sz = cc0 * p0 - cc1 * p1
    return (ax * sx + ay * sy + az * sz).imag


@numba.njit(cache=True)
def _adjoint_and_coupling(d, u, h, path, chi_T):
    M = u.shape[0]
    chi = np.empty((M + 1, 2), dtype=np.complex128)
    b = np.empty(M)
    chi[M, 0] = chi_T[0]
    chi[M, 1] = chi_T[1]
    for m in range(M - 1, -1, -1):
        c0, c1 = _step_back(chi[m + 1, 0], chi[m + 1, 1], d, u[m], h)
        chi[m, 0] = c0
        chi[m, 1] = c1
        b[m] = _cell_coupling(d, u[m], h, path[m, 0], path[m, 1], c0, c1)
    return chi, b


@numba.njit(cache=True, parallel=True)
def _couplings(ds, u, h):
    """Cost sensitivities ``b[j, m]`` for every detuning, chi(T) = -2<tar|psi(T)> tar."""
    n = ds.shape[0]
    M = u.shape[0]
    out = np.empty((n, M))
    for j in numba.prange(n):
        d = ds[j]
        path = _path(d, u, h)
        c0 = -2.0 * path[M, 0]
        c1 = 0.0 + 0.0j
        for m in range(M - 1, -1, -1):
            c0, c1 = _step_back(c0, c1, d, u[m], h)
            out[j, m] = _cell_coupling(d, u[m], h, path[m, 0], path[m, 1], c0, c1)
    return out


# ---------------------------------------------------------------- public API


def pauli_step(psi, E_plus_alpha, u, dt):
    """Apply ``exp(-i dt (d sz + u sx))`` to ``psi`` (shape ``(..., 2)``)."""
    psi = np.asarray(psi, dtype=complex)
    d = np.asarray(E_plus_alpha, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.hypot(d, u)
    c = np.cos(w * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(w > 0, np.sin(w * dt) / np.where(w > 0, w, 1.0), 0.0)
    p0, p1 = psi[..., 0], psi[..., 1]
    q0 = (c - 1j * s * d) * p0 - 1j * s * u * p1
    q1 = -1j * s * u * p0 + (c + 1j * s * d) * p1
    return np.stack([q0, q1], axis=-1)


def _u_vec(u):
    if u.k != 1:
        raise ConfigurationError("the qubit takes a scalar control")
    return np.ascontiguousarray(u.values[:, 0])


def simulate_qubit(spec, alpha, u):
    """Wave function on the grid nodes, shape ``(M+1, 2)``."""
    return _path(spec.E + float(alpha), _u_vec(u), u.grid.dt)


def simulate_qubit_adjoint(spec, alpha, u, psi_T=None, *, path=None):
    """Backward adjoint ``chi`` with ``chi(T) = -2 <tar|psi(T)> tar``, shape ``(M+1, 2)``.

    Only ``psi_T`` enters the terminal condition; the backward flow is the
    inverse of the forward propagator on every cell.
    """
    if path is None:
        path = simulate_qubit(spec, alpha, u)
    if psi_T is None:
        psi_T = path[-1]
    chi_T = -2.0 * np.vdot(TARGET, psi_T) * TARGET
    chi, _ = _adjoint_and_coupling(spec.E + float(alpha), _u_vec(u), u.grid.dt, path, chi_T)
    return chi


def qubit_coupling(spec, alpha, u):
    """Cell averages of ``Im <chi(t)|H1|psi(t)>``.

    Times ``dt`` this is the derivative of ``1 - |<tar|psi(T)>|^2`` with
    respect to the control value on each cell.
    """
    path = simulate_qubit(spec, alpha, u)
    chi_T = -2.0 * np.vdot(TARGET, path[-1]) * TARGET
    _, b = _adjoint_and_coupling(spec.E + float(alpha), _u_vec(u), u.grid.dt, path, chi_T)
    return b


def overlaps(spec, alphas, u):
    """``|<tar|psi_alpha(T)>|`` for every alpha."""
    ds = spec.E + np.asarray(alphas, dtype=float).ravel()
    term = _terminal_states(ds, _u_vec(u), u.grid.dt)
    return np.abs(term[:, 0])


def fidelity_cost(psi_T):
    """``(1 - |<tar|psi>|^2, 1 - |<tar|psi>|)`` for a normalised terminal state."""
    psi_T = np.asarray(psi_T, dtype=complex)
    if abs(np.linalg.norm(psi_T) - 1.0) > 1e-6:
        raise ContractViolation("terminal state is not normalised")
    ov = min(abs(psi_T[0]), 1.0)
    return max(0.0, 1.0 - ov * ov), 1.0 - ov


def max_norm_deviation(spec, alphas, u):
    """``max_{t, alpha} | |psi_alpha(t)| - 1 |`` over the grid nodes."""
    ds = spec.E + np.asarray(alphas, dtype=float).ravel()
    return float(_max_norm_dev(ds, _u_vec(u), u.grid.dt).max())


def analytic_control(params, spec, grid, *, check_horizon=True):
    """Open-loop pulse from the uniform-controllability construction, sampled at cell midpoints."""
    e12 = params.eps1 * params.eps2
    if check_horizon and abs(grid.horizon - 1.0 / e12) > 1e-9:
        raise ConfigurationError(
            f"horizon {grid.horizon} does not match 1/(eps1*eps2) = {1.0 / e12}"
        )
    return Control(grid, analytic_pulse(grid.midpoints, params, spec))


def analytic_pulse(t, params, spec):
    t = np.asarray(t, dtype=float)
    e1, e12 = params.eps1, params.eps1 * params.eps2
    a0, a1 = spec.alpha_lo, spec.alpha_hi
    env = 2.0 * e1 * (1.0 - np.cos(2.0 * np.pi * e12 * t))
    phase = 2.0 * spec.E * t + (a0 - a1) * np.sin(np.pi * e12 * t) / (np.pi * e12) + (a0 + a1) * t
    return env * np.cos(phase)


# ------------------------------------------------------------ ensemble view


class FidelityCost(TerminalCost):
    """``weight * (1 - |<tar|psi(T)>|^2)`` on the embedding ``x = (Re psi, Im psi)``.

    ``weight`` scales the terminal term against the running cost. The
    literal minimax functional has weight 1.
    """

    def __init__(self, weight=1.0):
        if not weight > 0:
            raise ConfigurationError("weight must be positive")
        self.weight = float(weight)

    def value(self, x, theta):
        x = np.asarray(x, dtype=float)
        return self.weight * max(0.0, 1.0 - (x[0] ** 2 + x[2] ** 2))

    def gradient(self, x, theta):
        x = np.asarray(x, dtype=float)
        return -2.0 * self.weight * np.array([x[0], 0.0, x[2], 0.0])

    def cost_sq(self, costs):
        """Undo the weight: ``1 - |overlap|^2``."""
        return np.asarray(costs, dtype=float) / self.weight

    def infidelity(self, costs):
        """``1 - |overlap|`` recovered from weighted costs."""
        return 1.0 - np.sqrt(np.clip(1.0 - self.cost_sq(costs), 0.0, 1.0))


_SZ = np.diag([1.0, -1.0])
_SX = np.array([[0.0, 1.0], [1.0, 0.0]])


class QubitEnsemble(EnsembleProblem):
    """The detuned qubit as a real 4-dimensional control-affine ensemble.

    The state is ``x = (Re psi_1, Re psi_2, Im psi_1, Im psi_2)`` and the
    parameter is the detuning ``alpha``. The generic RK4 interface is kept
    for cross-checks; with a :class:`FidelityCost` the ensemble-level hooks
    switch to exact exponentials.
    """

    state_dim = 4
    control_dim = 1

    def __init__(self, spec):
        self.spec = spec

    def _h0(self, theta):
        return (self.spec.E + float(np.asarray(theta).ravel()[0])) * _SZ

    def drift(self, x, theta):
        h = self._h0(theta)
        p, q = x[:2], x[2:]
        return np.concatenate([h @ q, -h @ p])

    def fields(self, x, theta):
        p, q = x[:2], x[2:]
        return np.concatenate([_SX @ q, -_SX @ p])[:, None]

    def drift_jacobian(self, x, theta):
        h = self._h0(theta)
        z = np.zeros((2, 2))
        return np.block([[z, h], [-h, z]])

    def fields_jacobian(self, x, theta):
        z = np.zeros((2, 2))
        return np.block([[z, _SX], [-_SX, z]])[None]

    def initial_state(self, theta):
        return np.array([0.0, 1.0, 0.0, 0.0])

    def param_set(self, n):
        """Uniform net of ``n`` detunings including both endpoints."""
        from .gamma import NetSpec, make_uniform_net

        return make_uniform_net(NetSpec([self.spec.alpha_lo], [self.spec.alpha_hi], [n]))

    def terminal_costs(self, params, u, cost):
        if not isinstance(cost, FidelityCost):
            return super().terminal_costs(params, u, cost)
        ov = overlaps(self.spec, params.points[:, 0], u)
        return cost.weight * np.maximum(0.0, 1.0 - ov * ov)

    def couplings(self, params, u, cost, indices):
        if not isinstance(cost, FidelityCost):
            return super().couplings(params, u, cost, indices)
        ds = self.spec.E + params.points[np.asarray(indices, dtype=np.intp), 0]
        sens = _couplings(np.ascontiguousarray(ds), _u_vec(u), u.grid.dt)
        # Hamiltonian coupling is minus the cost sensitivity.
        return (-cost.weight * sens)[:, :, None]
