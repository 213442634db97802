"""Adjoint propagation, control gradients and first-order optimality diagnostics.

Covectors are stored as flat arrays and act on states by the dot product.
The backward pass is the exact reverse-mode derivative of the forward RK4
step: it re-evaluates the forward stage states inside each cell and returns
an order-4 approximation of the adjoint ODE

    lambda' = -lambda (dF0/dx + sum_i u_i dF_i/dx),   lambda(T) = -grad_x a,

whose control coupling reproduces the gradient of the discretised cost to
rounding error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import simulate_trajectory
from .cost import QuadraticRunningCost
from .errors import ConfigurationError, IntegrationDiverged

__all__ = [
    "AdjointBundle",
    "MultiplierEstimate",
    "PMPReport",
    "simulate_adjoint",
    "simulate_adjoint_bundle",
    "coupling_profile",
    "gateaux_gradient",
    "aug_hamiltonian_argmax",
    "project_simplex",
    "estimate_multiplier",
    "pmp_check",
]


@dataclass(frozen=True)
class AdjointBundle:
    grid: object
    params: object
    covectors: np.ndarray  # (M+1, n, d)


@dataclass(frozen=True)
class MultiplierEstimate:
    weights: np.ndarray
    active: list
    residual: float


@dataclass(frozen=True)
class PMPReport:
    multiplier: MultiplierEstimate
    residual_profile: np.ndarray
    support_slack: float
    activation_tol: float
    costs: np.ndarray


def _rk4_step_adjoint(problem, x, theta, um, h, lam_next):
    """Pull ``lam_next`` back through one RK4 step from ``x``.

    Returns ``(lam, ubar)`` with ``lam = lam_next . dPhi/dx`` and
    ``ubar = lam_next . dPhi/du``.
    """
    f = problem.velocity
    y1 = x
    k1 = f(y1, theta, um)
    y2 = x + 0.5 * h * k1
    k2 = f(y2, theta, um)
    y3 = x + 0.5 * h * k2
    k3 = f(y3, theta, um)
    y4 = x + h * k3

    kb4 = (h / 6.0) * lam_next
    kb3 = (h / 3.0) * lam_next
    kb2 = (h / 3.0) * lam_next
    kb1 = (h / 6.0) * lam_next

    yb4 = kb4 @ problem.jacobian(y4, theta, um)
    ubar = kb4 @ problem.fields(y4, theta)
    kb3 = kb3 + h * yb4
    yb3 = kb3 @ problem.jacobian(y3, theta, um)
    ubar = ubar + kb3 @ problem.fields(y3, theta)
    kb2 = kb2 + 0.5 * h * yb3
    yb2 = kb2 @ problem.jacobian(y2, theta, um)
    ubar = ubar + kb2 @ problem.fields(y2, theta)
    kb1 = kb1 + 0.5 * h * yb2
    yb1 = kb1 @ problem.jacobian(y1, theta, um)
    ubar = ubar + kb1 @ problem.fields(y1, theta)
    return lam_next + yb1 + yb2 + yb3 + yb4, ubar


def simulate_adjoint(problem, theta, u, path, cost, *, theta_index=None, return_coupling=False):
    """Backward covector path ``lambda(t_m)`` for one member, shape ``(M+1, d)``.

    ``path`` is the forward state path of the same member under ``u``. With
    ``return_coupling`` the per-cell coupling ``b_m`` (shape ``(M, k)``) is
    returned as well: ``b_m * dt`` is minus the derivative of the terminal
    cost with respect to ``u_m``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grid = u.grid
    nsub = int(problem.substeps)
    h = grid.dt / nsub
    M = grid.n_cells
    lam_path = np.empty((M + 1, problem.state_dim))
    coupling = np.zeros((M, problem.control_dim))
    lam = -np.asarray(cost.gradient(path[M], theta), dtype=float)
    lam_path[M] = lam
    for m in range(M - 1, -1, -1):
        um = u.values[m]
        if nsub == 1:
            lam, ubar = _rk4_step_adjoint(problem, path[m], theta, um, h, lam)
            coupling[m] = ubar
        else:
            from .core import rk4_step

            xs = [path[m]]
            for _ in range(nsub - 1):
                xs.append(rk4_step(problem, xs[-1], theta, um, h))
            for xs_i in reversed(xs):
                lam, ubar = _rk4_step_adjoint(problem, xs_i, theta, um, h, lam)
                coupling[m] += ubar
        if not np.all(np.isfinite(lam)):
            raise IntegrationDiverged(m, theta_index)
        lam_path[m] = lam
    if return_coupling:
        return lam_path, coupling / grid.dt
    return lam_path


def simulate_adjoint_bundle(problem, bundle, u, cost):
    covs = np.empty_like(bundle.states)
    for j, theta in enumerate(bundle.params):
        covs[:, j, :] = simulate_adjoint(problem, theta, u, bundle.states[:, j, :], cost, theta_index=j)
    return AdjointBundle(bundle.grid, bundle.params, covs)


def coupling_profile(problem, theta, u, cost):
    """``b(t_m) ~ Lambda(t_m, theta) . F(X(t_m, theta), theta)`` on every cell."""
    path = simulate_trajectory(problem, theta, u)
    _, b = simulate_adjoint(problem, theta, u, path, cost, return_coupling=True)
    return b


def _running_gradient(f, u):
    ts = u.grid.left_points
    if isinstance(f, QuadraticRunningCost):
        return f.gradient(ts, u.values)
    return np.array([f.gradient(t, v) for t, v in zip(ts, u.values)])


def gateaux_gradient(problem, params, weights, u, a, f):
    """First-variation density of ``sum_j w_j a(X(T, theta_j)) + int f``.

    Row ``m`` is ``df/dv(t_m, u_m) - sum_j w_j b_j(t_m)``; multiplying by
    ``dt`` gives the derivative with respect to the value on cell ``m``.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(params),) or np.any(weights < 0):
        raise ConfigurationError("weights must be a nonnegative vector, one per parameter")
    g = np.array(_running_gradient(f, u), dtype=float)
    idx = np.flatnonzero(weights)
    if idx.size:
        b = problem.couplings(params, u, a, idx)
        g -= np.tensordot(weights[idx], b, axes=1)
    return g


def aug_hamiltonian_argmax(b, u_prev, gamma, tau):
    """Maximiser of ``b.v - gamma |v|^2 - tau/2 |v - u_prev|^2``.

    Works elementwise on arrays of cells.
    """
    if not (gamma > 0 and tau >= 0):
        raise ConfigurationError("need gamma > 0 and tau >= 0")
    return (np.asarray(b, dtype=float) + tau * np.asarray(u_prev, dtype=float)) / (2.0 * gamma + tau)


def project_simplex(v):
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    s = np.sort(v)[::-1]
    css = np.cumsum(s) - 1.0
    rho = np.nonzero(s - css / np.arange(1, n + 1) > 0)[0][-1]
    shift = css[rho] / (rho + 1.0)
    w = np.maximum(v - shift, 0.0)
    return w / w.sum()


def _lipschitz(gram, iters=100):
    x = np.ones(gram.shape[0]) / np.sqrt(gram.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = gram @ x
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
    return lam


def _simplex_lsq(B, target, dt, n_iter=2000):
    """min over the simplex of ``|sum_j mu_j B_j - target|^2_L2``.

    ``B`` has shape ``(n, M, k)``. Accelerated projected gradient with step
    1/L, followed by an exact least-squares solve on the support it finds;
    the polished point is kept only if it stays feasible and fits better.
    """
    n = B.shape[0]
    flat = B.reshape(n, -1)
    tgt = target.ravel()
    gram = (flat @ flat.T) * dt
    rhs = (flat @ tgt) * dt
    mu = np.full(n, 1.0 / n)
    if n == 1:
        return mu
    L = 2.0 * _lipschitz(gram)
    if L == 0.0:
        return mu
    y, t = mu, 1.0
    for _ in range(n_iter):
        grad = 2.0 * (gram @ y - rhs)
        nxt = project_simplex(y - grad / L)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = nxt + ((t - 1.0) / t_next) * (nxt - mu)
        mu, t = nxt, t_next
    return _polish(flat, tgt, mu)


def _polish(flat, tgt, mu):
    S = np.flatnonzero(mu > 0)
    if S.size < 2:
        return mu
    # mu_S = e_0 + N z with the columns of N spanning {sum = 0}
    N = np.vstack([-np.ones(S.size - 1), np.eye(S.size - 1)])
    A = flat[S].T
    z = np.linalg.lstsq(A @ N, tgt - A[:, 0], rcond=None)[0]
    cand = np.zeros_like(mu)
    cand[S] = N @ z
    cand[S[0]] += 1.0
    if cand.min() < 0:
        return mu
    cand /= cand.sum()
    if np.linalg.norm(flat.T @ cand - tgt) <= np.linalg.norm(flat.T @ mu - tgt):
        return cand
    return mu


def _l2(x, dt):
    return float(np.sqrt(np.sum(x * x) * dt))


def estimate_multiplier(problem, params, u, a, f, activation_tol=None, *, costs=None, n_iter=2000):
    """Finitely supported multiplier for the minimax first-order conditions.

    Candidate support is ``{j : cost_j >= max - activation_tol}``; weights
    minimise the L2 stationarity residual over the simplex on that support.
    ``activation_tol`` defaults to ``1e-3 * max cost``.
    """
    if costs is None:
        costs = problem.terminal_costs(params, u, a)
    costs = np.asarray(costs, dtype=float)
    cmax = float(costs.max())
    if activation_tol is None:
        activation_tol = 1e-3 * cmax
    if activation_tol < 0:
        raise ConfigurationError("activation_tol must be nonnegative")
    active = np.flatnonzero(costs >= cmax - activation_tol)
    B = problem.couplings(params, u, a, active)
    target = np.asarray(_running_gradient(f, u), dtype=float)
    mu = _simplex_lsq(B, target, u.grid.dt, n_iter=n_iter)
    weights = np.zeros(len(params))
    weights[active] = mu
    weights /= weights.sum()
    resid = np.tensordot(mu, B, axes=1) - target
    rel = _l2(resid, u.grid.dt) / max(1.0, _l2(target, u.grid.dt))
    return MultiplierEstimate(weights, [int(j) for j in active], rel)


def pmp_check(problem, params, u, a, f, activation_tol=None):
    """Estimate the multiplier and report the pointwise maximum-condition residual.

    For the quadratic running cost the residual at cell m is
    ``|u_m - sum_j mu_j b_j(t_m) / (2 gamma)|``; otherwise it is the norm of
    the weighted gradient density.
    """
    costs = problem.terminal_costs(params, u, a)
    if activation_tol is None:
        activation_tol = 1e-3 * float(costs.max())
    est = estimate_multiplier(problem, params, u, a, f, activation_tol, costs=costs)
    idx = np.flatnonzero(est.weights)
    B = problem.couplings(params, u, a, idx)
    hb = np.tensordot(est.weights[idx], B, axes=1)
    if isinstance(f, QuadraticRunningCost):
        profile = np.linalg.norm(u.values - hb / (2.0 * f.gamma), axis=1)
    else:
        profile = np.linalg.norm(_running_gradient(f, u) - hb, axis=1)
    act = costs[est.active]
    return PMPReport(est, profile, float(act.max() - act.min()), float(activation_tol), costs)
