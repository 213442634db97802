"""Parameter nets, Hausdorff distances and refinement sweeps."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import ParamSet, control_lp_norm
from .cost import eval_minimax
from .errors import ConfigurationError, UnsupportedDimension

__all__ = [
    "NetSpec",
    "SweepLevel",
    "SweepReport",
    "make_uniform_net",
    "nested_levels",
    "is_nested_sequence",
    "hausdorff_finite",
    "hausdorff_net_to_interval",
    "sweep_refinement",
    "nestedness_audit",
]


@dataclass(frozen=True)
class NetSpec:
    lo: tuple
    hi: tuple
    points_per_axis: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.points_per_axis))
        if not (len(lo) == len(hi) == len(n)):
            raise ConfigurationError("lo, hi and points_per_axis must have equal lengths")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ConfigurationError("need lo < hi on every axis")
        if any(k < 2 for k in n):
            raise ConfigurationError("at least two points per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "points_per_axis", n)

    @classmethod
    def interval(cls, lo, hi, n):
        return cls((lo,), (hi,), (n,))

    @property
    def dim(self):
        return len(self.lo)

    @property
    def spacing(self):
        return tuple((b - a) / (k - 1) for a, b, k in zip(self.lo, self.hi, self.points_per_axis))


def _axis(lo, hi, n):
    # lo + i*(hi-lo)/(n-1) with the last point pinned to hi
    x = lo + (hi - lo) * (np.arange(n) / (n - 1))
    x[0], x[-1] = lo, hi
    return x


def make_uniform_net(spec):
    """Tensor-product grid with both box endpoints on every axis."""
    axes = [_axis(a, b, k) for a, b, k in zip(spec.lo, spec.hi, spec.points_per_axis)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return ParamSet(pts, box=(spec.lo, spec.hi))


def nested_levels(n0, count):
    """``n0, 2 n0 - 1, 4 n0 - 3, ...`` (each uniform net contains the previous)."""
    levels = [int(n0)]
    for _ in range(count - 1):
        levels.append(2 * levels[-1] - 1)
    return levels


def is_nested_sequence(levels):
    return all((b - 1) % (a - 1) == 0 for a, b in zip(levels[:-1], levels[1:]))


def hausdorff_finite(A, B):
    """Exact Hausdorff distance between two finite point sets."""
    if len(A) == 0 or len(B) == 0:
        raise ConfigurationError("Hausdorff distance needs nonempty sets")
    D = cdist(A.points, B.points)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def hausdorff_net_to_interval(spec):
    """Distance between a uniform 1-D net (endpoints included) and its interval."""
    if spec.dim != 1:
        raise UnsupportedDimension("only one-dimensional nets are supported")
    return spec.spacing[0] / 2.0


@dataclass
class SweepLevel:
    N: int
    eps: float
    J: float
    worst_opt: float
    worst_test: float
    min_test: float
    control_l2_sq: float
    distance_to_ref: float = 0.0
    norm_gap_to_ref: float = 0.0
    report: object = field(default=None, repr=False)


@dataclass
class SweepReport:
    levels: list
    warnings: list = field(default_factory=list)

    def rows(self):
        return [
            dict(N=lv.N, max_infidelity=lv.worst_test, min_infidelity=lv.min_test,
                 control_l2_sq=lv.control_l2_sq)
            for lv in self.levels
        ]


def _infidelity_from_cost(a, costs):
    if hasattr(a, "infidelity"):
        return a.infidelity(costs)
    return np.asarray(costs)


def sweep_refinement(problem, levels, a, f, config, test_net, *, progress=None):
    """Solve the minimax problem on a sequence of nets and compare the minimisers.

    Every level runs the averaged warm start followed by the worst-case
    iteration. Minimisers are evaluated on ``test_net``; the finest level
    serves as the reference for the control-distance columns. For the qubit
    fidelity cost the worst/min columns are reported as ``1 - |overlap|``.
    """
    from .solver import solve_averaged, solve_minimax

    levels = list(levels)
    if not levels:
        raise ConfigurationError("no sweep levels")
    sizes = [int(np.prod(s.points_per_axis)) for s in levels]
    if sizes != sorted(sizes):
        raise ConfigurationError("levels must be ordered by increasing resolution")
    if any((s.lo, s.hi) != (levels[0].lo, levels[0].hi) for s in levels):
        raise ConfigurationError("all levels must share the same box")
    notes = []
    if levels[0].dim == 1 and not is_nested_sequence([s.points_per_axis[0] for s in levels]):
        msg = "sweep levels are not nested; J^N monotonicity is not guaranteed"
        warnings.warn(msg)
        notes.append(msg)

    rows = []
    for spec in levels:
        params = make_uniform_net(spec)
        warm = solve_averaged(problem, params, a, f, config)
        rep = solve_minimax(problem, params, a, f, config, warm, test_net=test_net)
        test_inf = _infidelity_from_cost(a, rep.costs_test)
        opt_inf = _infidelity_from_cost(a, rep.costs_opt)
        rows.append(SweepLevel(
            N=len(params),
            eps=hausdorff_net_to_interval(spec) if spec.dim == 1 else float("nan"),
            J=rep.best_J,
            worst_opt=float(opt_inf.max()),
            worst_test=float(test_inf.max()),
            min_test=float(test_inf.min()),
            control_l2_sq=control_lp_norm(rep.control, 2) ** 2,
            report=rep,
        ))
        if progress is not None:
            progress(rows[-1])

    ref = rows[-1].report.control
    for lv in rows:
        diff = lv.report.control.with_values(lv.report.control.values - ref.values)
        lv.distance_to_ref = control_lp_norm(diff, 2)
        lv.norm_gap_to_ref = abs(lv.control_l2_sq - rows[-1].control_l2_sq)
    return SweepReport(rows, notes)


def nestedness_audit(problem, coarse, fine, u, a, f):
    """Check ``J^coarse(u) <= J^fine(u)`` for ``coarse`` contained in ``fine``.

    Both values come from one shared evaluation over ``fine``.
    """
    idx = [fine.index_of(p) for p in coarse.points]
    if min(idx) < 0:
        raise ConfigurationError("coarse set is not a subset of the fine set")
    costs = problem.terminal_costs(fine, u, a)
    run = f.integral(u)
    return float(costs[idx].max()) + run <= float(costs.max()) + run + 1e-12


def minimax_pair(problem, coarse, fine, u, a, f):
    """Independent evaluations of ``(J^coarse(u), J^fine(u))``."""
    return eval_minimax(problem, coarse, u, a, f), eval_minimax(problem, fine, u, a, f)
