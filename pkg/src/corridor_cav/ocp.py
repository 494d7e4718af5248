"""Closed-form energy-optimal control of a double integrator.

Each vehicle minimizes the integral of u^2/2 from its entry time to its last
merge time. Without active bounds the optimal control is linear in time on
every arc, and the integration constants follow from a small linear system:

* one merging zone: 4 unknowns (a, b, c, d);
* two merging zones: the first zone's entry is an interior point condition
  p(t_m1) = L1, which splits the trajectory into two arcs and adds the
  co-state jump pi0 (9 unknowns), or pi0 and pi1 when an interior speed v1 is
  also imposed (10 unknowns).

A free terminal speed gives the transversality condition lambda_v(t_m) = 0,
i.e. u(t_m) = 0 at the final merge point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, OracleError, SingularSystemError
from .geometry import ConstraintConfig
from .linalg import condition_estimate, gauss_solve
from .trajectory import Arc, Trajectory, cruise_arc

__all__ = [
    "Arc",
    "BoundReport",
    "Costate",
    "SingleArcSolution",
    "StateSample",
    "TwoArcSolution",
    "bound_check",
    "energy",
    "evaluate",
    "hamiltonian",
    "hamiltonian_jump_residual",
    "oracle_direct",
    "solve_single_arc",
    "solve_two_arc",
    "system_residuals",
]


class StateSample(NamedTuple):
    p: float
    v: float
    u: float
    lambda_p: float
    lambda_v: float


class Costate(NamedTuple):
    lambda_p: float
    lambda_v: float


@dataclass(frozen=True)
class SingleArcSolution:
    arc: Arc
    t0: float
    v0: float
    t_m: float
    L: float

    @property
    def arcs(self) -> tuple[Arc, ...]:
        return (self.arc,)

    @property
    def t_final(self) -> float:
        return self.t_m

    def trajectory(self) -> Trajectory:
        return Trajectory(self.arcs)


@dataclass(frozen=True)
class TwoArcSolution:
    """Two arcs joined at the first merge time.

    ``arc2`` carries the second-arc constants g, h, q, w. ``pi1`` is ``None``
    unless an interior speed was imposed.
    """

    arc1: Arc
    arc2: Arc
    pi0: float
    pi1: float | None
    t0: float
    v0: float
    t_m1: float
    L1: float
    t_m2: float
    L2: float
    v1: float | None = None
    condition: float = field(default=float("nan"), compare=False)

    @property
    def arcs(self) -> tuple[Arc, ...]:
        return (self.arc1, self.arc2)

    @property
    def g(self) -> float:
        return self.arc2.a

    @property
    def h(self) -> float:
        return self.arc2.b

    @property
    def q(self) -> float:
        return self.arc2.c

    @property
    def w(self) -> float:
        return self.arc2.d

    @property
    def t_final(self) -> float:
        return self.t_m2

    def trajectory(self) -> Trajectory:
        return Trajectory(self.arcs)


def _single_system(T: float, v0: float, L: float):
    # rebased: entry at s = 0, merge at s = T
    a = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [T**3 / 6.0, T**2 / 2.0, T, 1.0],
        [T, 1.0, 0.0, 0.0],
    ])
    rhs = np.array([v0, 0.0, L, 0.0])
    return a, rhs


def solve_single_arc(t0: float, v0: float, t_m: float, L: float) -> SingleArcSolution:
    """Energy-optimal single arc from (p=0, v0) at t0 to p=L at t_m, u(t_m)=0."""
    T = t_m - t0
    if not T > 0:
        raise SingularSystemError(f"merge time {t_m} not after entry time {t0}")
    if not v0 > 0 or not L > 0:
        raise DomainError("need v0 > 0 and L > 0")
    a, rhs = _single_system(T, v0, L)
    x = gauss_solve(a, rhs)
    arc = Arc(*map(float, x), t_start=t0, t_end=t_m, origin=t0)
    return SingleArcSolution(arc, t0, v0, t_m, L)


def _two_arc_system(t1: float, t2: float, v0: float, L1: float, L2: float,
                    v1: float | None):
    """Rows of the interior-point system in rebased time (entry at 0).

    Unknown order: a, b, c, d, g, h, q, w, pi0 [, pi1].
    """
    t0 = 0.0
    if v1 is None:
        a = np.array([
            [t0**2 / 2, t0, 1, 0, 0, 0, 0, 0, 0],
            [t0**3 / 6, t0**2 / 2, t0, 1, 0, 0, 0, 0, 0],
            [t1**3 / 6, t1**2 / 2, t1, 1, 0, 0, 0, 0, 0],
            [t1**2 / 2, t1, 1, 0, -t1**2 / 2, -t1, -1, 0, 0],
            [0, 0, 0, 0, t2**3 / 6, t2**2 / 2, t2, 1, 0],
            [0, 0, 0, 0, -t2, -1, 0, 0, 0],
            [0, 0, 0, 0, t1**3 / 6, t1**2 / 2, t1, 1, 0],
            [t1, 1, 0, 0, -t1, -1, 0, 0, 0],
            [1, 0, 0, 0, -1, 0, 0, 0, -1],
        ], dtype=float)
        rhs = np.array([v0, 0.0, L1, 0.0, L2, 0.0, L1, 0.0, 0.0])
    else:
        a = np.array([
            [t0**2 / 2, t0, 1, 0, 0, 0, 0, 0, 0, 0],
            [t0**3 / 6, t0**2 / 2, t0, 1, 0, 0, 0, 0, 0, 0],
            [t1**3 / 6, t1**2 / 2, t1, 1, 0, 0, 0, 0, 0, 0],
            [t1**2 / 2, t1, 1, 0, 0, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, t2**3 / 6, t2**2 / 2, t2, 1, 0, 0],
            [0, 0, 0, 0, -t2, -1, 0, 0, 0, 0],
            [0, 0, 0, 0, t1**3 / 6, t1**2 / 2, t1, 1, 0, 0],
            [0, 0, 0, 0, t1**2 / 2, t1, 1, 0, 0, 0],
            [1, 0, 0, 0, -1, 0, 0, 0, -1, 0],
            [-t1, -1, 0, 0, t1, 1, 0, 0, 0, -1],
        ], dtype=float)
        rhs = np.array([v0, 0.0, L1, v1, L2, 0.0, L1, v1, 0.0, 0.0])
    return a, rhs


def solve_two_arc(t0: float, v0: float, t_m1: float, L1: float, t_m2: float, L2: float,
                  v1: float | None = None) -> TwoArcSolution:
    """Energy-optimal trajectory through an interior position (and optional speed)."""
    if not (t0 < t_m1 < t_m2):
        raise SingularSystemError(
            f"need t0 < t_m1 < t_m2, got {t0}, {t_m1}, {t_m2}"
        )
    if not (0 < L1 < L2):
        raise DomainError(f"need 0 < L1 < L2, got {L1}, {L2}")
    a, rhs = _two_arc_system(t_m1 - t0, t_m2 - t0, v0, L1, L2, v1)
    cond = condition_estimate(a)
    x = gauss_solve(a, rhs)
    arc1 = Arc(*map(float, x[0:4]), t_start=t0, t_end=t_m1, origin=t0)
    arc2 = Arc(*map(float, x[4:8]), t_start=t_m1, t_end=t_m2, origin=t0)
    pi1 = float(x[9]) if v1 is not None else None
    return TwoArcSolution(arc1, arc2, float(x[8]), pi1, t0, v0, t_m1, L1, t_m2, L2, v1,
                          condition=cond)


def system_residuals(solution) -> np.ndarray:
    """Row residuals A x - b of the system that defines ``solution``."""
    if isinstance(solution, SingleArcSolution):
        arc = solution.arc
        a, rhs = _single_system(solution.t_m - solution.t0, solution.v0, solution.L)
        x = np.array([arc.a, arc.b, arc.c, arc.d])
    else:
        a, rhs = _two_arc_system(solution.t_m1 - solution.t0, solution.t_m2 - solution.t0,
                                 solution.v0, solution.L1, solution.L2, solution.v1)
        x = [*_coeffs(solution.arc1), *_coeffs(solution.arc2), solution.pi0]
        if solution.v1 is not None:
            x.append(solution.pi1)
        x = np.array(x)
    return a @ x - rhs


def _coeffs(arc: Arc):
    return [arc.a, arc.b, arc.c, arc.d]


def _span(solution) -> tuple[float, float]:
    return solution.t0, solution.t_final


def evaluate(solution, t: float) -> StateSample:
    """State, control and co-states at ``t``; the right arc wins at the seam."""
    lo, hi = _span(solution)
    if not lo - 1e-12 <= t <= hi + 1e-12:
        raise DomainError(f"t={t} outside solution span [{lo}, {hi}]")
    arcs = solution.arcs
    arc = arcs[-1] if t >= arcs[-1].t_start else arcs[0]
    u = float(arc.u(t))
    return StateSample(float(arc.p(t)), float(arc.v(t)), u, arc.lambda_p, -u)


def energy(solution) -> float:
    """Exact value of the integral of u^2/2 over all arcs."""
    return float(sum(arc.energy() for arc in solution.arcs))


def hamiltonian(arc: Arc, t: float) -> float:
    u = float(arc.u(t))
    return 0.5 * u * u + arc.lambda_p * float(arc.v(t)) + float(arc.lambda_v(t)) * u


def hamiltonian_jump_residual(solution) -> float:
    """H(t_m1-) - H(t_m1+) + pi0 v(t_m1) + pi1 u(t_m1).

    The control at the seam is taken from the right arc. This is the
    Hamiltonian jump relation as stated for the interior condition; see the
    README for how it relates to the co-state jumps.
    """
    if not isinstance(solution, TwoArcSolution):
        raise DomainError("Hamiltonian jump is only defined for two-arc solutions")
    t1 = solution.t_m1
    h_minus = hamiltonian(solution.arc1, t1)
    h_plus = hamiltonian(solution.arc2, t1)
    v = float(solution.arc2.v(t1))
    u = float(solution.arc2.u(t1))
    pi1 = solution.pi1 or 0.0
    return h_minus - h_plus + solution.pi0 * v + pi1 * u


@dataclass
class BoundReport:
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _arc_extrema(arc: Arc):
    ts = [arc.t_start, arc.t_end]
    if arc.a != 0.0:
        t_vertex = arc.origin - arc.b / arc.a
        if arc.t_start < t_vertex < arc.t_end:
            ts.append(t_vertex)
    return ts


def speed_range(solution_or_trajectory) -> tuple[float, float]:
    """Exact minimum and maximum speed over all arcs."""
    vals = [float(arc.v(t)) for arc in solution_or_trajectory.arcs for t in _arc_extrema(arc)]
    return min(vals), max(vals)


def bound_check(solution_or_trajectory, cfg: ConstraintConfig, step: float = 1e-2,
                tol: float = 1e-9) -> BoundReport:
    """A posteriori check of the speed and control bounds (never clips)."""
    arcs = solution_or_trajectory.arcs
    u_vals, v_vals = [], []
    for arc in arcs:
        n = max(2, int(np.ceil((arc.t_end - arc.t_start) / step)) + 1)
        ts = np.concatenate([np.linspace(arc.t_start, arc.t_end, n), _arc_extrema(arc)])
        u_vals.append(arc.u(ts))
        v_vals.append(arc.v(ts))
    u = np.concatenate(u_vals)
    v = np.concatenate(v_vals)
    report = BoundReport(float(u.min()), float(u.max()), float(v.min()), float(v.max()), [])
    if report.u_min < cfg.u_min - tol:
        report.violations.append(f"u_min {report.u_min:.6g} < {cfg.u_min}")
    if report.u_max > cfg.u_max + tol:
        report.violations.append(f"u_max {report.u_max:.6g} > {cfg.u_max}")
    if report.v_min < cfg.v_min - tol:
        report.violations.append(f"v_min {report.v_min:.6g} < {cfg.v_min}")
    if report.v_max > cfg.v_max + tol:
        report.violations.append(f"v_max {report.v_max:.6g} > {cfg.v_max}")
    return report


def planned_trajectory(solution, zone_length: float) -> Trajectory:
    """Optimal arcs followed by constant-speed crossing of the final zone."""
    last = solution.arcs[-1]
    t_m = solution.t_final
    speed = float(last.v(t_m))
    if not speed > 0:
        return Trajectory(solution.arcs)
    tail = cruise_arc(t_m, t_m + zone_length / speed, float(last.p(t_m)), speed)
    return Trajectory(list(solution.arcs) + [tail])


class OracleResult(NamedTuple):
    energy: float
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray


def oracle_direct(t0: float, v0: float, waypoints: Sequence[tuple[float, float]],
                  n_steps: int = 400) -> OracleResult:
    """Discretized minimum-energy reference used to certify the closed form.

    Controls are piecewise constant on a grid that puts a node on every
    waypoint time; the double integrator is propagated exactly. The weighted
    minimum-norm control meeting the position waypoints is found from the
    normal equations of the equality-constrained least-squares problem.
    """
    if n_steps < 50:
        raise OracleError("n_steps must be at least 50")
    times = [t0] + [float(t) for t, _ in waypoints]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise OracleError("waypoint times must increase from t0")
    total = times[-1] - t0
    durations = np.diff(times)
    counts = np.maximum(1, np.floor(n_steps * durations / total).astype(int))
    counts[-1] += n_steps - counts.sum()
    if counts[-1] < 1:
        raise OracleError("too few steps for the waypoint layout")
    grid = [np.array([t0])]
    for (ta, tb), n in zip(zip(times, times[1:]), counts):
        grid.append(np.linspace(ta, tb, n + 1)[1:])
    tg = np.concatenate(grid)
    dt = np.diff(tg)
    n = dt.size

    # p(t_j) = v0 (t_j - t0) + sum_k u_k [dt_k (t_j - t_{k+1}) + dt_k^2 / 2]
    rows, rhs = [], []
    node = 0
    for (tj, pj), nseg in zip(waypoints, counts):
        node += nseg
        row = np.zeros(n)
        k = np.arange(node)
        row[:node] = dt[k] * (tg[node] - tg[k + 1]) + 0.5 * dt[k] ** 2
        rows.append(row)
        rhs.append(pj - v0 * (tg[node] - t0))
    A = np.array(rows)
    b = np.array(rhs)
    winv = 1.0 / dt
    gram = (A * winv) @ A.T
    try:
        lam = np.linalg.solve(gram, b)
    except np.linalg.LinAlgError as exc:
        raise OracleError(f"waypoint constraints are infeasible: {exc}") from None
    u = winv * (A.T @ lam)
    if not np.allclose(A @ u, b, atol=1e-8, rtol=0):
        raise OracleError("oracle failed to meet the waypoint constraints")
    v = np.concatenate([[v0], v0 + np.cumsum(u * dt)])
    p = np.concatenate([[0.0], np.cumsum(v[:-1] * dt + 0.5 * u * dt**2)])
    return OracleResult(float(0.5 * np.sum(u * u * dt)), tg, p, v, u)
