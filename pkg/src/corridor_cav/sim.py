"""Corridor simulation in optimized mode and in the signalized baseline.

Optimized mode replays the analytic trajectories produced by the
coordinator. Baseline mode is a time-stepped Gipps car-following model with
two-phase fixed-time signals at both intersections. Both share the sampling
convention: every vehicle is sampled at its entry time, at every global grid
instant ``n * dt`` it is in the network, and at its exit time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coordination import Coordinator
from .errors import DomainError, ScenarioError
from .geometry import (
    ConstraintConfig,
    CorridorGeometry,
    Relation,
    Route,
    Vehicle,
    classify,
    headway,
)
from .metrics import KAMAL, FuelModelCoefficients
from .ocp import energy, planned_trajectory, solve_single_arc, solve_two_arc

AUDIT_TOL = 1e-6


class SpawnError(ScenarioError):
    """A single spawn entry is invalid; ``index`` is its position in the list."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Spawn:
    t0: float
    route: str
    v0: float


@dataclass(frozen=True)
class GippsParams:
    desired_speed: float = 13.0
    accel: float = 1.7
    brake: float = -3.0
    reaction: float = 0.7
    leader_brake: float = -3.5
    jam_spacing: float = 6.5

    def __post_init__(self):
        if not self.brake < 0 < self.accel:
            raise DomainError("Gipps parameters need brake < 0 < accel")
        if not self.reaction > 0:
            raise DomainError("Gipps reaction time must be positive")
        if not self.leader_brake < 0:
            raise DomainError("Gipps leader braking estimate must be negative")
        if not (self.desired_speed > 0 and self.jam_spacing > 0):
            raise DomainError("Gipps desired speed and jam spacing must be positive")


@dataclass(frozen=True)
class Scenario:
    geometry: CorridorGeometry = field(default_factory=CorridorGeometry)
    constraints: ConstraintConfig = field(default_factory=ConstraintConfig)
    spawns: tuple[Spawn, ...] = ()
    dt: float = 0.05
    cycle: float = 10.0
    gipps: GippsParams = field(default_factory=GippsParams)
    mode: str = "compare"
    name: str = ""
    fuel: FuelModelCoefficients = KAMAL

    def __post_init__(self):
        object.__setattr__(self, "spawns", tuple(self.spawns))
        validate_scenario(self)

    def vehicles(self) -> list[Vehicle]:
        """Vehicles in processing order with ids 1..N.

        Simultaneous entries go by route id, then by spawn index.
        """
        order = sorted(range(len(self.spawns)),
                       key=lambda k: (self.spawns[k].t0, self.spawns[k].route, k))
        return [
            Vehicle(i, self.geometry.route(self.spawns[k].route), self.spawns[k].t0, self.spawns[k].v0)
            for i, k in enumerate(order, start=1)
        ]


def validate_scenario(sc: Scenario) -> None:
    if not sc.dt > 0:
        raise ScenarioError(f"time step must be positive, got {sc.dt}")
    if not sc.cycle > 0:
        raise ScenarioError(f"signal switching time must be positive, got {sc.cycle}")
    if sc.mode not in ("optimized", "baseline", "compare"):
        raise ScenarioError(f"unknown mode {sc.mode!r}")
    cfg = sc.constraints
    last_on_route: dict[str, Spawn] = {}
    prev_t = -math.inf
    for k, sp in enumerate(sc.spawns):
        tag = f"spawn {k} ({sp.route} at t0={sp.t0})"
        if sp.route not in sc.geometry.routes:
            raise SpawnError(f"{tag}: unknown route; expected one of {sorted(sc.geometry.routes)}", k)
        if not sp.v0 > 0:
            raise SpawnError(f"{tag}: entry speed must be positive", k)
        if not cfg.v_min <= sp.v0 <= cfg.v_max:
            raise SpawnError(f"{tag}: v0={sp.v0} outside [{cfg.v_min}, {cfg.v_max}]", k)
        if sp.t0 < prev_t:
            raise SpawnError(f"{tag}: spawn times must be nondecreasing", k)
        prev_t = sp.t0
        ahead = last_on_route.get(sp.route)
        if ahead is not None:
            gap = (sp.t0 - ahead.t0) * ahead.v0
            need = headway(sp.v0, cfg)
            if gap < need - 1e-9:
                raise SpawnError(
                    f"{tag}: entry gap {gap:.3f} m to the previous {sp.route} vehicle "
                    f"is below the headway {need:.3f} m",
                    k,
                )
        last_on_route[sp.route] = sp


@dataclass
class VehicleResult:
    vehicle_id: int
    route: str
    t0: float
    v0: float
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    zone_flag: np.ndarray
    zone_times: dict[int, tuple[float, float]]
    t_exit: float
    merge_times: dict[int, float] = field(default_factory=dict)
    energy: float = float("nan")
    flags: list[str] = field(default_factory=list)

    @property
    def travel_time(self) -> float:
        return self.t_exit - self.t0


@dataclass
class AuditReport:
    rear_end: list[dict] = field(default_factory=list)
    lateral: list[dict] = field(default_factory=list)
    rear_end_rule: str = "headway"

    @property
    def clean(self) -> bool:
        return not self.rear_end and not self.lateral

    def to_dict(self) -> dict:
        return {
            "clean": self.clean,
            "rear_end_rule": self.rear_end_rule,
            "rear_end_violations": self.rear_end,
            "lateral_violations": self.lateral,
        }


@dataclass
class SimResult:
    mode: str
    scenario: Scenario
    vehicles: list[VehicleResult]
    schedule: list[dict] = field(default_factory=list)
    issues: list[str] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    audit: AuditReport | None = None

    def vehicle(self, vehicle_id: int) -> VehicleResult:
        for r in self.vehicles:
            if r.vehicle_id == vehicle_id:
                return r
        raise KeyError(vehicle_id)


def _zone_flags(route: Route, geometry: CorridorGeometry, p: np.ndarray) -> np.ndarray:
    flag = np.zeros(p.shape, dtype=int)
    for z, L_z in zip(route.zones, route.zone_entry):
        inside = (p >= L_z) & (p < L_z + geometry.zone_length(z))
        flag[inside] = z
    return flag


def _sample_times(t0: float, t_end: float, dt: float, extra=()) -> np.ndarray:
    k0 = math.floor(t0 / dt) + 1
    k1 = math.ceil(t_end / dt) - 1
    grid = np.arange(k0, k1 + 1) * dt if k1 >= k0 else np.empty(0)
    grid = grid[(grid > t0) & (grid < t_end)]
    pts = np.concatenate([[t0], grid, [t_end], [x for x in extra if t0 < x < t_end]])
    pts = np.unique(pts)
    return pts


# ---------------------------------------------------------------- optimized
ScheduleHook = Callable[[dict[int, dict[int, float]]], dict[int, dict[int, float]]]


def _solve_for_times(vehicle: Vehicle, geometry: CorridorGeometry, times: dict[int, float]):
    route = vehicle.route
    if route.two_zone:
        z1, z2 = route.zones
        sol = solve_two_arc(vehicle.t0, vehicle.v0, times[z1], route.zone_entry[0],
                            times[z2], route.zone_entry[1])
    else:
        sol = solve_single_arc(vehicle.t0, vehicle.v0, times[route.zones[0]], route.zone_entry[0])
    return sol, planned_trajectory(sol, geometry.zone_length(route.last_zone))


def run_optimized(scenario: Scenario, schedule_hook: ScheduleHook | None = None,
                  observer=None) -> SimResult:
    """Coordinate every spawn and sample the resulting analytic trajectories.

    ``schedule_hook`` receives ``{vehicle_id: {zone: merge time}}`` after all
    arrivals are scheduled and may return altered merge times; affected
    vehicles are re-solved with them untouched by the coordinator. It exists
    to test that the audit catches a corrupted schedule. ``observer`` is
    called with the coordinator after every arrival.
    """
    geometry, cfg = scenario.geometry, scenario.constraints
    coord = Coordinator(geometry, cfg)
    vehicles = scenario.vehicles()
    for veh in vehicles:
        coord.schedule_arrival(veh)
        if observer is not None:
            observer(coord)

    plans = {vid: (s.solution, s.trajectory) for vid, s in coord.schedules.items()}
    issues = []
    if schedule_hook is not None:
        original = {vid: dict(s.merge_times) for vid, s in coord.schedules.items()}
        altered = schedule_hook({vid: dict(t) for vid, t in original.items()})
        for vid, times in altered.items():
            if times != original[vid]:
                veh = coord.schedules[vid].vehicle
                try:
                    plans[vid] = _solve_for_times(veh, geometry, times)
                except DomainError as exc:
                    issues.append(f"vehicle {vid}: altered schedule not solvable ({exc})")
                    continue
                issues.append(f"vehicle {vid}: merge times overridden to {sorted(times.items())}")

    results = []
    dt = scenario.dt
    for veh in vehicles:
        sched = coord.schedules[veh.id]
        sol, traj = plans[veh.id]
        route = veh.route
        zone_times = {}
        for z, L_z in zip(route.zones, route.zone_entry):
            t_in = traj.time_at_position(L_z)
            t_out = (traj.t_end if z == route.last_zone
                     else traj.time_at_position(L_z + geometry.zone_length(z)))
            zone_times[z] = (float(t_in), float(t_out))
        merges = {z: zone_times[z][0] for z in route.zones}
        t = _sample_times(traj.t_start, traj.t_end, dt, merges.values())
        p, v, u = traj.p(t), traj.v(t), traj.u(t)
        flags = list(sched.flags)
        for f in flags:
            if f.startswith("infeasible"):
                issues.append(f"vehicle {veh.id}: {f}")
        results.append(VehicleResult(
            veh.id, route.id, veh.t0, veh.v0, t, p, v, u, _zone_flags(route, geometry, p),
            zone_times, float(traj.t_end), merges, energy(sol), flags,
        ))

    res = SimResult("optimized", scenario, results, coord.schedule_table(), issues, list(coord.events))
    res.audit = collision_audit(res, geometry, cfg)
    return res


# ----------------------------------------------------------------- baseline
def signal_green(direction_axis: str, t: float, cycle: float) -> bool:
    """East-west is green during even switching periods, north-south during odd ones."""
    ew = int(math.floor(t / cycle + 1e-12)) % 2 == 0
    return ew if direction_axis == "EW" else not ew


def _time_to_cover(d: float, v: float, a: float, v_top: float) -> float:
    """Time to cover ``d`` starting at ``v`` and accelerating at ``a`` up to ``v_top``."""
    if d <= 0:
        return 0.0
    v_top = max(v_top, v)
    if a <= 0 or v >= v_top:
        return d / v if v > 0 else math.inf
    t_acc = (v_top - v) / a
    d_acc = v * t_acc + 0.5 * a * t_acc * t_acc
    if d_acc >= d:
        return (-v + math.sqrt(v * v + 2 * a * d)) / a
    return t_acc + (d - d_acc) / v_top


def _crossing_in_step(p: float, v: float, a: float, h: float, x: float) -> float:
    """Offset s in [0, h] at which p + v s + a s^2 / 2 first reaches ``x``."""
    if abs(a) < 1e-14:
        return min(max((x - p) / v, 0.0), h) if v > 0 else h
    disc = v * v + 2 * a * (x - p)
    if disc < 0:
        return h
    r = math.sqrt(disc)
    cands = [s for s in ((-v + r) / a, (-v - r) / a) if -1e-12 <= s <= h + 1e-12]
    return min(max(min(cands), 0.0), h) if cands else h


class _Car:
    __slots__ = ("veh", "route", "t", "p", "v", "ts", "ps", "vs", "us",
                 "zone_in", "zone_out", "done", "t_exit", "leader")

    def __init__(self, veh: Vehicle):
        self.veh = veh
        self.route = veh.route
        self.t, self.p, self.v = veh.t0, 0.0, veh.v0
        self.ts, self.ps, self.vs, self.us = [veh.t0], [0.0], [veh.v0], []
        self.zone_in: dict[int, float] = {}
        self.zone_out: dict[int, float] = {}
        self.done = False
        self.t_exit = math.nan
        self.leader: _Car | None = None


def gipps_speed(v: float, gap_term: float, v_lead: float, h: float, g: GippsParams) -> float:
    """One Gipps update: min of the free-flow and the safe-braking speed.

    ``gap_term`` is x_leader - jam_spacing - x. The free-flow branch uses the
    update step ``h``; the safe branch uses the reaction time.
    """
    V, a, b, tau, bh = g.desired_speed, g.accel, g.brake, g.reaction, g.leader_brake
    ratio = max(v, 0.0) / V
    v_free = v + 2.5 * a * h * (1.0 - ratio) * math.sqrt(0.025 + ratio)
    if gap_term is None:
        return max(v_free, 0.0)
    arg = b * b * tau * tau - b * (2.0 * gap_term - v * tau - v_lead * v_lead / bh)
    v_safe = b * tau + math.sqrt(arg) if arg > 0 else 0.0
    return max(min(v_free, v_safe), 0.0)


def run_baseline(scenario: Scenario) -> SimResult:
    """Gipps car following through two fixed-time signalized intersections.

    A red signal, or a conflicting vehicle inside or committed to the zone,
    turns the stop line into a stationary leader placed one jam spacing past
    the zone entry. A vehicle on green also holds at the line when it cannot
    clear the zone before the phase ends. Either rule applies only while the
    vehicle can still stop comfortably.
    """
    geometry, g, dt = scenario.geometry, scenario.gipps, scenario.dt
    vehicles = scenario.vehicles()
    cars = [_Car(v) for v in vehicles]
    last_on_route: dict[str, _Car] = {}
    for car in cars:
        car.leader = last_on_route.get(car.route.id)
        last_on_route[car.route.id] = car
    issues: list[str] = []
    if not cars:
        res = SimResult("baseline", scenario, [], [], issues, [])
        res.audit = collision_audit(res, geometry, scenario.constraints)
        return res

    b_abs = -g.brake
    k = math.floor(vehicles[0].t0 / dt)
    pending = list(cars)
    active: list[_Car] = []
    t_cap = max(v.t0 for v in vehicles) + 3600.0

    def inside(car, z, L_z):
        return L_z <= car.p < L_z + geometry.zone_length(z)

    while pending or active:
        t_next = (k + 1) * dt
        if t_next > t_cap:
            for car in active:
                issues.append(f"vehicle {car.veh.id}: still in network at t={t_next:.3f}")
            break
        while pending and pending[0].veh.t0 < t_next:
            active.append(pending.pop(0))
        updates = []
        for car in active:
            h = t_next - car.t
            if h <= 1e-12:
                continue
            lead = car.leader
            gap_term, v_lead = None, 0.0
            if lead is not None and not lead.done:
                # a car spawned inside this step sees its leader extrapolated to t0
                x_l = lead.p + lead.v * max(car.t - lead.t, 0.0)
                gap_term, v_lead = x_l - g.jam_spacing - car.p, lead.v
            stop = _stop_line(car, active, geometry, scenario.cycle, g, b_abs)
            if stop is not None:
                # stationary leader one jam spacing past the stop line
                term = stop - car.p
                if gap_term is None or term < gap_term:
                    gap_term, v_lead = term, 0.0
            v_new = gipps_speed(car.v, gap_term, v_lead, h, g)
            updates.append((car, h, v_new))
        for car, h, v_new in updates:
            a = (v_new - car.v) / h
            p_new = car.p + 0.5 * (car.v + v_new) * h
            for z, L_z in zip(car.route.zones, car.route.zone_entry):
                end = L_z + geometry.zone_length(z)
                if z not in car.zone_in and p_new >= L_z:
                    car.zone_in[z] = car.t + _crossing_in_step(car.p, car.v, a, h, L_z)
                if z not in car.zone_out and p_new >= end:
                    car.zone_out[z] = car.t + _crossing_in_step(car.p, car.v, a, h, end)
            exit_d = car.route.exit_distance
            car.us.append(a)
            if p_new >= exit_d:
                s = _crossing_in_step(car.p, car.v, a, h, exit_d)
                car.t_exit = car.t + s
                car.ts.append(car.t_exit)
                car.ps.append(exit_d)
                car.vs.append(car.v + a * s)
                car.t, car.p, car.v = car.t_exit, exit_d, car.v + a * s
                car.done = True
            else:
                car.t, car.p, car.v = t_next, p_new, v_new
                car.ts.append(t_next)
                car.ps.append(p_new)
                car.vs.append(v_new)
        active = [c for c in active if not c.done]
        k += 1

    results = []
    for car in cars:
        t = np.array(car.ts)
        p = np.array(car.ps)
        v = np.array(car.vs)
        u = np.array(car.us + ([car.us[-1]] if car.us else [0.0]))[: len(t)]
        zt = {z: (car.zone_in.get(z, math.inf), car.zone_out.get(z, math.inf)) for z in car.route.zones}
        results.append(VehicleResult(
            car.veh.id, car.route.id, car.veh.t0, car.veh.v0, t, p, v, u,
            _zone_flags(car.route, geometry, p), zt,
            car.t_exit if car.done else math.inf,
            {z: zt[z][0] for z in car.route.zones},
        ))
    res = SimResult("baseline", scenario, results, [], issues, [])
    res.audit = collision_audit(res, geometry, scenario.constraints, rear_end_rule="jam_spacing",
                                jam_spacing=g.jam_spacing)
    return res


def _stop_line(car: _Car, active, geometry, cycle, g: GippsParams, b_abs: float):
    """Position of the stop line the car must respect this step, or None."""
    for z, L_z in zip(car.route.zones, car.route.zone_entry):
        if car.p >= L_z:
            continue
        d = L_z - car.p
        can_stop = car.v * car.v / (2.0 * b_abs) <= d + 1e-9
        if not can_stop:
            return None
        axis = car.route.direction.axis
        closed = not signal_green(axis, car.t, cycle)
        if not closed:
            t_left = cycle - math.fmod(car.t, cycle)
            t_clear = _time_to_cover(d + geometry.zone_length(z), car.v, g.accel, g.desired_speed)
            closed = t_clear > t_left
        if not closed:
            closed = _conflict_present(car, z, active, geometry, b_abs)
        return L_z if closed else None
    return None


def _conflict_present(car: _Car, zone, active, geometry, b_abs) -> bool:
    """A conflicting vehicle is in the zone or can no longer stop before it."""
    for other in active:
        if other is car or zone not in other.route.zones:
            continue
        if classify(car.route, other.route, zone) is not Relation.CONFLICTING:
            continue
        L_o = other.route.zone_entry[other.route.zones.index(zone)]
        if L_o <= other.p < L_o + geometry.zone_length(zone):
            return True
        if other.p < L_o and other.v > 0:
            d = L_o - other.p
            if other.v * other.v / (2.0 * b_abs) > d:
                return True
    return False


# -------------------------------------------------------------------- audit
def collision_audit(result: SimResult, geometry: CorridorGeometry, cfg: ConstraintConfig,
                    rear_end_rule: str = "headway", jam_spacing: float = 0.0) -> AuditReport:
    """Rear-end and lateral safety check on realized trajectories.

    Same-lane pairs are compared at every common sample instant. With the
    ``headway`` rule the gap must be at least delta(follower speed); with
    ``jam_spacing`` (car-following baseline) it must be at least the jam
    spacing. Conflicting pairs must have disjoint realized zone intervals.
    """
    report = AuditReport(rear_end_rule=rear_end_rule)
    vs = sorted(result.vehicles, key=lambda r: r.vehicle_id)
    for i, a in enumerate(vs):
        ra = geometry.route(a.route)
        for b in vs[i + 1:]:
            rb = geometry.route(b.route)
            shared = [z for z in ra.zones if z in rb.zones]
            if not shared:
                continue
            for z in shared:
                rel = classify(ra, rb, z)
                if rel is Relation.CONFLICTING:
                    ia, ib = a.zone_times[z], b.zone_times[z]
                    overlap = min(ia[1], ib[1]) - max(ia[0], ib[0])
                    if overlap > AUDIT_TOL:
                        report.lateral.append({
                            "zone": z, "vehicles": [a.vehicle_id, b.vehicle_id],
                            "t_start": max(ia[0], ib[0]), "t_end": min(ia[1], ib[1]),
                            "overlap": overlap,
                        })
            if ra.id == rb.id:
                _rear_end(a, b, cfg, rear_end_rule, jam_spacing, report)
    return report


def _rear_end(lead: VehicleResult, fol: VehicleResult, cfg, rule, jam, report):
    common, il, jf = np.intersect1d(lead.t, fol.t, return_indices=True)
    if common.size == 0:
        return
    gap = lead.p[il] - fol.p[jf]
    need = cfg.delta0 + cfg.h * fol.v[jf] if rule == "headway" else np.full(gap.shape, jam)
    bad = gap < need - AUDIT_TOL
    if np.any(bad):
        idx = np.flatnonzero(bad)
        worst = idx[np.argmin(gap[idx] - need[idx])]
        report.rear_end.append({
            "leader": lead.vehicle_id, "follower": fol.vehicle_id,
            "t_first": float(common[idx[0]]), "t_worst": float(common[worst]),
            "gap": float(gap[worst]), "required": float(need[worst]),
            "samples": int(idx.size),
        })
