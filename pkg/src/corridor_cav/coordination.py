"""Upper-level coordination: per-zone merge queues and merge-time scheduling.

Vehicles are scheduled one at a time, in control-zone entry order. For every
zone on a route the coordinator compares the constant-speed arrival time with
the current tail of the zone's queue and either keeps the queue order
(applying the recursive merge-time rule) or lets the newcomer go first when
nothing forces it to wait.

After the merge times are chosen the vehicle's optimal trajectory is solved
and checked against the queue (zone occupancy) and against the vehicle ahead
in the same lane (distance headway). A failed check tightens the lower bound
on one merge time, or forbids reordering in a zone, and the vehicle is
re-planned.
"""

from __future__ import annotations

import bisect
import enum
import logging
import math
from dataclasses import dataclass, field

from .errors import DomainError, SchedulingError
from .geometry import (
    ConstraintConfig,
    CorridorGeometry,
    Relation,
    Route,
    Vehicle,
    classify,
    distance_to_zone,
    headway,
)
from .ocp import bound_check, planned_trajectory, solve_single_arc, solve_two_arc, speed_range
from .trajectory import Trajectory, min_headway_margin

log = logging.getLogger(__name__)

MAX_REPLANS = 80


class Case(str, enum.Enum):
    FIRST = "first"
    FREE = "free"
    SAME_LANE = "same_lane"
    OPPOSITE = "opposite"
    CONFLICTING = "conflicting"
    REORDER = "reorder"


_RELATION_CASE = {
    Relation.SAME_LANE: Case.SAME_LANE,
    Relation.OPPOSITE: Case.OPPOSITE,
    Relation.CONFLICTING: Case.CONFLICTING,
}


@dataclass(frozen=True)
class QueueEntry:
    vehicle_id: int
    route: Route
    t_merge: float
    v_merge: float
    t_exit: float
    case: Case = Case.FIRST

    @classmethod
    def crossing(cls, vehicle_id, route, t_merge, v_merge, zone_length, case=Case.FIRST):
        """Entry for a vehicle that crosses the zone at its merge speed."""
        return cls(vehicle_id, route, t_merge, v_merge, t_merge + zone_length / v_merge, case)


@dataclass
class MergeQueue:
    """Vehicles bound for one merging zone, in merge order."""

    zone: int
    entries: list[QueueEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def active(self, t: float) -> list[QueueEntry]:
        """Entries that have not yet left the zone at time ``t``."""
        return [e for e in self.entries if e.t_exit > t]

    def insert(self, entry: QueueEntry) -> int:
        if entry.vehicle_id in self.ids():
            raise SchedulingError(f"vehicle {entry.vehicle_id} already queued for zone {self.zone}")
        if self.zone not in entry.route.zones:
            raise SchedulingError(f"route {entry.route.id} does not traverse zone {self.zone}")
        keys = [e.t_merge for e in self.entries]
        idx = bisect.bisect_right(keys, entry.t_merge)
        self.entries.insert(idx, entry)
        return idx

    def ids(self) -> list[int]:
        return [e.vehicle_id for e in self.entries]

    def merge_times(self) -> list[float]:
        return [e.t_merge for e in self.entries]

    def is_ordered(self) -> bool:
        times = self.merge_times()
        return all(b >= a for a, b in zip(times, times[1:]))


@dataclass
class ZoneSlot:
    zone: int
    t_merge: float
    v_merge: float
    t_exit: float
    case: Case
    position: int = -1


@dataclass
class Schedule:
    vehicle: Vehicle
    slots: dict[int, ZoneSlot]
    t_exit: float
    solution: object
    trajectory: Trajectory
    flags: list[str] = field(default_factory=list)

    @property
    def merge_times(self) -> dict[int, float]:
        return {z: s.t_merge for z, s in self.slots.items()}

    @property
    def feasible(self) -> bool:
        return not any(f.startswith("infeasible") for f in self.flags)


def unconstrained_merge_time(vehicle: Vehicle, zone: int) -> float:
    """Arrival time at ``zone`` when holding the entry speed."""
    if not vehicle.v0 > 0:
        raise DomainError(f"vehicle {vehicle.id}: entry speed must be positive")
    return vehicle.t0 + distance_to_zone(vehicle.route, zone) / vehicle.v0


def theorem1_merge_time(relation: Relation, pred: QueueEntry | None, leader: QueueEntry | None,
                        cfg: ConstraintConfig) -> float:
    """Earliest merge time behind the queue tail ``pred``.

    ``relation`` is the relation of ``pred`` to the new vehicle and ``leader``
    the closest same-lane vehicle in the queue (``None`` when there is none;
    for a same-lane ``pred`` it is ``pred`` itself). For a conflicting
    ``pred`` the bound is the end of its occupancy, ``t_merge + S/v_merge``
    when it crosses at constant speed.
    """
    if pred is None:
        raise SchedulingError("empty queue: use the unconstrained merge time")

    def rear_end_term(k):
        if k is None:
            return -math.inf
        if not k.v_merge > 0:
            raise SchedulingError(f"vehicle {k.vehicle_id} has no positive merge speed")
        return k.t_merge + headway(k.v_merge, cfg) / k.v_merge

    if relation is Relation.SAME_LANE:
        return rear_end_term(leader if leader is not None else pred)
    if relation is Relation.OPPOSITE:
        return max(pred.t_merge, rear_end_term(leader))
    if not pred.v_merge > 0:
        raise SchedulingError(f"vehicle {pred.vehicle_id} has no positive merge speed")
    return max(pred.t_exit, rear_end_term(leader))


def throughput_objective(queues) -> float:
    """Sum over zones of last merge time minus first merge time."""
    total = 0.0
    for q in queues:
        times = q.merge_times()
        if len(times) > 1:
            total += times[-1] - times[0]
    return total


def _disjoint(a, b, tol=1e-9):
    return a[1] <= b[0] + tol or b[1] <= a[0] + tol


class Coordinator:
    """Sequential scheduler holding one merge queue per zone."""

    def __init__(self, geometry: CorridorGeometry, cfg: ConstraintConfig):
        self.geometry = geometry
        self.cfg = cfg
        self.queues = {1: MergeQueue(1), 2: MergeQueue(2)}
        self.schedules: dict[int, Schedule] = {}
        self.events: list[str] = []

    # ------------------------------------------------------------------ slots
    GAP_SCAN_STEP = 0.05

    def _slot(self, vehicle: Vehicle, zone: int, t_nat: float, t_min: float):
        """Merge time and case for ``vehicle`` in ``zone``.

        ``t_nat`` is the natural arrival and ``t_min`` the earliest reachable
        one. The later candidate is the first gap at or after ``t_nat``; the
        earlier one is the latest gap in ``[t_min, t_nat)`` found on a
        ``GAP_SCAN_STEP`` grid. Candidates whose estimated merge speed leaves
        the speed bounds are avoided; otherwise the one closer to ``t_nat``
        wins.
        """
        active = self.queues[zone].active(vehicle.t0)
        if not active:
            return t_nat, Case.FIRST
        route = vehicle.route
        rel_of = {e.vehicle_id: classify(route, e.route, zone) for e in active}
        pred = active[-1]
        rel = rel_of[pred.vehicle_id]

        late = self._earliest_gap(vehicle, zone, t_nat, active, rel_of)
        t = late
        if late > t_nat:
            early = self._latest_gap_before(vehicle, zone, t_min, t_nat, active, rel_of)
            if early is not None:
                ok_late = self._speed_ok(vehicle, zone, late)
                if not ok_late or t_nat - early < late - t_nat:
                    t = early
        if t < pred.t_merge:
            return t, Case.REORDER
        same = [e for e in active if rel_of[e.vehicle_id] is Relation.SAME_LANE]
        bound = theorem1_merge_time(rel, pred, same[-1] if same else None, self.cfg)
        if t < bound - 1e-9:
            raise SchedulingError(
                f"vehicle {vehicle.id}: gap search returned {t} below the queue bound {bound}"
            )
        if t == t_nat:
            return t, Case.FREE
        return t, _RELATION_CASE[rel]

    def _fits(self, vehicle, zone, t, active, rel_of) -> bool:
        """Whether merging at ``t`` respects every queued entry.

        The newcomer stays behind every same-lane entry (headway at the
        leader's merge speed). Against a conflicting entry it either merges
        after that entry has left the zone, or is done crossing before the
        entry merges and leads it by at least the safe time headway.
        """
        cfg = self.cfg
        occ = None
        for e in active:
            rel = rel_of[e.vehicle_id]
            if rel is Relation.SAME_LANE:
                if t < e.t_merge + headway(e.v_merge, cfg) / e.v_merge:
                    return False
            elif rel is Relation.CONFLICTING and t < e.t_exit:
                if occ is None:
                    occ = self.geometry.zone_length(zone) / self._speed_estimate(vehicle, zone, t)
                if not (t + occ <= e.t_merge and e.t_merge - t >= cfg.rho):
                    return False
        return True

    def _earliest_gap(self, vehicle, zone, t, active, rel_of):
        """Earliest t' >= t accepted by ``_fits``."""
        cfg = self.cfg
        same = [e for e in active if rel_of[e.vehicle_id] is Relation.SAME_LANE]
        if same:
            t = max([t] + [k.t_merge + headway(k.v_merge, cfg) / k.v_merge for k in same])
        conflicting = [e for e in active if rel_of[e.vehicle_id] is Relation.CONFLICTING]
        S = self.geometry.zone_length(zone)
        changed = True
        while changed:
            changed = False
            occ = S / self._speed_estimate(vehicle, zone, t)
            for e in conflicting:
                if t >= e.t_exit:
                    continue
                if t + occ <= e.t_merge and e.t_merge - t >= cfg.rho:
                    continue
                t = e.t_exit
                changed = True
        return t

    def _latest_gap_before(self, vehicle, zone, t_min, t_nat, active, rel_of):
        n = int(math.floor((t_nat - t_min) / self.GAP_SCAN_STEP))
        for k in range(1, n + 1):
            t = t_nat - k * self.GAP_SCAN_STEP
            if self._speed_ok(vehicle, zone, t) and self._fits(vehicle, zone, t, active, rel_of):
                return t
        return None

    def _speed_ok(self, vehicle, zone, t) -> bool:
        """Whether the estimated merge speed at ``t`` stays inside the speed bounds."""
        if zone != vehicle.route.zones[0]:
            return True
        T = t - vehicle.t0
        v_end = 1.5 * vehicle.route.zone_entry[0] / T - 0.5 * vehicle.v0
        return self.cfg.v_min <= v_end <= self.cfg.v_max

    def _speed_estimate(self, vehicle, zone, t):
        route = vehicle.route
        if zone == route.zones[0]:
            return self._continuation_speed(vehicle, t)
        return vehicle.v0

    # ------------------------------------------------------------------- plan
    def _plan(self, vehicle: Vehicle, times: dict[int, float]):
        route = vehicle.route
        if route.two_zone:
            z1, z2 = route.zones
            sol = solve_two_arc(vehicle.t0, vehicle.v0, times[z1], route.zone_entry[0],
                                times[z2], route.zone_entry[1])
        else:
            (z1,) = route.zones
            sol = solve_single_arc(vehicle.t0, vehicle.v0, times[z1], route.zone_entry[0])
        traj = planned_trajectory(sol, self.geometry.zone_length(route.last_zone))
        occupancy = {}
        for z, L_z in zip(route.zones, route.zone_entry):
            t_in = times[z]
            v_in = float(traj.v(t_in))
            end_pos = L_z + self.geometry.zone_length(z)
            if z == route.last_zone:
                t_out = float(traj.t_end) if v_in > 0 else math.inf
            else:
                try:
                    t_out = float(traj.time_at_position(end_pos))
                except DomainError:
                    t_out = math.inf
            occupancy[z] = (t_in, v_in, t_out)
        return sol, traj, occupancy

    def _repair_zone(self, vehicle, leader, times, t_bad, step) -> int:
        """Zone whose merge time to delay after a rear-end conflict with ``leader``.

        Before the first merge only the first zone helps. Later on, both
        delays are tried and the one leaving the larger headway margin wins.
        """
        route = vehicle.route
        if not route.two_zone:
            return route.zones[0]
        z1, z2 = route.zones
        if t_bad <= times[z1]:
            return z1
        best, best_z = -math.inf, z2
        for z in (z2, z1):
            trial = dict(times)
            trial[z] += step
            if z == z1:
                trial[z2] = max(trial[z2], trial[z1] + 1e-6)
            try:
                _, traj, _ = self._plan(vehicle, trial)
            except DomainError:
                continue
            m, _ = min_headway_margin(leader.trajectory, traj, self.cfg.delta0, self.cfg.h)
            if m > best:
                best, best_z = m, z
        return best_z

    @staticmethod
    def _crossable(occ) -> bool:
        return all(v_in > 0 and math.isfinite(t_out) for _, v_in, t_out in occ.values())

    def _relax(self, vehicle: Vehicle, times: dict[int, float]):
        """Pull the merge times back toward constant-speed arrival until every zone is crossed."""
        nat = {z: unconstrained_merge_time(vehicle, z) for z in times}
        v_floor = max(self.cfg.v_min, 1e-3)

        def plan(lam):
            t = {z: nat[z] + lam * (times[z] - nat[z]) for z in times}
            sol, traj, occ = self._plan(vehicle, t)
            return t, sol, traj, occ

        lo, hi = 0.0, 1.0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            try:
                _, _, traj, occ = plan(mid)
            except DomainError:
                hi = mid
                continue
            v_low = speed_range(traj)[0]
            if self._crossable(occ) and v_low >= v_floor:
                lo = mid
            else:
                hi = mid
        return plan(lo)

    def _continuation_speed(self, vehicle: Vehicle, t_first: float) -> float:
        """Merge speed at the first zone if the first arc ended with u = 0."""
        T = t_first - vehicle.t0
        v_end = 1.5 * vehicle.route.zone_entry[0] / T - 0.5 * vehicle.v0
        return max(min(v_end, self.cfg.v_max), self.cfg.v_min, 1e-3)

    def _physical_leader(self, vehicle: Vehicle) -> Schedule | None:
        route = vehicle.route
        for vid in sorted(self.schedules, reverse=True):
            other = self.schedules[vid]
            r = other.vehicle.route
            if r.direction == route.direction and set(r.zones) & set(route.zones):
                if other.t_exit > vehicle.t0:
                    return other
                return None
        return None

    # --------------------------------------------------------------- schedule
    def schedule_arrival(self, vehicle: Vehicle) -> Schedule:
        if vehicle.id in self.schedules:
            raise SchedulingError(f"vehicle {vehicle.id} already scheduled")
        if self.schedules and vehicle.t0 < max(s.vehicle.t0 for s in self.schedules.values()):
            raise SchedulingError("arrivals must be processed in entry order")
        route = vehicle.route
        cfg = self.cfg
        lower = {z: -math.inf for z in route.zones}
        leader = self._physical_leader(vehicle)
        step = 0.1
        flags: list[str] = []

        for attempt in range(MAX_REPLANS):
            times, cases = {}, {}
            flags = []
            t_prev = None
            for idx, z in enumerate(route.zones):
                t_nat = unconstrained_merge_time(vehicle, z)
                if idx == 0:
                    L_z = route.zone_entry[0]
                    t_min = vehicle.t0 + 1.5 * L_z / (cfg.v_max + 0.5 * vehicle.v0)
                else:
                    gap = route.zone_entry[1] - route.zone_entry[0]
                    v_cont = min(self._continuation_speed(vehicle, t_prev), vehicle.v0)
                    t_nat = max(t_nat, t_prev + gap / v_cont)
                    t_min = t_prev + gap / cfg.v_max
                    if t_min > t_nat:
                        t_nat = t_min
                        flags.append(f"reach_clamped:{z}")
                t_min = max(t_min, lower[z])
                if lower[z] > t_nat:
                    t_nat = lower[z]
                t, case = self._slot(vehicle, z, t_nat, t_min)
                times[z], cases[z] = t, case
                t_prev = t

            if route.two_zone and cfg.v_min > 0:
                z1, z2 = route.zones
                gap = route.zone_entry[1] - route.zone_entry[0]
                latest_first = times[z2] - gap / cfg.v_min
                if times[z1] < latest_first - 1e-9:
                    lower[z1] = latest_first
                    continue

            try:
                sol, traj, occ = self._plan(vehicle, times)
            except DomainError as exc:
                sol = traj = occ = None
                self.events.append(f"vehicle {vehicle.id}: no trajectory for {sorted(times.items())} ({exc})")
                break
            retry = False
            for z in route.zones:
                t_in, _, t_out = occ[z]
                for e in self.queues[z].active(vehicle.t0):
                    if classify(route, e.route, z) is not Relation.CONFLICTING:
                        continue
                    if _disjoint((t_in, t_out), (e.t_merge, e.t_exit)):
                        continue
                    lower[z] = max(lower[z], e.t_exit)
                    retry = True
            if retry:
                continue

            if leader is not None:
                margin, t_bad = min_headway_margin(leader.trajectory, traj, cfg.delta0, cfg.h)
                if margin < -1e-9:
                    if t_bad is not None and t_bad <= vehicle.t0 + 1e-9:
                        flags.append("infeasible:entry_headway")
                        self.events.append(
                            f"vehicle {vehicle.id}: entry gap to vehicle "
                            f"{leader.vehicle.id} below headway ({margin:.3f} m)"
                        )
                    else:
                        z = self._repair_zone(vehicle, leader, times, t_bad, step)
                        lower[z] = max(lower[z], times[z] + step)
                        step = min(2.0 * step, 2.0)
                        if "safety_delayed" not in flags:
                            flags.append("safety_delayed")
                        continue
            break
        else:
            try:
                sol, traj, occ = self._plan(vehicle, times)
            except DomainError:
                sol = traj = occ = None
            flags.append("infeasible:replan_limit")
            self.events.append(f"vehicle {vehicle.id}: no safe plan after {MAX_REPLANS} replans")

        if occ is None or not self._crossable(occ):
            times, sol, traj, occ = self._relax(vehicle, times)
            flags.append("infeasible:relaxed")
            self.events.append(
                f"vehicle {vehicle.id}: schedule stalls inside the zones, "
                f"admitted with relaxed merge times {sorted(times.items())}"
            )

        report = bound_check(traj, cfg)
        if not report.ok:
            flags.append("infeasible:bounds " + "; ".join(report.violations))
            self.events.append(f"vehicle {vehicle.id}: bounds violated ({'; '.join(report.violations)})")

        slots = {}
        for z in route.zones:
            t_in, v_in, t_out = occ[z]
            entry = QueueEntry(vehicle.id, route, t_in, v_in, t_out, cases[z])
            pos = self.queues[z].insert(entry)
            if cases[z] is Case.REORDER and pos < len(self.queues[z]) - 1:
                behind = self.queues[z].ids()[pos + 1:]
                self.events.append(
                    f"vehicle {vehicle.id} inserted ahead of {behind} in zone {z}; "
                    "those vehicles keep their merge times"
                )
            slots[z] = ZoneSlot(z, t_in, v_in, t_out, cases[z], pos)
        schedule = Schedule(vehicle, slots, occ[route.last_zone][2], sol, traj, flags)
        self.schedules[vehicle.id] = schedule
        return schedule

    def schedule_table(self) -> list[dict]:
        rows = []
        for vid in sorted(self.schedules):
            s = self.schedules[vid]
            for z, slot in s.slots.items():
                rows.append({
                    "vehicle_id": vid,
                    "route": s.vehicle.route.id,
                    "zone": z,
                    "case": slot.case.value,
                    "t_merge": slot.t_merge,
                    "v_merge": slot.v_merge,
                    "t_exit_zone": slot.t_exit,
                })
        return rows
