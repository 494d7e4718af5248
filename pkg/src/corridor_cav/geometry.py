"""Corridor layout, routes, vehicle records and pairwise relations.

The corridor holds two merging zones (intersections) on a straight main axis,
separated by a gap ``D``. Each approach has a single lane, so two vehicles on
the same approach direction that share a zone are in the same lane.

Route ids are fixed by the axis. For ``axis="EW"``::

    EB   east-bound on the axis, zones (1, 2)
    WB   west-bound on the axis, zones (2, 1)
    NB1  SB1   cross street through zone 1
    NB2  SB2   cross street through zone 2

``axis="NS"`` swaps the roles (NB/SB on the axis, EB1/WB1/EB2/WB2 crossing).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import DomainError, InfeasibleOccupancyError

ZONES = (1, 2)


class Direction(str, enum.Enum):
    EAST = "E"
    WEST = "W"
    NORTH = "N"
    SOUTH = "S"

    @property
    def axis(self) -> str:
        return "EW" if self in (Direction.EAST, Direction.WEST) else "NS"

    @property
    def opposite(self) -> "Direction":
        return {
            Direction.EAST: Direction.WEST,
            Direction.WEST: Direction.EAST,
            Direction.NORTH: Direction.SOUTH,
            Direction.SOUTH: Direction.NORTH,
        }[self]


class Relation(str, enum.Enum):
    """Relation of vehicle j to vehicle i inside one merging zone."""

    SAME_LANE = "same_lane"
    OPPOSITE = "opposite"
    CONFLICTING = "conflicting"


@dataclass(frozen=True)
class Route:
    id: str
    direction: Direction
    zones: tuple[int, ...]
    zone_entry: tuple[float, ...]
    exit_distance: float

    def __post_init__(self):
        if not self.zones or len(self.zones) != len(self.zone_entry):
            raise DomainError(f"route {self.id}: zone list empty or inconsistent")
        marks = list(self.zone_entry) + [self.exit_distance]
        if any(b <= a for a, b in zip(marks, marks[1:])) or marks[0] <= 0:
            raise DomainError(f"route {self.id}: distances must increase strictly")

    @property
    def two_zone(self) -> bool:
        return len(self.zones) == 2

    @property
    def last_zone(self) -> int:
        return self.zones[-1]


@dataclass(frozen=True)
class CorridorGeometry:
    """Lengths in meters.

    ``L`` is the distance from the control-zone entry to the first merging
    zone of every route, ``D`` the gap between the two zones and ``S1``/``S2``
    the zone lengths.
    """

    L: float = 100.0
    D: float = 150.0
    S1: float = 18.0
    S2: float = 34.0
    axis: str = "EW"
    _routes: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError("control zone length L must be positive")
        if not self.D >= 0:
            raise DomainError("inter-zone gap D must be nonnegative")
        if not (self.S1 > 0 and self.S2 > 0):
            raise DomainError("zone lengths must be positive")
        if self.axis not in ("EW", "NS"):
            raise DomainError(f"axis must be 'EW' or 'NS', got {self.axis!r}")
        object.__setattr__(self, "_routes", self._build_routes())

    def zone_length(self, zone: int) -> float:
        if zone == 1:
            return self.S1
        if zone == 2:
            return self.S2
        raise DomainError(f"unknown zone {zone}")

    def _route(self, rid, direction, zones):
        entry = [self.L]
        if len(zones) == 2:
            entry.append(self.L + self.zone_length(zones[0]) + self.D)
        exit_distance = entry[-1] + self.zone_length(zones[-1])
        return Route(rid, direction, tuple(zones), tuple(entry), exit_distance)

    def _build_routes(self):
        if self.axis == "EW":
            along = (Direction.EAST, Direction.WEST)
            cross = (Direction.NORTH, Direction.SOUTH)
        else:
            along = (Direction.NORTH, Direction.SOUTH)
            cross = (Direction.EAST, Direction.WEST)
        routes = [
            self._route(along[0].value + "B", along[0], (1, 2)),
            self._route(along[1].value + "B", along[1], (2, 1)),
        ]
        for z in ZONES:
            for d in cross:
                routes.append(self._route(f"{d.value}B{z}", d, (z,)))
        return {r.id: r for r in routes}

    @property
    def routes(self) -> dict[str, Route]:
        return dict(self._routes)

    def route(self, route_id: str) -> Route:
        try:
            return self._routes[route_id]
        except KeyError:
            raise DomainError(
                f"unknown route {route_id!r} for axis {self.axis}; "
                f"expected one of {sorted(self._routes)}"
            ) from None


@dataclass(frozen=True)
class ConstraintConfig:
    u_min: float = -3.0
    u_max: float = 3.0
    v_min: float = 1.0
    v_max: float = 18.0
    delta0: float = 10.0
    h: float = 0.5
    rho: float = 2.0

    def __post_init__(self):
        if not self.u_min < 0 < self.u_max:
            raise DomainError("need u_min < 0 < u_max")
        if not 0 <= self.v_min < self.v_max:
            raise DomainError("need 0 <= v_min < v_max")
        if not self.delta0 > 0:
            raise DomainError("headway offset delta0 must be positive")
        if not self.h >= 0:
            raise DomainError("headway time gain h must be nonnegative")
        if not self.rho > 0:
            raise DomainError("safe time headway rho must be positive")


@dataclass(frozen=True)
class Vehicle:
    """A vehicle as it enters the control zone (p = 0 at ``t0``)."""

    id: int
    route: Route
    t0: float
    v0: float

    def __post_init__(self):
        if self.id < 1:
            raise DomainError("vehicle ids are positive integers")


def distance_to_zone(route: Route, zone: int) -> float:
    """Distance from the control-zone entry to the entry of ``zone``."""
    try:
        return route.zone_entry[route.zones.index(zone)]
    except ValueError:
        raise DomainError(f"zone {zone} is not on route {route.id}") from None


def classify(route_i: Route, route_j: Route, zone: int) -> Relation:
    """Relation between two routes that both traverse ``zone``."""
    if zone not in route_i.zones or zone not in route_j.zones:
        raise DomainError(f"routes {route_i.id} and {route_j.id} do not share zone {zone}")
    if route_i.direction == route_j.direction:
        return Relation.SAME_LANE
    if route_i.direction.opposite == route_j.direction:
        return Relation.OPPOSITE
    return Relation.CONFLICTING


def headway(v: float, cfg: ConstraintConfig) -> float:
    """Safe same-lane distance headway, affine in speed."""
    if v < 0:
        raise DomainError(f"headway undefined for negative speed {v}")
    return cfg.delta0 + cfg.h * v


def zone_occupancy(t_merge: float, v_merge: float, zone_length: float) -> tuple[float, float]:
    """Interval spent inside a merging zone crossed at constant speed."""
    if zone_length == 0:
        return (t_merge, t_merge)
    if not v_merge > 0:
        raise InfeasibleOccupancyError(
            f"cannot cross a {zone_length} m zone at speed {v_merge}"
        )
    return (t_merge, t_merge + zone_length / v_merge)
