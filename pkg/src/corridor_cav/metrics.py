"""Drive-cycle metrics: fuel metamodel, travel time, stop factor, power demand."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

V_STOP = 0.1


@dataclass(frozen=True)
class FuelModelCoefficients:
    """Fuel rate f(v, u) = P_cruise(v) + max(u, 0) * P_accel(v), in mL/s.

    ``cruise`` holds (b0, b1, b2, b3) of the cubic in v and ``accel`` holds
    (c0, c1, c2) of the quadratic in v. The rate is checked for
    nonnegativity on the admissible envelope when the object is built.
    """

    cruise: tuple[float, float, float, float]
    accel: tuple[float, float, float]
    name: str = "custom"
    v_envelope: tuple[float, float] = (0.0, 30.0)
    u_envelope: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        object.__setattr__(self, "cruise", tuple(float(c) for c in self.cruise))
        object.__setattr__(self, "accel", tuple(float(c) for c in self.accel))
        if len(self.cruise) != 4 or len(self.accel) != 3:
            raise DomainError("fuel model needs 4 cruise and 3 acceleration coefficients")
        v = np.linspace(*self.v_envelope, 301)
        u = np.linspace(*self.u_envelope, 101)
        vv, uu = np.meshgrid(v, u)
        if np.any(self.rate(vv, uu) < 0):
            raise DomainError(f"fuel model {self.name!r} gives a negative rate inside the envelope")

    def rate(self, v, u):
        v = np.asarray(v, dtype=float)
        u = np.asarray(u, dtype=float)
        b0, b1, b2, b3 = self.cruise
        c0, c1, c2 = self.accel
        cruise = b0 + v * (b1 + v * (b2 + v * b3))
        couple = c0 + v * (c1 + v * c2)
        return cruise + np.maximum(u, 0.0) * couple


KAMAL = FuelModelCoefficients(
    cruise=(0.1569, 2.450e-2, -7.415e-4, 5.975e-5),
    accel=(0.07224, 9.681e-2, 1.075e-3),
    name="kamal",
)

PRESETS = {"kamal": KAMAL}


def _trapz(y, t) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def fuel(t, v, u, coeffs: FuelModelCoefficients = KAMAL) -> float:
    """Trapezoid-rule integral of the fuel rate over the samples."""
    return _trapz(coeffs.rate(v, u), t)


def cumulative_fuel(t, v, u, coeffs: FuelModelCoefficients = KAMAL) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    r = coeffs.rate(v, u)
    out = np.zeros(t.shape)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(t))
    return out


def stop_factor(t, v, v_stop: float = V_STOP) -> float:
    """Fraction of the cycle duration spent below ``v_stop``.

    A sampling interval counts as stopped when the mean of its endpoint
    speeds is below the threshold.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if t.size < 2 or t[-1] <= t[0]:
        return 0.0
    dt = np.diff(t)
    slow = 0.5 * (v[1:] + v[:-1]) < v_stop
    return float(np.sum(dt[slow]) / (t[-1] - t[0]))


def coeff_power_demanded(v, u, v_max: float, u_max: float) -> float:
    """Mean of v*u over samples with v > 0 and u > 0, normalized by v_max*u_max."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    mask = (v > 0) & (u > 0)
    if not np.any(mask):
        return 0.0
    return float(np.mean(v[mask] * u[mask]) / (v_max * u_max))


@dataclass(frozen=True)
class DriveCycleMetrics:
    fuel: float
    travel_time: float
    stop_factor: float
    power_coefficient: float

    def __post_init__(self):
        if min(self.fuel, self.travel_time, self.stop_factor, self.power_coefficient) < 0:
            raise DomainError("drive-cycle metrics must be nonnegative")
        if self.stop_factor > 1 + 1e-12:
            raise DomainError("stop factor cannot exceed 1")

    def as_dict(self) -> dict:
        return {
            "fuel_ml": self.fuel,
            "travel_time_s": self.travel_time,
            "stop_factor": self.stop_factor,
            "power_coefficient": self.power_coefficient,
        }


def vehicle_metrics(vr, v_max: float, u_max: float,
                    coeffs: FuelModelCoefficients = KAMAL) -> DriveCycleMetrics:
    """Metrics of one sampled vehicle over its [t0, t_exit] window."""
    return DriveCycleMetrics(
        fuel(vr.t, vr.v, vr.u, coeffs),
        float(vr.t[-1] - vr.t[0]),
        stop_factor(vr.t, vr.v),
        coeff_power_demanded(vr.v, vr.u, v_max, u_max),
    )


def fleet_metrics(result, coeffs: FuelModelCoefficients = KAMAL) -> dict[int, DriveCycleMetrics]:
    cfg = result.scenario.constraints
    return {vr.vehicle_id: vehicle_metrics(vr, cfg.v_max, cfg.u_max, coeffs) for vr in result.vehicles}


def improvement(base: float, opt: float) -> float:
    """Relative improvement (base - opt) / base; zero when both are zero."""
    if base == 0:
        return 0.0 if opt == 0 else -np.inf
    return (base - opt) / base


KEYS = ("fuel", "travel_time", "stop_factor", "power_coefficient")


@dataclass
class Comparison:
    per_vehicle: list[dict] = field(default_factory=list)
    fleet: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"fleet": self.fleet, "per_vehicle": self.per_vehicle}


def compare(fleet_opt: dict[int, DriveCycleMetrics],
            fleet_base: dict[int, DriveCycleMetrics]) -> Comparison:
    """Per-vehicle and fleet improvements of the optimized run over the baseline.

    Fleet fuel and travel time are totals; the fleet stop factor and power
    coefficient are means over vehicles.
    """
    if set(fleet_opt) != set(fleet_base):
        raise DomainError(
            f"vehicle ids differ: optimized {sorted(fleet_opt)} vs baseline {sorted(fleet_base)}"
        )
    out = Comparison()
    for vid in sorted(fleet_opt):
        o, b = fleet_opt[vid], fleet_base[vid]
        row = {"vehicle_id": vid}
        for k in KEYS:
            row[f"{k}_opt"] = getattr(o, k)
            row[f"{k}_base"] = getattr(b, k)
            row[f"{k}_improvement"] = improvement(getattr(b, k), getattr(o, k))
        out.per_vehicle.append(row)
    n = len(fleet_opt)
    for k in KEYS:
        agg_o = sum(getattr(m, k) for m in fleet_opt.values())
        agg_b = sum(getattr(m, k) for m in fleet_base.values())
        if k in ("stop_factor", "power_coefficient") and n:
            agg_o, agg_b = agg_o / n, agg_b / n
        out.fleet[f"{k}_opt"] = agg_o
        out.fleet[f"{k}_base"] = agg_b
        out.fleet[f"{k}_improvement"] = improvement(agg_b, agg_o)
    return out
