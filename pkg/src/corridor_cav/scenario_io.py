"""Scenario files (YAML), the built-in presets and the numeric output tables.

A scenario document has the optional top-level keys ``name``, ``geometry``,
``constraints``, ``spawns``, ``baseline``, ``run`` and ``fuel``. Unknown keys
are rejected, and every error names the offending line.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import yaml

from .errors import DomainError, ScenarioError
from .geometry import ConstraintConfig, CorridorGeometry
from .metrics import PRESETS as FUEL_PRESETS
from .metrics import FuelModelCoefficients
from .sim import GippsParams, Scenario, Spawn, SpawnError

FMT = "{:.9f}"

_GEOMETRY_KEYS = ("L", "D", "S1", "S2", "axis")
_CONSTRAINT_KEYS = tuple(f.name for f in fields(ConstraintConfig))
_GIPPS_KEYS = tuple(f.name for f in fields(GippsParams))
_SPAWN_KEYS = ("t0", "route", "v0")
MODES = ("optimized", "baseline", "compare")


# ------------------------------------------------------------------ parsing
def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping(node, what, allowed):
    if not isinstance(node, yaml.MappingNode):
        raise ScenarioError(f"{what} must be a mapping", _line(node))
    out = {}
    for k_node, v_node in node.value:
        key = k_node.value
        if key not in allowed:
            raise ScenarioError(
                f"unknown key {key!r} in {what}; allowed: {', '.join(allowed)}", _line(k_node)
            )
        if key in out:
            raise ScenarioError(f"duplicate key {key!r} in {what}", _line(k_node))
        out[key] = v_node
    return out


def _number(node, what) -> float:
    if not isinstance(node, yaml.ScalarNode):
        raise ScenarioError(f"{what} must be a number", _line(node))
    val = yaml.safe_load(node.value) if node.style is None else node.value
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(f"{what} must be a number, got {node.value!r}", _line(node))
    val = float(val)
    if not math.isfinite(val):
        raise ScenarioError(f"{what} must be finite", _line(node))
    return val


def _string(node, what) -> str:
    if not isinstance(node, yaml.ScalarNode):
        raise ScenarioError(f"{what} must be a string", _line(node))
    return str(node.value)


def _build(factory, kwargs, what, node):
    try:
        return factory(**kwargs)
    except DomainError as exc:
        raise ScenarioError(f"{what}: {exc}", _line(node)) from None


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"{source}: malformed YAML ({exc})",
                            mark.line + 1 if mark is not None else None) from None
    if root is None:
        return Scenario()
    top = _mapping(root, "scenario", ("name", "geometry", "constraints", "spawns",
                                      "baseline", "run", "fuel"))
    kw: dict = {}
    if "name" in top:
        kw["name"] = _string(top["name"], "name")

    if "geometry" in top:
        sec = _mapping(top["geometry"], "geometry", _GEOMETRY_KEYS)
        g = {k: _number(v, f"geometry.{k}") for k, v in sec.items() if k != "axis"}
        if "axis" in sec:
            g["axis"] = _string(sec["axis"], "geometry.axis")
        kw["geometry"] = _build(CorridorGeometry, g, "geometry", top["geometry"])

    if "constraints" in top:
        sec = _mapping(top["constraints"], "constraints", _CONSTRAINT_KEYS)
        c = {k: _number(v, f"constraints.{k}") for k, v in sec.items()}
        kw["constraints"] = _build(ConstraintConfig, c, "constraints", top["constraints"])

    spawn_lines = []
    if "spawns" in top:
        node = top["spawns"]
        if isinstance(node, yaml.ScalarNode) and node.value in ("", "~", "null"):
            items = []
        elif not isinstance(node, yaml.SequenceNode):
            raise ScenarioError("spawns must be a list", _line(node))
        else:
            items = node.value
        spawns = []
        for k, item in enumerate(items):
            sec = _mapping(item, f"spawn {k}", _SPAWN_KEYS)
            missing = [key for key in _SPAWN_KEYS if key not in sec]
            if missing:
                raise ScenarioError(f"spawn {k} is missing {', '.join(missing)}", _line(item))
            spawns.append(Spawn(_number(sec["t0"], f"spawn {k} t0"),
                                _string(sec["route"], f"spawn {k} route"),
                                _number(sec["v0"], f"spawn {k} v0")))
            spawn_lines.append(_line(item))
        kw["spawns"] = tuple(spawns)

    if "baseline" in top:
        sec = _mapping(top["baseline"], "baseline", ("cycle", "gipps"))
        if "cycle" in sec:
            kw["cycle"] = _number(sec["cycle"], "baseline.cycle")
            if not kw["cycle"] > 0:
                raise ScenarioError("baseline.cycle must be positive", _line(sec["cycle"]))
        if "gipps" in sec:
            gs = _mapping(sec["gipps"], "baseline.gipps", _GIPPS_KEYS)
            gp = {k: _number(v, f"baseline.gipps.{k}") for k, v in gs.items()}
            kw["gipps"] = _build(GippsParams, gp, "baseline.gipps", sec["gipps"])

    if "run" in top:
        sec = _mapping(top["run"], "run", ("dt", "mode"))
        if "dt" in sec:
            kw["dt"] = _number(sec["dt"], "run.dt")
        if "mode" in sec:
            kw["mode"] = _string(sec["mode"], "run.mode")
            if kw["mode"] not in MODES:
                raise ScenarioError(f"run.mode must be one of {', '.join(MODES)}", _line(sec["mode"]))
        if "dt" in kw and not kw["dt"] > 0:
            raise ScenarioError("run.dt must be positive", _line(sec["dt"]))

    if "fuel" in top:
        kw["fuel"] = _parse_fuel(top["fuel"])

    try:
        return Scenario(**kw)
    except SpawnError as exc:
        raise ScenarioError(str(exc), spawn_lines[exc.index] if spawn_lines else None) from None
    except ScenarioError as exc:
        if exc.line is None:
            raise ScenarioError(str(exc), _line(root)) from None
        raise


def _parse_fuel(node) -> FuelModelCoefficients:
    sec = _mapping(node, "fuel", ("preset", "cruise", "accel", "name"))
    if "preset" in sec:
        if len(sec) > 1:
            raise ScenarioError("fuel: give either a preset or explicit coefficients", _line(node))
        name = _string(sec["preset"], "fuel.preset")
        if name not in FUEL_PRESETS:
            raise ScenarioError(f"unknown fuel preset {name!r}; known: {sorted(FUEL_PRESETS)}",
                                _line(sec["preset"]))
        return FUEL_PRESETS[name]
    for key in ("cruise", "accel"):
        if key not in sec or not isinstance(sec[key], yaml.SequenceNode):
            raise ScenarioError(f"fuel.{key} must be a list of numbers", _line(node))
    cruise = tuple(_number(n, "fuel.cruise entry") for n in sec["cruise"].value)
    accel = tuple(_number(n, "fuel.accel entry") for n in sec["accel"].value)
    name = _string(sec["name"], "fuel.name") if "name" in sec else "custom"
    return _build(FuelModelCoefficients, {"cruise": cruise, "accel": accel, "name": name}, "fuel", node)


def load_scenario(path_or_preset) -> Scenario:
    """Load a scenario file, or a built-in preset when given a preset name."""
    key = str(path_or_preset)
    if key in PRESETS and not Path(key).exists():
        return parse_scenario(PRESETS[key], source=f"preset {key}")
    path = Path(path_or_preset)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        return parse_scenario(text, source=str(path))
    except ScenarioError as exc:
        err = ScenarioError(f"{path}: {exc}")
        err.line = exc.line
        raise err from None


# ------------------------------------------------------------------- saving
def dump_scenario(sc: Scenario) -> str:
    g = sc.geometry
    doc = {
        "name": sc.name,
        "geometry": {"L": g.L, "D": g.D, "S1": g.S1, "S2": g.S2, "axis": g.axis},
        "constraints": asdict(sc.constraints),
        "spawns": [{"t0": s.t0, "route": s.route, "v0": s.v0} for s in sc.spawns],
        "baseline": {"cycle": sc.cycle, "gipps": asdict(sc.gipps)},
        "run": {"dt": sc.dt, "mode": sc.mode},
        "fuel": ({"preset": sc.fuel.name} if FUEL_PRESETS.get(sc.fuel.name) == sc.fuel else
                 {"name": sc.fuel.name, "cruise": list(sc.fuel.cruise), "accel": list(sc.fuel.accel)}),
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def save_scenario(sc: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(dump_scenario(sc), encoding="utf-8")
    return path


# ------------------------------------------------------------------ presets
_MCITY14_SPAWNS = [
    (0.0, "EB1", 12.0), (0.0, "WB1", 12.0), (1.0, "NB", 12.5), (4.0, "SB", 12.0),
    (6.0, "EB2", 11.5), (8.0, "EB1", 12.0), (11.0, "WB2", 12.0), (13.0, "NB", 12.0),
    (16.0, "WB1", 11.0), (19.0, "EB1", 12.5), (22.0, "SB", 11.5), (25.0, "EB2", 12.0),
    (28.0, "NB", 12.0), (31.0, "WB2", 11.5),
]


def _mcity14() -> str:
    lines = [
        "# Two-intersection corridor study: 14 vehicles on six routes",
        "# (5 eastbound, 4 westbound, 2 southbound, 3 northbound).",
        "# The first northbound vehicle is the ego vehicle.",
        "name: mcity14",
        "geometry: {L: 100.0, D: 150.0, S1: 18.0, S2: 34.0, axis: NS}",
        "constraints: {u_min: -3.0, u_max: 3.0, v_min: 1.0, v_max: 18.0, delta0: 10.0, h: 0.5, rho: 2.0}",
        "spawns:",
    ]
    lines += [f"- {{t0: {t}, route: {r}, v0: {v}}}" for t, r, v in _MCITY14_SPAWNS]
    lines += [
        "baseline:",
        "  cycle: 10.0",
        "  gipps: {desired_speed: 13.0, accel: 1.7, brake: -3.0, reaction: 0.7,"
        " leader_brake: -3.5, jam_spacing: 6.5}",
        "run: {dt: 0.05, mode: compare}",
        "fuel: {preset: kamal}",
    ]
    return "\n".join(lines) + "\n"


PRESETS = {"mcity14": _mcity14()}
EGO_ROUTE = {"mcity14": "NB"}


def ego_vehicle_id(sc: Scenario, preset: str = "mcity14") -> int:
    """Id of the first vehicle on the preset's ego route."""
    route = EGO_ROUTE[preset]
    for v in sc.vehicles():
        if v.route.id == route:
            return v.id
    raise KeyError(route)


# ------------------------------------------------------------------- tables
def fmt(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    s = FMT.format(x)
    return "0.000000000" if s == "-0.000000000" else s


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_trajectory_table(result, path) -> Path:
    path = Path(path)
    rows = []
    for vr in sorted(result.vehicles, key=lambda r: r.vehicle_id):
        for k in range(len(vr.t)):
            rows.append([vr.vehicle_id, fmt(vr.t[k]), fmt(vr.p[k]), fmt(vr.v[k]),
                         fmt(vr.u[k]), int(vr.zone_flag[k])])
    _write_csv(path, ["vehicle_id", "t", "p", "v", "u", "zone_flag"], rows)
    return path


def read_trajectory_table(path) -> dict[int, dict[str, np.ndarray]]:
    out: dict[int, dict[str, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            d = out.setdefault(int(row["vehicle_id"]), {k: [] for k in ("t", "p", "v", "u", "zone_flag")})
            for k in ("t", "p", "v", "u"):
                d[k].append(float(row[k]))
            d["zone_flag"].append(int(row["zone_flag"]))
    return {vid: {k: np.array(v) for k, v in d.items()} for vid, d in out.items()}


def write_schedule_table(result, path) -> Path:
    rows = [[r["vehicle_id"], r["route"], r["zone"], r["case"], fmt(r["t_merge"]),
             fmt(r["v_merge"]), fmt(r["t_exit_zone"])] for r in result.schedule]
    _write_csv(Path(path), ["vehicle_id", "route", "zone", "case", "t_merge", "v_merge", "t_exit_zone"], rows)
    return Path(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(fmt(x))
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def emit_plot_data(result, out_dir, coeffs: FuelModelCoefficients | None = None) -> list[Path]:
    """Per-vehicle position, speed, control and cumulative-fuel series."""
    from .metrics import cumulative_fuel

    coeffs = coeffs or result.scenario.fuel
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = {"position": ("p", []), "speed": ("v", []), "control": ("u", []), "fuel": ("fuel", [])}
    for vr in sorted(result.vehicles, key=lambda r: r.vehicle_id):
        cum = cumulative_fuel(vr.t, vr.v, vr.u, coeffs)
        cols = {"p": vr.p, "v": vr.v, "u": vr.u, "fuel": cum}
        for name, (col, rows) in series.items():
            rows.extend([vr.vehicle_id, fmt(vr.t[k]), fmt(cols[col][k])] for k in range(len(vr.t)))
    paths = []
    for name, (col, rows) in series.items():
        header = ["vehicle_id", "t", "cumulative_fuel_ml" if name == "fuel" else col]
        path = out_dir / f"{name}.csv"
        _write_csv(path, header, rows)
        paths.append(path)
    return paths


def default_out_dir() -> Path:
    return Path(os.environ.get("CORRIDOR_CAV_OUT", "corridor_cav_out"))
