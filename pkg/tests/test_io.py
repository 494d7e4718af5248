import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _streams import random_stream
from corridor_cav.errors import ScenarioError
from corridor_cav.geometry import ConstraintConfig, CorridorGeometry
from corridor_cav.metrics import FuelModelCoefficients
from corridor_cav.scenario_io import (
    dump_scenario,
    ego_vehicle_id,
    emit_plot_data,
    load_scenario,
    parse_scenario,
    read_trajectory_table,
    save_scenario,
    write_trajectory_table,
)
from corridor_cav.sim import GippsParams, Scenario, run_baseline, run_optimized


def test_mcity14_preset():
    sc = load_scenario("mcity14")
    assert len(sc.spawns) == 14
    routes = [s.route for s in sc.spawns]
    assert len(set(routes)) == 6
    east = sum(r.startswith("EB") for r in routes)
    west = sum(r.startswith("WB") for r in routes)
    assert (east, west, routes.count("SB"), routes.count("NB")) == (5, 4, 2, 3)
    assert {r for r in routes if r.startswith("EB")} == {"EB1", "EB2"}
    assert (sc.geometry.S1, sc.geometry.S2, sc.geometry.L) == (18.0, 34.0, 100.0)
    assert ego_vehicle_id(sc) == 3


def test_empty_spawn_list():
    sc = parse_scenario("spawns: []\n")
    assert sc.spawns == ()
    assert run_optimized(sc).vehicles == []


def test_speed_above_limit_names_spawn():
    text = "constraints: {v_max: 15.0}\nspawns:\n- {t0: 0, route: EB, v0: 12}\n- {t0: 5, route: WB, v0: 16}\n"
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.line == 4
    assert "spawn 1" in str(err.value) and "v0=16" in str(err.value)


@pytest.mark.parametrize("text, line", [
    ("geometry:\n  L: 100\n  Q: 3\n", 3),
    ("run: {dt: 0.05}\nextra: 1\n", 2),
    ("spawns:\n- {t0: 0, route: EB}\n", 2),
    ("spawns:\n- {t0: 0, route: EB, v0: fast}\n", 2),
    ("run:\n  mode: turbo\n", 2),
    ("geometry: {L: -1}\n", 1),
    ("baseline:\n  gipps: {brake: 1.0}\n", 2),
    ("fuel: {preset: none}\n", 1),
    ("geometry: [1, 2\n", 2),
])
def test_line_anchored_errors(text, line):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError) as err:
        load_scenario(tmp_path / "nope.yaml")
    assert "nope.yaml" in str(err.value)


def test_error_in_file_carries_path_and_line(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("name: x\nrun: {dt: -1}\n")
    with pytest.raises(ScenarioError) as err:
        load_scenario(path)
    assert err.value.line == 2 and str(path) in str(err.value)


finite = dict(allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    axis=st.sampled_from(["EW", "NS"]),
    L=st.floats(60.0, 200.0, **finite),
    dt=st.floats(0.01, 0.2, **finite),
    cycle=st.floats(5.0, 30.0, **finite),
    delta0=st.floats(5.0, 12.0, **finite),
    name=st.text("abcxyz_-", max_size=8),
    custom_fuel=st.booleans(),
)
def test_round_trip(seed, axis, L, dt, cycle, delta0, name, custom_fuel):
    base = random_stream(seed, axis=axis, n_max=8)
    kw = {}
    if custom_fuel:
        kw["fuel"] = FuelModelCoefficients((0.2, 0.01, 0.0, 1e-5), (0.1, 0.05, 0.001), name="mine")
    sc = Scenario(CorridorGeometry(L=L, axis=axis), ConstraintConfig(delta0=delta0),
                  base.spawns, dt=dt, cycle=cycle, gipps=GippsParams(reaction=0.9),
                  mode="optimized", name=name, **kw)
    assert parse_scenario(dump_scenario(sc)) == sc


def test_save_and_load(tmp_path):
    sc = load_scenario("mcity14")
    path = save_scenario(sc, tmp_path / "m.yaml")
    assert load_scenario(path) == sc


def test_trajectory_table_round_trip(tmp_path):
    res = run_optimized(load_scenario("mcity14"))
    path = write_trajectory_table(res, tmp_path / "traj.csv")
    back = read_trajectory_table(path)
    assert sorted(back) == [vr.vehicle_id for vr in res.vehicles]
    for vr in res.vehicles:
        d = back[vr.vehicle_id]
        for k in ("t", "p", "v", "u"):
            np.testing.assert_allclose(d[k], getattr(vr, k), rtol=0, atol=1e-9)
        assert np.array_equal(d["zone_flag"], vr.zone_flag)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["vehicle_id", "t", "p", "v", "u", "zone_flag"]
    keys = [(int(r[0]), float(r[1])) for r in rows[1:]]
    assert keys == sorted(keys)
    assert all(len(r[1].split(".")[1]) == 9 for r in rows[1:50])


def test_plot_data_for_empty_result(tmp_path):
    paths = emit_plot_data(run_baseline(Scenario()), tmp_path)
    assert sorted(p.name for p in paths) == ["control.csv", "fuel.csv", "position.csv", "speed.csv"]
    for p in paths:
        lines = p.read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("vehicle_id,t,")


def test_plot_data_ego_vehicle(tmp_path):
    sc = load_scenario("mcity14")
    res = run_optimized(sc)
    emit_plot_data(res, tmp_path)
    ego = ego_vehicle_id(sc)
    vr = res.vehicle(ego)
    route = sc.geometry.route(vr.route)
    with open(tmp_path / "position.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if int(r["vehicle_id"]) == ego]
    t = np.array([float(r["t"]) for r in rows])
    p = np.array([float(r["p"]) for r in rows])
    for z, L_z in zip(route.zones, route.zone_entry):
        k = int(np.argmin(np.abs(t - vr.merge_times[z])))
        assert p[k] == pytest.approx(L_z, abs=1e-8)
    with open(tmp_path / "fuel.csv") as fh:
        fuel = [float(r["cumulative_fuel_ml"]) for r in csv.DictReader(fh) if int(r["vehicle_id"]) == ego]
    assert np.all(np.diff(fuel) >= 0)
