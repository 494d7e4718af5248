import math

import pytest

from corridor_cav.coordination import (
    Case,
    Coordinator,
    MergeQueue,
    QueueEntry,
    theorem1_merge_time,
    throughput_objective,
    unconstrained_merge_time,
)
from corridor_cav.errors import DomainError, SchedulingError
from corridor_cav.geometry import ConstraintConfig, CorridorGeometry, Relation, Vehicle, headway

G = CorridorGeometry()
CFG = ConstraintConfig()


def entry(vid, route, t, v, S=18.0, case=Case.FIRST):
    return QueueEntry.crossing(vid, G.route(route), t, v, S, case)


def test_unconstrained_merge_time():
    assert unconstrained_merge_time(Vehicle(1, G.route("NB1"), 0.0, 10.0), 1) == 10.0
    assert unconstrained_merge_time(Vehicle(1, G.route("EB"), 5.0, 13.4), 2) == pytest.approx(25.0)
    with pytest.raises(DomainError):
        unconstrained_merge_time(Vehicle(1, G.route("EB"), 0.0, 0.0), 1)


def test_theorem1_same_lane():
    k = entry(1, "EB", 10.0, 12.0)
    cfg = ConstraintConfig(delta0=12.0, h=0.5)  # headway 18 m at 12 m/s
    assert headway(12.0, cfg) == 18.0
    assert theorem1_merge_time(Relation.SAME_LANE, k, k, cfg) == pytest.approx(11.5)


def test_theorem1_conflicting():
    pred = entry(1, "NB1", 10.0, 10.0)
    assert theorem1_merge_time(Relation.CONFLICTING, pred, None, CFG) == pytest.approx(11.8)


def test_theorem1_opposite_allows_simultaneous_entry():
    pred = entry(1, "WB", 10.0, 10.0)
    assert theorem1_merge_time(Relation.OPPOSITE, pred, None, CFG) == 10.0


def test_theorem1_errors():
    with pytest.raises(SchedulingError):
        theorem1_merge_time(Relation.CONFLICTING, None, None, CFG)
    stalled = QueueEntry(1, G.route("NB1"), 10.0, 0.0, math.inf)
    with pytest.raises(SchedulingError):
        theorem1_merge_time(Relation.CONFLICTING, stalled, None, CFG)


def test_throughput_objective():
    q1, q2 = MergeQueue(1), MergeQueue(2)
    for k, t in enumerate((10.0, 11.5, 11.8), start=1):
        q1.insert(entry(k, "EB", t, 12.0))
    q2.insert(entry(9, "NB2", 5.0, 12.0, S=34.0))
    assert throughput_objective([q1, q2]) == pytest.approx(1.8)
    assert throughput_objective([MergeQueue(1)]) == 0.0


def test_queue_insert_keeps_order():
    q = MergeQueue(1)
    for vid, t in ((1, 12.0), (2, 9.0), (3, 15.0), (4, 10.0)):
        q.insert(entry(vid, "EB", t, 12.0))
    assert q.ids() == [2, 4, 1, 3] and q.is_ordered()
    with pytest.raises(SchedulingError):
        q.insert(entry(1, "EB", 20.0, 12.0))
    with pytest.raises(SchedulingError):
        q.insert(entry(8, "NB2", 20.0, 12.0))


def test_first_vehicle_is_free():
    co = Coordinator(G, CFG)
    s = co.schedule_arrival(Vehicle(1, G.route("EB"), 0.0, 12.0))
    assert s.slots[1].t_merge == pytest.approx(100.0 / 12.0)
    assert s.slots[2].t_merge == pytest.approx(268.0 / 12.0)
    assert s.feasible and s.slots[1].case is Case.FIRST


def test_fast_arrival_reorders_queue():
    co = Coordinator(G, CFG)
    co.schedule_arrival(Vehicle(1, G.route("NB1"), 0.0, 5.0))
    s = co.schedule_arrival(Vehicle(2, G.route("EB"), 1.0, 15.0))
    assert s.slots[1].case is Case.REORDER
    assert s.slots[1].t_merge == pytest.approx(1.0 + 100.0 / 15.0)
    assert co.queues[1].ids() == [2, 1]
    assert co.queues[1].is_ordered()
    assert any("inserted ahead" in e for e in co.events)


def test_conflict_within_rho_keeps_order():
    co = Coordinator(G, CFG)
    co.schedule_arrival(Vehicle(1, G.route("NB1"), 0.0, 10.0))
    s = co.schedule_arrival(Vehicle(2, G.route("EB"), 0.5, 10.5))
    assert s.slots[1].case is Case.CONFLICTING
    assert s.slots[1].t_merge == pytest.approx(11.8)
    assert co.queues[1].ids() == [1, 2]


def test_same_lane_follower_keeps_headway():
    co = Coordinator(G, CFG)
    co.schedule_arrival(Vehicle(1, G.route("EB"), 0.0, 12.0))
    s = co.schedule_arrival(Vehicle(2, G.route("EB"), 2.0, 12.0))
    lead = co.schedules[1].slots[1]
    assert s.slots[1].t_merge >= lead.t_merge + headway(lead.v_merge, CFG) / lead.v_merge - 1e-9


def test_opposite_pair_same_merge_time():
    co = Coordinator(G, CFG)
    a = co.schedule_arrival(Vehicle(1, G.route("EB"), 0.0, 12.0))
    b = co.schedule_arrival(Vehicle(2, G.route("WB"), 0.0, 12.0))
    assert a.slots[1].t_merge == b.slots[2].t_merge


def test_arrivals_must_be_in_order():
    co = Coordinator(G, CFG)
    co.schedule_arrival(Vehicle(1, G.route("EB"), 5.0, 12.0))
    with pytest.raises(SchedulingError):
        co.schedule_arrival(Vehicle(2, G.route("WB"), 1.0, 12.0))
    with pytest.raises(SchedulingError):
        co.schedule_arrival(Vehicle(1, G.route("WB"), 6.0, 12.0))


def test_schedule_table_rows():
    co = Coordinator(G, CFG)
    co.schedule_arrival(Vehicle(1, G.route("EB"), 0.0, 12.0))
    co.schedule_arrival(Vehicle(2, G.route("NB2"), 1.0, 11.0))
    rows = co.schedule_table()
    assert [(r["vehicle_id"], r["zone"]) for r in rows] == [(1, 1), (1, 2), (2, 2)]
    assert set(rows[0]) == {"vehicle_id", "route", "zone", "case", "t_merge", "v_merge", "t_exit_zone"}
