import pytest

from scenegrid.grid import GENERATED, CellRef, OccupancyLedger, build_grid
from scenegrid.mapmodel import LaneType
from scenegrid.policy import (
    TERMINAL,
    AgentState,
    DecisionParams,
    GeneratedAgent,
    PolicyKind,
    decide,
    lane_change_feasible,
    lane_gaps,
    overtake_feasible,
    straight_speed,
    turn_speed,
)

from conftest import straight_map

P = DecisionParams()


def make_agent(topo, ref, disposition=PolicyKind.STRAIGHT, trigger=0, aid="me"):
    cid = topo.cell_id(ref)
    return GeneratedAgent(aid, AgentState(topo.center[cid], 8.0, 0.0), ref, cid,
                          disposition=disposition, trigger_time=trigger)


@pytest.fixture
def two_lanes():
    topo = build_grid(straight_map(120.0, lanes=2))
    return topo, OccupancyLedger(topo)


def test_lane_change_when_triggered(two_lanes):
    topo, ledger = two_lanes
    me = make_agent(topo, CellRef("L0", 5), PolicyKind.LANE_CHANGE, trigger=10)
    ledger.try_claim(me.cid, 0, me.id, GENERATED)
    d = decide(me, ledger, topo, 10, P)
    assert d.cell == CellRef("L1", 6) and d.policy == PolicyKind.LANE_CHANGE


def test_straight_before_trigger(two_lanes):
    topo, ledger = two_lanes
    me = make_agent(topo, CellRef("L0", 5), PolicyKind.LANE_CHANGE, trigger=10)
    d = decide(me, ledger, topo, 9, P)
    assert d.cell == CellRef("L0", 6) and d.policy == PolicyKind.STRAIGHT


def test_lane_change_needs_free_neighbourhood(two_lanes):
    topo, ledger = two_lanes
    me = make_agent(topo, CellRef("L0", 5))
    assert lane_change_feasible(me, ledger, topo, 0, P) == CellRef("L1", 6)
    ledger.try_claim(CellRef("L1", 4), 0, "other", GENERATED)
    assert lane_change_feasible(me, ledger, topo, 0, P) is None


def test_lane_change_needs_room_in_target_lane():
    topo = build_grid(straight_map(40.0, lanes=2))
    ledger = OccupancyLedger(topo)
    assert P.min_lane_change_length == 18.0
    # after cell 8 only 4 m of the target lane remain
    me = make_agent(topo, CellRef("L0", 8))
    assert lane_change_feasible(me, ledger, topo, 0, P) is None
    # after cell 4, 20 m remain
    assert lane_change_feasible(make_agent(topo, CellRef("L0", 4)), ledger, topo, 0, P) == CellRef("L1", 5)


def test_overtake_plan(two_lanes):
    topo, ledger = two_lanes
    me = make_agent(topo, CellRef("L0", 5), PolicyKind.OVERTAKE)
    ledger.try_claim(me.cid, 0, me.id, GENERATED)
    ledger.try_claim(CellRef("L0", 6), 0, "slow", GENERATED)
    d = decide(me, ledger, topo, 0, P)
    assert d.policy == PolicyKind.OVERTAKE
    assert len(d.plan) >= 5
    ret = d.plan[-1]
    assert ret.lane == "L0" and ret.index - 5 > 1
    assert all(c.lane == "L1" for c in d.plan[:-1])
    assert d.cell == d.plan[0] == CellRef("L1", 6)


def test_overtake_corridor_too_short():
    # the side lane has four free cells ahead of the aligned one: 16 m < 20 m
    topo = build_grid(straight_map(120.0, lanes=2))
    ledger = OccupancyLedger(topo)
    me = make_agent(topo, CellRef("L0", 5), PolicyKind.OVERTAKE)
    ledger.try_claim(CellRef("L0", 6), 0, "slow", GENERATED)
    ledger.try_claim(CellRef("L1", 9), 0, "wall", GENERATED)
    m, ahead, _ = lane_gaps(ledger, topo, topo.cell_id(CellRef("L1", 5)), me.id)
    assert m == 4 and m * P.ds < P.d_overtake
    assert overtake_feasible(me, ledger, topo, 0, P) is None


def test_overtake_rear_gap():
    topo = build_grid(straight_map(120.0, lanes=2))
    ledger = OccupancyLedger(topo)
    me = make_agent(topo, CellRef("L0", 5), PolicyKind.OVERTAKE)
    ledger.try_claim(CellRef("L0", 6), 0, "slow", GENERATED)
    ledger.try_claim(CellRef("L1", 4), 0, "behind", GENERATED)
    # oracle: distance back to the nearest occupied cell in the side lane
    side = topo.cell_id(CellRef("L1", 5))
    occupied = [j for j in range(topo.cell_count("L1")) if not ledger.is_free(topo.lane_start["L1"] + j)]
    behind = min((5 - j) * topo.ds for j in occupied if j < 5)
    assert behind == 4.0 < P.safe_rear
    assert lane_gaps(ledger, topo, side, me.id)[2] == behind
    assert overtake_feasible(me, ledger, topo, 0, P) is None


def test_terminal_at_lane_end():
    topo = build_grid(straight_map(40.0))
    me = make_agent(topo, CellRef("L0", 9))
    assert decide(me, OccupancyLedger(topo), topo, 0, P).cell is TERMINAL


def test_turn_speed_shaping():
    assert turn_speed(10, 0.0, LaneType.LEFT_TURN) == 10.0
    assert turn_speed(10, 0.5, LaneType.LEFT_TURN) == pytest.approx(5.0)
    right = turn_speed(10, 0.5, LaneType.RIGHT_TURN)
    assert right == pytest.approx(7.5) and right > turn_speed(10, 0.5, LaneType.LEFT_TURN)
    assert turn_speed(10, 1.7, LaneType.LEFT_TURN) == 10.0  # clamped to the lane end
    assert turn_speed(10, 0.5, LaneType.STRAIGHT) == 10.0


@pytest.mark.parametrize("v", [8.0, 0.0, 31.4])
def test_straight_speed_identity(v):
    assert straight_speed(v) == v


def test_param_validation():
    with pytest.raises(ValueError):
        DecisionParams(d_obs=0)
    with pytest.raises(ValueError):
        DecisionParams(f_left_min=0.9, f_right_min=0.8)
