"""Rule-based agent decisions on the occupancy grid.

Each generated agent picks its next cell and an active policy from local
occupancy: a lane change when triggered and the target neighbourhood is
clear, an overtake when a blocker sits within the observation range and a
free corridor exists next to it, and otherwise the lane-type default with
speed shaping on turn lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Optional

from .grid import FREE, CellRef, GridTopology, OccupancyLedger
from .mapmodel import LaneType


class PolicyKind(str, Enum):
    STRAIGHT = "straight"
    LEFT_TURN = "left_turn"
    RIGHT_TURN = "right_turn"
    LANE_CHANGE = "lane_change"
    OVERTAKE = "overtake"


# short labels used in reports, and label precedence (highest first)
SHORT_LABEL = {
    PolicyKind.STRAIGHT: "ST",
    PolicyKind.LEFT_TURN: "LT",
    PolicyKind.RIGHT_TURN: "RT",
    PolicyKind.LANE_CHANGE: "LC",
    PolicyKind.OVERTAKE: "OT",
}
LABEL_PRECEDENCE = (
    PolicyKind.OVERTAKE,
    PolicyKind.LANE_CHANGE,
    PolicyKind.LEFT_TURN,
    PolicyKind.RIGHT_TURN,
    PolicyKind.STRAIGHT,
)
LANE_POLICY = {
    LaneType.STRAIGHT: PolicyKind.STRAIGHT,
    LaneType.LEFT_TURN: PolicyKind.LEFT_TURN,
    LaneType.RIGHT_TURN: PolicyKind.RIGHT_TURN,
}


class _Terminal:
    def __repr__(self):
        return "TERMINAL"


TERMINAL = _Terminal()


@dataclass(frozen=True)
class DecisionParams:
    d_obs: float = 30.0
    safe_front: float = 10.0
    safe_rear: float = 8.0
    d_overtake: float = 20.0
    ds: float = 4.0
    f_left_min: float = 0.5
    f_right_min: float = 0.75

    def __post_init__(self):
        for name in ("d_obs", "safe_front", "safe_rear", "d_overtake", "ds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.f_left_min < self.f_right_min <= 1):
            raise ValueError("need 0 < f_left_min < f_right_min <= 1")

    @property
    def min_lane_change_length(self) -> float:
        return 2 * self.ds + self.safe_front

    @property
    def obs_cells(self) -> int:
        return int(self.d_obs // self.ds)


@dataclass
class AgentState:
    position: tuple
    speed: float
    heading: float

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        self.heading = math.atan2(math.sin(self.heading), math.cos(self.heading))


@dataclass
class GeneratedAgent:
    """A synthesized agent; ``cid`` mirrors ``cell`` as a dense grid id."""

    id: str
    state: AgentState
    cell: CellRef
    cid: int
    policy: PolicyKind = PolicyKind.STRAIGHT
    disposition: PolicyKind = PolicyKind.STRAIGHT
    trigger_time: int = 0
    desired_speed: float = 10.0
    entry_speed: float = 0.0
    maneuver_plan: List[int] = field(default_factory=list)
    executed: set = field(default_factory=set)
    lane_changes_done: int = 0
    lane_change_masked: bool = False
    transition_length: float = 18.0

    def move_to(self, cid: int, topology: GridTopology) -> None:
        self.cid = cid
        self.cell = topology.refs[cid]

    @property
    def executing(self) -> bool:
        return bool(self.maneuver_plan)

    def label(self) -> PolicyKind:
        for kind in LABEL_PRECEDENCE:
            if kind in self.executed:
                return kind
        return PolicyKind.STRAIGHT


class Decision(NamedTuple):
    cell: object  # CellRef, or TERMINAL
    policy: PolicyKind
    plan: tuple = ()


def turn_factor(alpha: float, f_min: float) -> float:
    alpha = min(max(alpha, 0.0), 1.0)
    if alpha == 0.0 or alpha == 1.0:
        return 1.0
    return 1.0 - (1.0 - f_min) * math.sin(math.pi * alpha)


def turn_speed(v0: float, alpha: float, lane_type, params: DecisionParams = DecisionParams()) -> float:
    """Entry speed shaped by progress on a turn lane; other lanes keep ``v0``."""
    lane_type = LaneType(lane_type)
    if lane_type is LaneType.LEFT_TURN:
        return v0 * turn_factor(alpha, params.f_left_min)
    if lane_type is LaneType.RIGHT_TURN:
        return v0 * turn_factor(alpha, params.f_right_min)
    return v0


def straight_speed(v: float) -> float:
    return v


def _successor_rank(topology: GridTopology, cid: int, prefer: PolicyKind) -> int:
    lane_type = topology.map.lane(topology.lane_of[cid]).lane_type
    kind = LANE_POLICY[lane_type]
    if kind == prefer:
        return 0
    return 1 if kind == PolicyKind.STRAIGHT else 2


def next_on_route(topology: GridTopology, cid: int, disposition: PolicyKind = PolicyKind.STRAIGHT) -> int:
    """Next cell along an agent's route, or -1 at a dead end.

    Turn-disposed agents take a successor of their turn type when one
    exists; everyone else continues straight and stops at lanes that only
    lead into turns.
    """
    f = topology.forward[cid]
    if f >= 0:
        return f
    succ = topology.successors[cid]
    if not succ:
        return -1
    prefer = disposition if disposition in (PolicyKind.LEFT_TURN, PolicyKind.RIGHT_TURN) else PolicyKind.STRAIGHT
    best = min(succ, key=lambda c: (_successor_rank(topology, c, prefer), topology.lane_of[c]))
    if _successor_rank(topology, best, prefer) == 2 and prefer == PolicyKind.STRAIGHT:
        return -1
    return best


def route_cells(topology: GridTopology, cid: int, count: int, disposition=PolicyKind.STRAIGHT) -> list:
    out = []
    for _ in range(count):
        cid = next_on_route(topology, cid, disposition)
        if cid < 0:
            break
        out.append(cid)
    return out


def _remaining_after(topology: GridTopology, cid: int) -> float:
    lane = topology.map.lane(topology.lane_of[cid])
    cell = topology.cell(topology.refs[cid])
    return lane.length - (cell.s_start + cell.length)


def lane_change_feasible(
    agent: GeneratedAgent,
    ledger: OccupancyLedger,
    topology: GridTopology,
    tick: int,
    params: DecisionParams,
    required_length: Optional[float] = None,
) -> Optional[CellRef]:
    """Target cell ``(l', j+1)`` of a lane change, or None when infeasible.

    The neighbourhood ``(l', j-1..j+1)`` must be free and lane ``l'`` must
    extend beyond index ``j`` by at least the completion length.
    """
    need = params.min_lane_change_length if required_length is None else max(
        required_length, params.min_lane_change_length
    )
    cid = agent.cid
    for side in (topology.left[cid], topology.right[cid]):
        if side < 0:
            continue
        target = topology.forward[side]
        if target < 0:
            continue
        window = [side, target]
        if topology.index_of[side] > 0:
            window.append(side - 1)
        if any(not ledger.is_free(c, ignore=agent.id) for c in window):
            continue
        if _remaining_after(topology, side) < need:
            continue
        return topology.refs[target]
    return None


def find_blocker(agent: GeneratedAgent, ledger: OccupancyLedger, topology: GridTopology, params: DecisionParams):
    """Index offset ``k`` of the nearest occupied cell ahead in the agent's lane."""
    cid = agent.cid
    for k in range(1, params.obs_cells + 1):
        cid = topology.forward[cid]
        if cid < 0:
            return None
        if not ledger.is_free(cid, ignore=agent.id):
            return k
    return None


def overtake_plan_length(k: int, params: DecisionParams, transition_length: float) -> int:
    """Return offset ``k'``: long enough for the corridor, both transitions and the rear gap."""
    p = max(math.ceil(params.d_overtake / params.ds), math.ceil(transition_length / params.ds))
    return max(p + 1, k + 1 + math.ceil(params.safe_rear / params.ds))


def lane_gaps(ledger: OccupancyLedger, topology: GridTopology, side: int, agent_id) -> tuple:
    """Free-run length and gaps ahead/behind of cell ``side`` in its lane."""
    lid = topology.lane_of[side]
    base = topology.lane_start[lid]
    n = topology.cell_count(lid)
    j = side - base
    ahead = math.inf
    for i in range(j, n):
        if not ledger.is_free(base + i, ignore=agent_id):
            ahead = (i - j) * topology.ds
            break
    behind = math.inf
    for i in range(j - 1, -1, -1):
        if not ledger.is_free(base + i, ignore=agent_id):
            behind = (j - i) * topology.ds
            break
    m = 0
    for i in range(j, n):
        if not ledger.is_free(base + i, ignore=agent_id):
            break
        m += 1
    return m, ahead, behind


def overtake_feasible(
    agent: GeneratedAgent,
    ledger: OccupancyLedger,
    topology: GridTopology,
    tick: int,
    params: DecisionParams,
    blocker_offset: Optional[int] = None,
) -> Optional[list]:
    """Enter-pass-return plan as a list of cell refs, or None.

    Conditions: an adjacent same-direction lane whose aligned cell is free,
    safe gaps ahead and behind in that lane, and a run of ``m`` free cells
    with ``m * ds >= d_overtake`` that covers the whole pass.
    """
    k = blocker_offset if blocker_offset is not None else find_blocker(agent, ledger, topology, params)
    if k is None:
        return None
    cid = agent.cid
    lid = topology.lane_of[cid]
    j = topology.index_of[cid]
    k_ret = overtake_plan_length(k, params, agent.transition_length)
    n_own = topology.cell_count(lid)
    if j + k_ret >= n_own:
        return None
    lane = topology.map.lane(lid)
    ret_cell = topology.cell(CellRef(lid, j + k_ret))
    if lane.length - ret_cell.s_center < agent.transition_length:
        return None
    for side in (topology.left[cid], topology.right[cid]):
        if side < 0:
            continue
        m, ahead, behind = lane_gaps(ledger, topology, side, agent.id)
        if m == 0:
            continue
        if ahead < params.safe_front or behind < params.safe_rear:
            continue
        if m * params.ds < params.d_overtake or m < k_ret:
            continue
        if topology.index_of[side] + k_ret - 1 >= topology.cell_count(topology.lane_of[side]):
            continue
        plan = [topology.refs[side + i] for i in range(1, k_ret)]
        plan.append(CellRef(lid, j + k_ret))
        return plan
    return None


def decide(
    agent: GeneratedAgent,
    ledger: OccupancyLedger,
    topology: GridTopology,
    tick: int,
    params: DecisionParams,
    allow_lane_change: bool = True,
    required_length: Optional[float] = None,
) -> Decision:
    """Next cell and active policy for one agent.

    Priority: an ongoing maneuver plan, then the lane-change branch, then
    overtake evaluation, then the lane-type default.
    """
    if agent.maneuver_plan:
        plan = tuple(topology.refs[c] for c in agent.maneuver_plan)
        return Decision(plan[0], agent.policy, plan)
    lc_ok = allow_lane_change and not agent.lane_change_masked
    if lc_ok and agent.disposition == PolicyKind.LANE_CHANGE and agent.lane_changes_done == 0 and tick >= agent.trigger_time:
        target = lane_change_feasible(agent, ledger, topology, tick, params, required_length)
        if target is not None:
            return Decision(target, PolicyKind.LANE_CHANGE)
    if lc_ok and agent.disposition == PolicyKind.OVERTAKE and agent.lane_changes_done == 0:
        k = find_blocker(agent, ledger, topology, params)
        if k is not None:
            plan = overtake_feasible(agent, ledger, topology, tick, params, k)
            if plan is not None:
                return Decision(plan[0], PolicyKind.OVERTAKE, tuple(plan))
    nxt = next_on_route(topology, agent.cid, agent.disposition)
    if nxt < 0:
        return Decision(TERMINAL, agent.policy)
    kind = LANE_POLICY[topology.map.lane(topology.lane_of[nxt]).lane_type]
    return Decision(topology.refs[nxt], kind)
