"""Scenario synthesis: spawning, dwell-time stepping and conflict resolution.

The engine moves generated agents cell by cell. An agent that reaches a
cell centre asks the policy for its next cell, then claims it in the
occupancy ledger. Claims of one tick are resolved in priority order:
cells held or about to be held by recorded agents are refused, contested
cells go to executing maneuvers before pending ones and to closer claimants
before farther ones, and a granted move whose predicted track intersects
another agent's committed track is deferred for one dwell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from . import kernels
from .frenet import FeasibilityLimits, smoothstep
from .grid import GENERATED, ORIGINAL, GridTopology, OccupancyLedger, build_grid, map_original_agents
from .mapmodel import LaneType, MapModel
from .policy import (
    LANE_POLICY,
    TERMINAL,
    AgentState,
    DecisionParams,
    GeneratedAgent,
    PolicyKind,
    decide,
    next_on_route,
    turn_speed,
)

DEFAULT_MIX = {
    "straight": 0.4,
    "left_turn": 0.15,
    "right_turn": 0.15,
    "lane_change": 0.15,
    "overtake": 0.15,
}


class _Hold:
    def __repr__(self):
        return "HOLD"


HOLD = _Hold()


@dataclass
class SimConfig:
    dt: float = 0.1
    horizon: int = 110
    seed: int = 0
    n_generated: int = 20
    speed_range: tuple = (5.0, 12.0)
    behavior_mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    prediction_horizon: int = 30
    disable_topology: bool = False
    disable_collision: bool = False
    disable_smoothing: bool = False
    ds: float = 4.0
    spawn_spacing: int = 2
    headway_cells: int = 2
    max_deferrals: int = 3
    min_transition_time: float = 3.5
    max_accel: float = 2.0
    comfort_decel: float = 2.0
    turn_ay_fraction: float = 0.55
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0
    prediction_margin: float = 1.0
    original_clearance: float = 1.5  # s a cell must stay clear of recorded agents after it is vacated

    def validate(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_generated < 0:
            raise ValueError("n_generated must be non-negative")
        lo, hi = self.speed_range
        if not (0 < lo <= hi):
            raise ValueError("speed_range must satisfy 0 < v_min <= v_max")
        unknown = set(self.behavior_mix) - {k.value for k in PolicyKind}
        if unknown:
            raise ValueError(f"unknown behavior_mix keys: {sorted(unknown)}")
        if any(v < 0 for v in self.behavior_mix.values()):
            raise ValueError("behavior_mix fractions must be non-negative")
        if abs(sum(self.behavior_mix.values()) - 1.0) > 1e-9:
            raise ValueError("behavior_mix fractions must sum to 1")
        if self.prediction_horizon < 1 or self.max_deferrals < 1:
            raise ValueError("prediction_horizon and max_deferrals must be at least 1")
        if self.ds <= 0 or self.spawn_spacing < 1 or self.headway_cells < 0:
            raise ValueError("invalid grid spacing settings")
        if self.original_clearance < 0:
            raise ValueError("original_clearance must be non-negative")


def dwell_steps(distance: float, v: float, dt: float):
    """Ticks needed to cover ``distance`` at speed ``v``; ``HOLD`` when stopped."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if v <= 1e-9:
        return HOLD
    # round away float noise such as 4 / 8 / 0.1 = 5.000000000000001
    return max(1, math.ceil(round(distance / v / dt, 9)))


class Knot(NamedTuple):
    tick: int
    xy: np.ndarray
    cid: int
    center: bool


class LateralEvent(NamedTuple):
    tick: int
    from_cid: int
    to_cid: int
    length: float


@dataclass
class AgentLog:
    agent_id: str
    kind: str
    label: str = "straight"
    ticks: list = field(default_factory=list)
    xy: list = field(default_factory=list)
    speed: list = field(default_factory=list)
    heading: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    knots: list = field(default_factory=list)
    lateral: list = field(default_factory=list)

    def record(self, tick, xy, speed, heading, cid):
        self.ticks.append(tick)
        self.xy.append((float(xy[0]), float(xy[1])))
        self.speed.append(float(speed))
        self.heading.append(float(heading))
        self.cells.append(cid)

    def raw_samples(self, dt: float) -> np.ndarray:
        if not self.ticks:
            return np.empty((0, 5))
        out = np.empty((len(self.ticks), 5))
        out[:, 0] = np.asarray(self.ticks) * dt
        out[:, 1:3] = np.asarray(self.xy)
        out[:, 3] = self.speed
        out[:, 4] = self.heading
        return out


@dataclass
class TrajectoryLog:
    agents: Dict[str, AgentLog] = field(default_factory=dict)

    def co_occupancy_events(self, generated_only: bool = True) -> int:
        """Count (tick, cell) pairs held by more than one agent."""
        seen: Dict[tuple, int] = {}
        for log in self.agents.values():
            if generated_only and log.kind != "generated":
                continue
            for tick, cid in zip(log.ticks, log.cells):
                if cid is not None and cid >= 0:
                    seen[(tick, cid)] = seen.get((tick, cid), 0) + 1
        return sum(1 for c in seen.values() if c > 1)


@dataclass
class ScenarioStats:
    requested: int = 0
    placed: int = 0
    shortfall: int = 0
    dispositions: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    rejected_original: int = 0
    rejected_occupied: int = 0
    rejected_headway: int = 0
    rejected_horizon: int = 0
    deferrals: int = 0
    reroutes: int = 0
    evictions: int = 0
    retired: int = 0
    drifted: int = 0
    originals: int = 0
    originals_skipped: int = 0

    def as_dict(self) -> dict:
        return {k: (dict(sorted(v.items())) if isinstance(v, dict) else v) for k, v in self.__dict__.items()}


class _Originals:
    """Recorded agents: replayed tracks, their cell schedule and future boxes."""

    def __init__(self, tracks: dict, topology: GridTopology, config: SimConfig):
        self.tracks = {str(k): np.asarray(v, dtype=float) for k, v in (tracks or {}).items()}
        self.ids = sorted(self.tracks)
        span = config.horizon + 2 * config.prediction_horizon + 2
        self.span = span
        self.pose = np.full((len(self.ids), span, 3), np.nan)
        self.speed = np.zeros((len(self.ids), span))
        for i, aid in enumerate(self.ids):
            rows = self.tracks[aid]
            ticks = np.round(rows[:, 0] / config.dt).astype(int)
            ok = (ticks >= 0) & (ticks < span)
            self.pose[i, ticks[ok], 0:2] = rows[ok, 1:3]
            self.pose[i, ticks[ok], 2] = rows[ok, 4]
            self.speed[i, ticks[ok]] = rows[ok, 3]
        self.schedule: List[Dict[int, str]] = []
        self.skipped = 0
        for t in range(span):
            assignment, skipped = map_original_agents(topology, self.tracks, t, dt=config.dt) if self.ids else ({}, 0)
            self.schedule.append({cid: aid for aid, cid in assignment.items()})
            if t == 0:
                self.skipped = skipped
        self.cell_at = [{aid: cid for cid, aid in occ.items()} for occ in self.schedule]
        # cells within one step of a recorded agent; a box there already overlaps it
        behind = {}
        for c in range(len(topology)):
            for nxt in topology.next_cells(c):
                behind.setdefault(nxt, []).append(c)
        self.near: List[set] = []
        for occ in self.schedule:
            cells = set()
            for cid in occ:
                cells.add(cid)
                cells.update(topology.next_cells(cid))
                cells.update(behind.get(cid, ()))
            self.near.append(cells)

    def occupied(self, cid: int, t0: int, t1: int) -> bool:
        for t in range(max(t0, 0), min(t1, self.span - 1) + 1):
            if cid in self.schedule[t]:
                return True
        return False

    def crowded(self, cid: int, t0: int, t1: int) -> bool:
        """True if a recorded agent is in or next to ``cid`` at any tick of [t0, t1]."""
        for t in range(max(t0, 0), min(t1, self.span - 1) + 1):
            if cid in self.near[t]:
                return True
        return False

    def speed_of(self, aid: str, t: int) -> float:
        i = self.ids.index(aid)
        return float(self.speed[i, min(t, self.span - 1)])


@dataclass
class _Runtime:
    """Engine-side motion state of one generated agent."""

    start_xy: np.ndarray
    end_xy: np.ndarray
    t_start: int = 0
    n: int = 0
    speed: float = 0.0
    heading: float = 0.0
    prev_cid: int = -1
    deferrals: int = 0
    odo: float = 0.0
    window: Optional[tuple] = None  # (odo at departure, length, signed offset)
    pred_start: int = 0
    pred: Optional[np.ndarray] = None
    route_set: frozenset = frozenset()
    drifting: bool = False
    retired: bool = False
    moving: bool = False
    at_center: bool = True

    def position(self, t: int) -> np.ndarray:
        if self.n <= 0:
            return self.end_xy
        f = min(max((t - self.t_start) / self.n, 0.0), 1.0)
        return self.start_xy + f * (self.end_xy - self.start_xy)

    def ready(self, t: int) -> bool:
        return t - self.t_start >= self.n


class Claim(NamedTuple):
    agent: GeneratedAgent
    target: int
    policy: PolicyKind
    plan: tuple
    executing: bool
    distance: float

    def priority(self):
        return (0 if self.executing else 1, self.distance, self.agent.id)


@dataclass
class ScenarioState:
    tick: int
    ledger: OccupancyLedger
    agents: Dict[str, GeneratedAgent]
    originals: dict
    retired: set
    engine: "Engine" = None


class Engine:
    """Tick loop for one scenario."""

    def __init__(self, map_model: MapModel, originals: Optional[dict], config: SimConfig,
                 params: DecisionParams = DecisionParams(), limits: FeasibilityLimits = FeasibilityLimits()):
        config.validate()
        self.map = map_model
        self.config = config
        self.params = params
        self.limits = limits
        self.topology = build_grid(map_model, config.ds, use_topology=not config.disable_topology)
        self.exclusive = not config.disable_collision
        self.ledger = OccupancyLedger(self.topology, exclusive=self.exclusive)
        self.rng = np.random.default_rng(config.seed)
        self.orig = _Originals(originals, self.topology, config)
        self.orig_guard = int(round(config.original_clearance / config.dt))
        self.stats = ScenarioStats(originals=len(self.orig.ids), originals_skipped=self.orig.skipped)
        self.log = TrajectoryLog()
        self.agents: Dict[str, GeneratedAgent] = {}
        self.rt: Dict[str, _Runtime] = {}
        self.retired: set = set()
        self.H = config.prediction_horizon
        self.pred_len = 2 * self.H + 1
        self.box_len = config.vehicle_length + config.prediction_margin
        self.box_wid = config.vehicle_width + 0.5 * config.prediction_margin
        self.reach = 2 * config.speed_range[1] * self.H * config.dt + self.box_len + 5.0
        self.lookahead = max(params.obs_cells, 1)
        # longest straight-line hop of one move: a cell plus a lateral shift
        self.move_reach = 2 * config.ds + 2 * max(map_model.lane_width(l) for l in map_model.lane_ids)
        self._cap = self._curvature_caps()
        self._apply_originals(0)
        self.tick = 0

    # --- setup ----------------------------------------------------------

    def _curvature_caps(self) -> np.ndarray:
        caps = np.full(len(self.topology), np.inf)
        a_lat = self.config.turn_ay_fraction * self.limits.a_y_max
        for cid, lid in enumerate(self.topology.lane_of):
            kappa = self.map.lane_curvature(lid)
            if kappa > 1e-6:
                caps[cid] = math.sqrt(a_lat / kappa)
        return caps

    def _apply_originals(self, t: int):
        if not self.orig.ids:
            return
        present = self.orig.cell_at[min(t, self.orig.span - 1)]
        for aid in self.orig.ids:
            if aid not in present and self.ledger.cell_of(aid) is not None:
                self.ledger.release(aid)
        for aid, cid in sorted(present.items()):
            self.ledger.try_claim(cid, t, aid, ORIGINAL)
        evicted, self.ledger.evicted = self.ledger.evicted, []
        near = self.orig.near[min(t, self.orig.span - 1)]
        for gid in sorted(self.agents):
            # recorded agents cannot yield, so one closing in forces the generated agent out
            if gid not in self.retired and gid not in evicted and self.agents[gid].cid in near:
                evicted.append(gid)
        for gid in evicted:
            self._evicted(gid, t)

    def spawn(self) -> list:
        agents, shortfall = spawn_agents(self, self.rng)
        self.stats.requested = self.config.n_generated
        self.stats.placed = len(agents)
        self.stats.shortfall = shortfall
        return agents

    # --- geometry helpers -----------------------------------------------

    def _centre(self, cid: int) -> np.ndarray:
        return self.topology.center[cid]

    def _route(self, agent: GeneratedAgent, start: int, count: int, plan=()) -> list:
        out = []
        for c in plan:
            if len(out) >= count:
                return out
            out.append(c)
        cid = out[-1] if out else start
        while len(out) < count:
            cid = next_on_route(self.topology, cid, agent.disposition)
            if cid < 0:
                break
            out.append(cid)
        return out

    def _track(self, agent, rt, t0, start_xy, hold, first_end, n1, v, path, window, odo0):
        """Predicted (x, y, heading) rows for ticks ``t0 .. t0 + pred_len - 1``."""
        dt = self.config.dt
        pts = np.empty((len(path) + 2, 2))
        pts[0], pts[1] = start_xy, first_end
        pts[2:] = self.topology.center[list(path)]
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate(([0.0], np.cumsum(seglen)))
        h = np.arange(self.pred_len, dtype=float)
        tau = h - hold
        d1 = cum[1]
        n1 = max(n1, 1)
        dist = np.where(tau <= 0, 0.0, np.where(tau <= n1, d1 * tau / n1, d1 + v * dt * (tau - n1)))
        end = cum[-1]
        gone = dist > end + 1e-9 if not rt.drifting else np.zeros_like(dist, dtype=bool)
        dist = np.minimum(dist, end)
        out = np.empty((self.pred_len, 3))
        out[:, 0] = np.interp(dist, cum, pts[:, 0])
        out[:, 1] = np.interp(dist, cum, pts[:, 1])
        heads = np.arctan2(seg[:, 1], seg[:, 0]) if len(seg) else np.array([rt.heading])
        moving = seglen > 1e-9
        if not moving.any():
            heads = np.full_like(heads, rt.heading)
        else:
            # zero-length hops inherit the next real heading
            last = rt.heading
            for i in range(len(heads) - 1, -1, -1):
                if moving[i]:
                    last = heads[i]
                else:
                    heads[i] = last
        idx = np.minimum(np.maximum(np.searchsorted(cum, dist, side="right") - 1, 0), max(len(heads) - 1, 0))
        out[:, 2] = heads[idx]
        if window is not None:
            w0, wl, off = window
            u = (odo0 + dist - w0) / wl
            offset = off * (1.0 - smoothstep(u))
            out[:, 0] += -np.sin(out[:, 2]) * offset
            out[:, 1] += np.cos(out[:, 2]) * offset
        if rt.drifting:
            pass
        elif gone.any():
            out[gone] = np.nan
        return out

    def _others_tracks(self, agent, t, route_set, here):
        """Stacked committed tracks of nearby agents not in line with ``agent``."""
        rows = []
        H = self.H
        hx, hy = float(here[0]), float(here[1])
        reach = self.reach + self.move_reach
        for oid, o in self.agents.items():
            if oid == agent.id:
                continue
            ort = self.rt[oid]
            if ort.retired or ort.pred is None:
                continue
            if not ort.drifting and (o.cid in route_set or agent.cid in ort.route_set):
                continue
            # the current position lies within one move of end_xy, so this prefilter is conservative
            e = ort.end_xy
            if abs(e[0] - hx) > reach or abs(e[1] - hy) > reach:
                continue
            off = t + 1 - ort.pred_start
            tr = ort.pred[off : off + H]
            if len(tr) < H:
                pad = np.repeat(ort.pred[-1:], H - len(tr), axis=0)
                tr = np.vstack([tr, pad]) if len(tr) else pad
            rows.append(tr)
        if self.orig.ids:
            o = self.orig.pose[:, t + 1 : t + 1 + H]
            near = np.nanmin(np.abs(o[:, :, 0] - here[0]) + np.abs(o[:, :, 1] - here[1]), axis=1, initial=np.inf)
            for i in np.nonzero(near < 2 * self.reach)[0]:
                aid = self.orig.ids[i]
                ocid = self.orig.cell_at[min(t, self.orig.span - 1)].get(aid)
                if ocid is not None and (ocid in route_set or agent.cid in self._route_set_of(ocid)):
                    continue
                rows.append(o[i])
        if not rows:
            return None
        return np.stack(rows)

    def _route_set_of(self, cid):
        out = set()
        for _ in range(self.lookahead):
            cid = next_on_route(self.topology, cid)
            if cid < 0:
                break
            out.add(cid)
        return out

    # --- speed model ----------------------------------------------------

    def _leader(self, agent, t, cells):
        """Speed of and distance to the first other agent along ``cells``."""
        gap = 0.0
        prev = cells[0]
        for c in cells:
            gap += self.topology.center_distance(prev, c)
            prev = c
            for hid, kind in self.ledger.holders(c).items():
                if hid == agent.id:
                    continue
                if kind == ORIGINAL:
                    return self.orig.speed_of(hid, t), gap
                return self.rt[hid].speed, gap
        return None

    def _move_speed(self, agent, rt, target, dist, route, t):
        cfg = self.config
        topo = self.topology
        v = agent.desired_speed
        lid = topo.lane_of[target]
        lane = self.map.lane(lid)
        if lane.lane_type is not LaneType.STRAIGHT:
            if topo.lane_of[agent.cid] != lid or agent.entry_speed <= 0:
                agent.entry_speed = min(v, rt.speed if rt.moving else v, self._cap[target]) or v
            alpha = topo.s_center[target] / lane.length
            v = turn_speed(agent.entry_speed, alpha, lane.lane_type, self.params)
        v = min(v, self._cap[target])
        travelled = 0.0
        prev = target
        for c in route[: self.lookahead]:
            travelled += topo.center_distance(prev, c)
            prev = c
            if np.isfinite(self._cap[c]):
                v = min(v, math.sqrt(self._cap[c] ** 2 + 2 * cfg.comfort_decel * travelled))
        if self.exclusive:
            lead = self._leader(agent, t, [target] + list(route))
            if lead is not None:
                # brake so that the leader's speed is reached at the headway distance
                room = max(lead[1] - (cfg.headway_cells + 1) * cfg.ds, 0.0)
                v = min(v, math.sqrt(lead[0] ** 2 + 2 * cfg.comfort_decel * room))
        v = min(v, math.sqrt(rt.speed ** 2 + 2 * cfg.max_accel * dist))
        return max(v, 0.0)

    # --- per-tick -------------------------------------------------------

    def step(self) -> None:
        t = self.tick
        cfg = self.config
        if t > 0:
            self.ledger.advance(t)
            self._apply_originals(t)
        ready = []
        for aid in sorted(self.agents):
            rt = self.rt[aid]
            if rt.retired:
                continue
            if rt.drifting:
                if rt.ready(t):
                    self._drift(self.agents[aid], rt, t)
                continue
            if rt.ready(t):
                ready.append(self.agents[aid])
        ready.sort(key=lambda a: (a.cell.lane, a.cell.index, a.id))
        claims = []
        retire_now = []
        for agent in ready:
            rt = self.rt[agent.id]
            if rt.moving:
                agent.log.knots.append(Knot(t, rt.end_xy.copy(), agent.cid, True))
                rt.moving = False
            allow = (cfg.horizon - t) * cfg.dt >= cfg.min_transition_time + 1.5
            need = max(self.params.min_lane_change_length, agent.desired_speed * cfg.min_transition_time) + cfg.ds
            dec = decide(agent, self.ledger, self.topology, t, self.params, allow_lane_change=allow, required_length=need)
            if dec.cell is TERMINAL:
                if cfg.disable_topology:
                    self._start_drift(agent, rt, t)
                else:
                    retire_now.append(agent)
                continue
            target = self.topology.cell_id(dec.cell)
            plan = tuple(self.topology.cell_id(c) for c in dec.plan)
            dist = float(np.hypot(*(self._centre(target) - rt.end_xy)))
            claims.append(Claim(agent, target, dec.policy, plan, agent.executing, dist))
        claims.sort(key=Claim.priority)
        for claim in claims:
            self._resolve(claim, t)
        for aid in sorted(self.agents):
            rt = self.rt[aid]
            if rt.retired:
                continue
            agent = self.agents[aid]
            pos = rt.position(t)
            moving = rt.n > 0 and t < rt.t_start + rt.n and rt.moving
            cid = -1 if rt.drifting else agent.cid
            agent.log.record(t, pos, rt.speed if moving else 0.0, rt.heading, cid)
        for agent in retire_now:
            self._retire(agent, t)
        self.tick += 1

    def _resolve(self, claim: Claim, t: int) -> None:
        agent, target = claim.agent, claim.target
        rt = self.rt[agent.id]
        cfg = self.config
        topo = self.topology
        lateral = topo.lane_of[target] != topo.lane_of[agent.cid] and target not in topo.next_cells(agent.cid)
        rest_plan = claim.plan[1:] if claim.plan else ()
        route = self._route(agent, target, max(cfg.headway_cells, self.lookahead), rest_plan)
        v = self._move_speed(agent, rt, target, claim.distance, route, t)
        n = dwell_steps(claim.distance, v, cfg.dt)
        window_end = t + (1 if n is HOLD else n) + 1
        if lateral and n is not HOLD:
            need = max(self.params.min_lane_change_length, agent.desired_speed * cfg.min_transition_time)
            if (cfg.horizon - 1 - t) * cfg.dt * v < need:
                # the transition could not finish inside the horizon
                self.stats.rejected_horizon += 1
                return self._reject(agent, rt, t, claim)
        if self.exclusive:
            clear_end = window_end + self.orig_guard
            if self.ledger.sigma(target) == ORIGINAL or self.orig.crowded(target, t, clear_end):
                self.stats.rejected_original += 1
                return self._reject(agent, rt, t, claim)
            if not self.ledger.is_free(target, ignore=agent.id):
                self.stats.rejected_occupied += 1
                return self._reject(agent, rt, t, claim)
            for c in route[: cfg.headway_cells]:
                if not self.ledger.is_free(c, ignore=agent.id):
                    self.stats.rejected_headway += 1
                    return self._reject(agent, rt, t, claim)
        if n is HOLD:
            return self._reject(agent, rt, t, claim)
        start_virtual, window, odo0 = self._lateral_setup(agent, rt, target, v, lateral)
        track = self._track(agent, rt, t, start_virtual, 0, self._centre(target), n, v, route, window, odo0)
        route_set = frozenset([target, *route[: self.lookahead]])
        if self.exclusive:
            others = self._others_tracks(agent, t, route_set, rt.end_xy)
            if others is not None:
                hit = kernels.track_conflict(track[1 : self.H + 1], others, self.box_len, self.box_wid)
                if hit >= 0:
                    return self._defer(agent, rt, t, claim, n, v, route)
        if not self.ledger.try_claim(target, t, agent.id, GENERATED):
            self.stats.rejected_occupied += 1
            return self._reject(agent, rt, t, claim)
        # granted
        agent.log.knots.append(Knot(t, rt.end_xy.copy(), agent.cid, rt.at_center))
        if lateral:
            agent.log.lateral.append(LateralEvent(t, agent.cid, target, window[1]))
            rt.window = window
            agent.lane_changes_done += 1
        rt.odo = odo0 + (claim.distance if not lateral else topo.ds)
        if claim.policy in (PolicyKind.LANE_CHANGE, PolicyKind.OVERTAKE) or lane_kind(topo, target) != PolicyKind.STRAIGHT:
            agent.executed.add(claim.policy if claim.policy in (PolicyKind.LANE_CHANGE, PolicyKind.OVERTAKE) else lane_kind(topo, target))
        if claim.policy == PolicyKind.OVERTAKE:
            agent.maneuver_plan = list(claim.plan[1:])
        agent.policy = claim.policy
        rt.prev_cid = agent.cid
        rt.start_xy = rt.end_xy.copy()
        rt.end_xy = self._centre(target).copy()
        rt.t_start, rt.n, rt.speed, rt.moving = t, n, claim.distance / (n * cfg.dt), True
        rt.at_center = True
        step = rt.end_xy - rt.start_xy
        rt.heading = math.atan2(step[1], step[0])
        rt.pred_start, rt.pred = t, track
        rt.route_set = route_set
        rt.deferrals = 0
        agent.move_to(target, topo)
        agent.state = AgentState(tuple(rt.end_xy), v, rt.heading)

    def _lateral_setup(self, agent, rt, target, v, lateral):
        topo = self.topology
        if not lateral:
            return rt.end_xy, rt.window, rt.odo
        # straight-line stand-in in the target lane, abreast of the current cell
        side = topo.lane_start[topo.lane_of[target]] + topo.index_of[agent.cid]
        base = topo.center[side]
        head = topo.heading[side]
        rel = rt.end_xy - base
        offset = math.cos(head) * rel[1] - math.sin(head) * rel[0]
        length = max(self.params.min_lane_change_length, v * self.config.min_transition_time,
                     agent.desired_speed * self.config.min_transition_time)
        agent.transition_length = length
        return base.copy(), (rt.odo, length, offset), rt.odo

    def _hold(self, agent, rt, t, ticks, claim=None, v=None, route=()):
        rt.start_xy = rt.end_xy.copy()
        rt.t_start, rt.n, rt.moving = t, ticks, False
        rt.speed = 0.0
        if claim is not None and v:
            n = dwell_steps(claim.distance, v, self.config.dt)
            n = 1 if n is HOLD else n
            lateral = self.topology.lane_of[claim.target] != self.topology.lane_of[agent.cid] and claim.target not in self.topology.next_cells(agent.cid)
            start, window, odo0 = self._lateral_setup(agent, rt, claim.target, v, lateral)
            rt.pred = self._track(agent, rt, t, start, ticks, self._centre(claim.target), n, v, route, window, odo0)
        else:
            rt.pred = self._track(agent, rt, t, rt.end_xy, self.pred_len, rt.end_xy, 1, 0.0, [], rt.window, rt.odo)
        rt.pred_start = t

    def _reject(self, agent, rt, t, claim):
        self._hold(agent, rt, t, 1)
        self._maybe_extend_overtake(agent, claim)

    def _defer(self, agent, rt, t, claim, n, v, route):
        self.stats.deferrals += 1
        rt.deferrals += 1
        if rt.deferrals >= self.config.max_deferrals:
            self.stats.reroutes += 1
            agent.lane_change_masked = True
            agent.maneuver_plan = []
            rt.deferrals = 0
            self._hold(agent, rt, t, 1)
            return
        self._hold(agent, rt, t, n, claim, v, route)

    def _maybe_extend_overtake(self, agent, claim):
        # a blocked return keeps the agent passing in the overtaking lane
        if claim.policy != PolicyKind.OVERTAKE or len(claim.plan) != 1:
            return
        topo = self.topology
        fwd = topo.forward[agent.cid]
        back = topo.forward[claim.target] if claim.target >= 0 else -1
        if fwd >= 0 and back >= 0 and getattr(agent, "_extensions", 0) < 6:
            agent._extensions = getattr(agent, "_extensions", 0) + 1
            agent.maneuver_plan = [fwd, back]
        elif fwd >= 0:
            agent.maneuver_plan = []

    def _evicted(self, gid, t):
        agent = self.agents.get(gid)
        if agent is None:
            return
        rt = self.rt[gid]
        self.stats.evictions += 1
        prev = rt.prev_cid
        if prev >= 0 and self.ledger.is_free(prev) and not self.orig.crowded(prev, t, t + self.orig_guard):
            self.ledger.try_claim(prev, t, gid, GENERATED)
            here = rt.position(t).copy()
            agent.log.knots.append(Knot(t, here, prev, False))
            agent.move_to(prev, self.topology)
            rt.end_xy = here
            rt.at_center = False
            agent.maneuver_plan = []
            self._hold(agent, rt, t, 1)
        else:
            rt.end_xy = rt.position(t).copy()
            self._retire(agent, t, knot=False)

    def _retire(self, agent, t, knot=True):
        rt = self.rt[agent.id]
        if knot:
            agent.log.knots.append(Knot(t, rt.position(t).copy(), agent.cid, rt.at_center))
        else:
            agent.log.knots.append(Knot(t, rt.end_xy.copy(), -1, False))
        self.ledger.release(agent.id)
        rt.retired = True
        self.retired.add(agent.id)
        self.stats.retired += 1

    def _start_drift(self, agent, rt, t):
        rt.drifting = True
        self.ledger.release(agent.id)
        self.stats.drifted += 1
        rt.heading = float(self.topology.heading[agent.cid])
        if rt.speed <= 0:
            rt.speed = agent.desired_speed
        self._drift(agent, rt, t)

    def _drift(self, agent, rt, t):
        # no lane continuation is known: keep going along the last heading
        rt.start_xy = rt.end_xy.copy()
        agent.log.knots.append(Knot(t, rt.start_xy.copy(), -1, False))
        direction = np.array([math.cos(rt.heading), math.sin(rt.heading)])
        v = max(rt.speed, 1.0)
        n = dwell_steps(self.config.ds, v, self.config.dt)
        rt.end_xy = rt.start_xy + self.config.ds * direction
        rt.t_start, rt.n, rt.moving = t, n, True
        rt.speed = self.config.ds / (n * self.config.dt)
        rt.pred_start = t
        rt.pred = self._track(agent, rt, t, rt.start_xy, 0, rt.end_xy, n, rt.speed,
                              [], None, rt.odo)

    # --- results --------------------------------------------------------

    def finish(self) -> tuple:
        horizon = self.config.horizon
        for aid in sorted(self.agents):
            agent = self.agents[aid]
            rt = self.rt[aid]
            if not rt.retired:
                last = horizon - 1
                agent.log.knots.append(Knot(last, rt.position(last).copy(), -1 if rt.drifting else agent.cid,
                                            rt.at_center and rt.ready(last) and not rt.drifting))
            agent.log.label = agent.label().value
            self.log.agents[aid] = agent.log
            self.stats.labels[agent.log.label] = self.stats.labels.get(agent.log.label, 0) + 1
        for aid in self.orig.ids:
            rows = self.orig.tracks[aid]
            ticks = np.round(rows[:, 0] / self.config.dt).astype(int)
            keep = (ticks >= 0) & (ticks < horizon)
            log = AgentLog(agent_id=aid, kind="original", label="straight")
            for r, tk in zip(rows[keep], ticks[keep]):
                log.record(int(tk), r[1:3], r[3], r[4], self.orig.cell_at[tk].get(aid, -1))
            self.log.agents[aid] = log
        return self.log, self.stats


def lane_kind(topology: GridTopology, cid: int) -> PolicyKind:
    return LANE_POLICY[topology.map.lane(topology.lane_of[cid]).lane_type]


# --- spawning --------------------------------------------------------------


def _compatible(engine: Engine, cid: int, disposition: PolicyKind) -> bool:
    topo = engine.topology
    if disposition in (PolicyKind.LEFT_TURN, PolicyKind.RIGHT_TURN):
        want = LaneType.LEFT_TURN if disposition == PolicyKind.LEFT_TURN else LaneType.RIGHT_TURN
        lane = engine.map.lane(topo.lane_of[cid])
        if lane.lane_type == want:
            return True
        if lane.lane_type != LaneType.STRAIGHT:
            return False
        last = topo.lane_start[lane.id] + topo.cell_count(lane.id) - 1
        nxt = next_on_route(topo, last, disposition)
        return nxt >= 0 and engine.map.lane(topo.lane_of[nxt]).lane_type == want
    if disposition in (PolicyKind.LANE_CHANGE, PolicyKind.OVERTAKE):
        if topo.left[cid] < 0 and topo.right[cid] < 0:
            return False
        lane = engine.map.lane(topo.lane_of[cid])
        return lane.length - topo.s_center[cid] > 3 * engine.params.min_lane_change_length
    return True


def _spacing_ok(engine: Engine, cid: int) -> bool:
    topo = engine.topology
    led = engine.ledger
    k = engine.config.spawn_spacing - 1
    ahead = [cid]
    for _ in range(k):
        nxt = []
        for c in ahead:
            nxt.extend(topo.next_cells(c))
        ahead = nxt
        if any(not led.is_free(c) for c in ahead):
            return False
    j = topo.index_of[cid]
    base = cid - j
    for i in range(max(0, j - k), j):
        if not led.is_free(base + i):
            return False
    if j - k < 0:
        lid = topo.lane_of[cid]
        for pred in engine.map.lane(lid).predecessors:
            last = topo.lane_start[pred] + topo.cell_count(pred) - 1
            if engine.config.disable_topology:
                continue
            if not led.is_free(last):
                return False
    return True


def spawn_agents(engine: Engine, rng: np.random.Generator) -> tuple:
    """Place up to ``n_generated`` agents in free, well-separated cells.

    Returns ``(agents, shortfall)``. Dispositions are drawn from the
    behaviour mix; an agent whose disposition fits no free cell falls back
    to a straight disposition.
    """
    cfg = engine.config
    topo = engine.topology
    kinds = [PolicyKind(k) for k in sorted(cfg.behavior_mix)]
    probs = np.array([cfg.behavior_mix[k.value] for k in kinds], dtype=float)
    probs = probs / probs.sum()
    n = cfg.n_generated
    dispositions = rng.choice(len(kinds), size=n, p=probs) if n else np.array([], dtype=int)
    speeds = rng.uniform(cfg.speed_range[0], cfg.speed_range[1], size=n)
    triggers = rng.integers(0, max(cfg.horizon // 2, 1), size=n, endpoint=True)
    order = rng.permutation(len(topo))
    candidates = [int(c) for c in order if engine.ledger.is_free(int(c)) and not engine.orig.crowded(int(c), 0, 10 + engine.orig_guard)]
    placed = []
    for i in range(n):
        disp = kinds[dispositions[i]]
        cid = _pick_cell(engine, candidates, disp, speeds[i])
        if cid is None and disp != PolicyKind.STRAIGHT:
            disp = PolicyKind.STRAIGHT
            cid = _pick_cell(engine, candidates, disp, speeds[i])
        if cid is None:
            break
        candidates.remove(cid)
        aid = f"gen_{i:03d}"
        head = float(topo.heading[cid])
        agent = GeneratedAgent(
            id=aid,
            state=AgentState(tuple(topo.center[cid]), float(speeds[i]), head),
            cell=topo.refs[cid],
            cid=cid,
            policy=lane_kind(topo, cid),
            disposition=disp,
            trigger_time=int(triggers[i]) if disp == PolicyKind.LANE_CHANGE else 0,
            desired_speed=float(speeds[i]),
        )
        agent.log = AgentLog(agent_id=aid, kind="generated")
        engine.ledger.try_claim(cid, 0, aid, GENERATED)
        rt = _Runtime(start_xy=topo.center[cid].copy(), end_xy=topo.center[cid].copy(),
                      speed=min(float(speeds[i]), engine._cap[cid]), heading=head)
        rt.at_center = True
        rt.moving = False
        route = engine._route(agent, cid, engine.lookahead)
        rt.route_set = frozenset(route)
        rt.pred = engine._track(agent, rt, 0, rt.end_xy, 0, rt.end_xy, 1, rt.speed, route, None, 0.0)
        rt.moving = True  # carries the spawn speed into the first move
        rt.n = 0
        engine.agents[aid] = agent
        engine.rt[aid] = rt
        placed.append(agent)
        kind = lane_kind(topo, cid)
        if kind != PolicyKind.STRAIGHT:
            agent.executed.add(kind)
        engine.stats.dispositions[disp.value] = engine.stats.dispositions.get(disp.value, 0) + 1
    return placed, n - len(placed)


def _pick_cell(engine: Engine, candidates: list, disp: PolicyKind, speed: float):
    topo = engine.topology
    for cid in candidates:
        if not engine.ledger.is_free(cid):
            continue
        if not _compatible(engine, cid, disp):
            continue
        if not _spacing_ok(engine, cid):
            continue
        if not _clear_of_others(engine, cid, disp, speed):
            continue
        return cid
    return None


def _clear_of_others(engine: Engine, cid: int, disp: PolicyKind, speed: float) -> bool:
    if not engine.exclusive:
        here = engine.topology.center[cid]
        box = (here[0], here[1], engine.box_len, engine.box_wid, engine.topology.heading[cid])
        for aid, rt in engine.rt.items():
            p = rt.end_xy
            if kernels.obb_overlap(box, (p[0], p[1], engine.box_len, engine.box_wid, rt.heading)):
                return False
        return True
    probe = GeneratedAgent(id="__probe__", state=AgentState((0.0, 0.0), speed, 0.0), cell=engine.topology.refs[cid],
                           cid=cid, disposition=disp)
    rt = _Runtime(start_xy=engine.topology.center[cid].copy(), end_xy=engine.topology.center[cid].copy(),
                  heading=float(engine.topology.heading[cid]))
    v = min(speed, engine._cap[cid])
    route = engine._route(probe, cid, engine.lookahead)
    track = engine._track(probe, rt, 0, rt.end_xy, 0, rt.end_xy, 1, v, route, None, 0.0)
    here = rt.end_xy
    for aid, ort in engine.rt.items():
        p = ort.end_xy
        if abs(p[0] - here[0]) > engine.reach or abs(p[1] - here[1]) > engine.reach:
            continue
        if kernels.obb_overlap((here[0], here[1], engine.box_len, engine.box_wid, rt.heading),
                               (p[0], p[1], engine.box_len, engine.box_wid, ort.heading)):
            return False
    others = engine._others_tracks(probe, 0, frozenset(route), here)
    if others is None:
        return True
    return kernels.track_conflict(track[1 : engine.H + 1], others, engine.box_len, engine.box_wid) < 0


# --- public entry points ---------------------------------------------------


def step(state: ScenarioState, config: SimConfig = None, params: DecisionParams = None) -> ScenarioState:
    """Advance a scenario by one tick."""
    state.engine.step()
    state.tick = state.engine.tick
    state.retired = set(state.engine.retired)
    return state


def init_state(map_model: MapModel, originals: Optional[dict], config: SimConfig,
               params: DecisionParams = DecisionParams(), limits: FeasibilityLimits = FeasibilityLimits()) -> ScenarioState:
    engine = Engine(map_model, originals, config, params, limits)
    engine.spawn()
    return ScenarioState(tick=0, ledger=engine.ledger, agents=engine.agents, originals=engine.orig.tracks,
                         retired=engine.retired, engine=engine)


def resolve_conflicts(claims: list, ledger: OccupancyLedger) -> list:
    """Grant order for one tick's claims on a ledger (cases 1 and 2).

    ``claims`` are ``(agent_id, cell, status, distance)`` with ``status`` in
    {"executing", "pending"}. Claims on cells held by recorded agents are
    refused; among claims on one free cell the executing one wins, then the
    closer, then the smaller id. Returns the granted ``(agent_id, cell)``
    pairs. Predicted-track conflicts are handled inside the engine.
    """
    topo = ledger.topology
    ranked = sorted(claims, key=lambda c: (0 if c[2] == "executing" else 1, c[3], str(c[0])))
    granted = []
    taken = set()
    for aid, cell, status, dist in ranked:
        cid = topo.cell_id(cell)
        if ledger.sigma(cid) == ORIGINAL or cid in taken:
            continue
        if not ledger.is_free(cid, ignore=aid):
            continue
        taken.add(cid)
        granted.append((aid, cell))
    return granted


def run(map_model: MapModel, originals: Optional[dict], config: SimConfig,
        params: DecisionParams = DecisionParams(), limits: FeasibilityLimits = FeasibilityLimits()) -> tuple:
    """Spawn, step through the horizon and return ``(TrajectoryLog, ScenarioStats)``."""
    state = init_state(map_model, originals, config, params, limits)
    for _ in range(config.horizon):
        step(state)
    return state.engine.finish()
