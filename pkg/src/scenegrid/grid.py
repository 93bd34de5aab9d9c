"""Lane gridification, grid topology and the occupancy ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, NamedTuple, Optional, Union

import numpy as np

from .mapmodel import LaneType, MapModel

DEFAULT_DS = 4.0
OFF_LANE_LIMIT = 10.0

FREE, ORIGINAL, GENERATED = 0, 1, 2


class CellRef(NamedTuple):
    lane: str
    index: int


@dataclass(frozen=True)
class GridCell:
    ref: CellRef
    center: tuple
    heading: float
    length: float
    lane_type: LaneType
    width: float
    s_start: float

    @property
    def s_center(self) -> float:
        return self.s_start + 0.5 * self.length


class Neighbors(NamedTuple):
    forward: Optional[CellRef]
    lateral: list
    successors: list


def cell_lengths(total_length: float, ds: float) -> np.ndarray:
    """Cell lengths for one lane: full cells of ``ds`` and a shorter remainder."""
    if ds <= 0:
        raise ValueError("grid resolution must be positive")
    n = max(1, math.ceil(total_length / ds))
    lengths = np.full(n, ds)
    lengths[-1] = total_length - (n - 1) * ds
    return lengths


class GridTopology:
    """Per-lane cell arrays plus longitudinal, lateral and inter-lane links.

    Cells carry a dense integer id used by the engine's hot paths; the public
    accessors speak ``CellRef``. With ``use_topology=False`` only the
    longitudinal links survive.
    """

    def __init__(self, map_model: MapModel, ds: float = DEFAULT_DS, use_topology: bool = True):
        if ds <= 0:
            raise ValueError("grid resolution must be positive")
        self.map = map_model
        self.ds = float(ds)
        self.use_topology = use_topology
        self.cells: Dict[str, List[GridCell]] = {}
        refs, centers, headings, lengths, s_mid, lane_of = [], [], [], [], [], []
        self.lane_start: Dict[str, int] = {}
        for lid in map_model.lane_ids:
            lane = map_model.lane(lid)
            width = map_model.lane_width(lid)
            cum = np.concatenate(([0.0], np.cumsum(cell_lengths(lane.length, ds))))
            cum[-1] = lane.length
            mids = 0.5 * (cum[:-1] + cum[1:])
            pts, heads = lane.points_at(mids)
            self.lane_start[lid] = len(refs)
            row = []
            for j, (mid, p, h) in enumerate(zip(mids.tolist(), pts.tolist(), heads.tolist())):
                ref = CellRef(lid, j)
                row.append(GridCell(ref, (p[0], p[1]), h, float(cum[j + 1] - cum[j]), lane.lane_type, width,
                                    float(cum[j])))
                refs.append(ref)
                centers.append(p)
                headings.append(h)
                s_mid.append(mid)
                lane_of.append(lid)
            lengths.extend(np.diff(cum).tolist())
            self.cells[lid] = row
        self.refs: List[CellRef] = refs
        self.ids: Dict[CellRef, int] = {r: i for i, r in enumerate(refs)}
        self.center = np.asarray(centers, dtype=float).reshape(-1, 2)
        self._xy = [tuple(c) for c in self.center.tolist()]
        self.heading = np.asarray(headings, dtype=float)
        self.length = np.asarray(lengths, dtype=float)
        self.s_center = np.asarray(s_mid, dtype=float)
        self.lane_of = lane_of
        self.index_of = [r.index for r in refs]
        n = len(refs)
        self.forward = [-1] * n
        self.left = [-1] * n
        self.right = [-1] * n
        self.successors: List[tuple] = [()] * n
        self._link(map_model)

    def _link(self, map_model: MapModel):
        for lid, row in self.cells.items():
            base = self.lane_start[lid]
            for j in range(len(row) - 1):
                self.forward[base + j] = base + j + 1
            if not self.use_topology:
                continue
            lane = map_model.lane(lid)
            last = base + len(row) - 1
            self.successors[last] = tuple(self.lane_start[s] for s in sorted(lane.successors))
            for side, other, same in (
                ("left", lane.left_neighbor, lane.left_same_direction),
                ("right", lane.right_neighbor, lane.right_same_direction),
            ):
                if other is None or not same:
                    continue
                links = self.left if side == "left" else self.right
                count = len(self.cells[other])
                for j in range(min(len(row), count)):
                    links[base + j] = self.lane_start[other] + j

    def __len__(self):
        return len(self.refs)

    def cell(self, ref: CellRef) -> GridCell:
        return self.cells[ref.lane][ref.index]

    def cell_id(self, ref: Union[CellRef, int]) -> int:
        if isinstance(ref, (int, np.integer)):
            return int(ref)
        try:
            return self.ids[CellRef(*ref)]
        except KeyError:
            raise KeyError(f"unknown cell {tuple(ref)!r}") from None

    def cell_count(self, lane_id: str) -> int:
        return len(self.cells[lane_id])

    def is_last(self, cid: int) -> bool:
        return self.forward[cid] < 0

    def next_cells(self, cid: int) -> tuple:
        f = self.forward[cid]
        return (f,) if f >= 0 else self.successors[cid]

    def lateral(self, cid: int) -> list:
        return [c for c in (self.left[cid], self.right[cid]) if c >= 0]

    def neighbors(self, ref: CellRef) -> Neighbors:
        cid = self.cell_id(ref)
        f = self.forward[cid]
        return Neighbors(
            forward=self.refs[f] if f >= 0 else None,
            lateral=[self.refs[c] for c in self.lateral(cid)],
            successors=[self.refs[c] for c in self.successors[cid]],
        )

    def locate(self, lane_id: str, s: float) -> int:
        """Cell id whose arc-length interval on ``lane_id`` contains ``s``."""
        n = len(self.cells[lane_id])
        j = min(max(int(s // self.ds), 0), n - 1)
        return self.lane_start[lane_id] + j

    def center_distance(self, a: int, b: int) -> float:
        (ax, ay), (bx, by) = self._xy[a], self._xy[b]
        return math.hypot(ax - bx, ay - by)


@lru_cache(maxsize=16)
def build_grid(map_model: MapModel, ds: float = DEFAULT_DS, use_topology: bool = True) -> GridTopology:
    """Grid for a map; cached because maps are immutable and grids are read-only once built."""
    return GridTopology(map_model, ds, use_topology)


class OccupancyLedger:
    """Current-tick occupancy with mutual exclusion and original-agent priority.

    In the default exclusive mode every occupied cell has exactly one holder.
    ``exclusive=False`` turns the ledger into a plain multi-holder register
    (used when collision handling is switched off); claims then always succeed.
    Evictions of generated agents by originals are queued in ``evicted``.
    """

    def __init__(self, topology: GridTopology, exclusive: bool = True, keep_history: bool = False):
        self.topology = topology
        self.exclusive = exclusive
        self.keep_history = keep_history
        self.tick = 0
        self._holders: Dict[int, Dict[object, int]] = {}
        self._cell_of: Dict[object, int] = {}
        self.evicted: List[object] = []
        self.history: List[tuple] = []
        self.conflicts = 0

    def sigma(self, cell) -> int:
        holders = self._holders.get(self.topology.cell_id(cell))
        if not holders:
            return FREE
        return ORIGINAL if ORIGINAL in holders.values() else GENERATED

    def owner(self, cell):
        holders = self._holders.get(self.topology.cell_id(cell))
        if not holders:
            return None
        return next(iter(holders))

    def holders(self, cell) -> dict:
        return dict(self._holders.get(self.topology.cell_id(cell), {}))

    def cell_of(self, agent_id) -> Optional[int]:
        return self._cell_of.get(agent_id)

    def is_free(self, cid: int, ignore=None) -> bool:
        holders = self._holders.get(cid)
        if not holders:
            return True
        return ignore is not None and len(holders) == 1 and ignore in holders

    def try_claim(self, cell, tick: int, agent_id, kind: int) -> bool:
        """Claim ``cell`` for ``agent_id``; the agent's previous cell is released on success."""
        cid = self.topology.cell_id(cell)
        holders = self._holders.get(cid)
        if holders and agent_id not in holders and self.exclusive:
            if kind != ORIGINAL:
                return False
            if ORIGINAL in holders.values():
                # two recorded agents mapped onto one cell: the incumbent keeps it
                self.conflicts += 1
                return False
            for other in list(holders):
                self._drop(other)
                self.evicted.append(other)
        self._drop(agent_id)
        self._holders.setdefault(cid, {})[agent_id] = kind
        self._cell_of[agent_id] = cid
        return True

    def release(self, agent_id) -> None:
        self._drop(agent_id)

    def _drop(self, agent_id):
        cid = self._cell_of.pop(agent_id, None)
        if cid is None:
            return
        holders = self._holders.get(cid)
        if holders is not None:
            holders.pop(agent_id, None)
            if not holders:
                del self._holders[cid]

    def advance(self, tick: int) -> None:
        if self.keep_history:
            self.history.append((self.tick, self.snapshot()))
        self.tick = tick

    def snapshot(self) -> tuple:
        """Immutable view of the occupied cells: ``((cid, ((agent, kind), ...)), ...)``."""
        return tuple(sorted((cid, tuple(sorted(h.items(), key=repr))) for cid, h in self._holders.items() if h))

    def occupied_cells(self) -> Iterable[int]:
        return list(self._holders)


def map_original_agents(topology: GridTopology, original_tracks: dict, tick: int, ledger=None, dt: float = 0.1):
    """Assign each recorded agent present at ``tick`` to exactly one cell.

    ``original_tracks`` maps agent id to an array of rows ``(t, x, y, ...)``.
    Returns ``(assignment, skipped)`` where ``assignment`` maps agent id to a
    cell id and ``skipped`` counts agents more than 10 m from every lane.
    When a ledger is given, the assignment is applied to it.
    """
    ids, pts = [], []
    for aid in sorted(original_tracks, key=str):
        rows = np.asarray(original_tracks[aid], dtype=float)
        hit = np.nonzero(np.round(rows[:, 0] / dt).astype(int) == tick)[0]
        if hit.size:
            ids.append(aid)
            pts.append(rows[hit[0], 1:3])
    assignment, skipped = {}, 0
    if ids:
        lanes, s, _, dist = topology.map.project_many(np.asarray(pts))
        for aid, lid, si, di in zip(ids, lanes, s, dist):
            if di > OFF_LANE_LIMIT:
                skipped += 1
                continue
            assignment[aid] = topology.locate(lid, si)
    if ledger is not None:
        present = set(assignment)
        for aid in list(ledger._cell_of):
            if ledger._holders[ledger._cell_of[aid]].get(aid) == ORIGINAL and aid not in present:
                ledger.release(aid)
        for aid, cid in assignment.items():
            ledger.try_claim(cid, tick, aid, ORIGINAL)
    return assignment, skipped
