"""Static lane-level map: centerlines, boundaries, connectivity, drivable area."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

DEFAULT_LANE_WIDTH = 3.5
WIDTH_PAIRING_SAMPLES = 32
MIN_POINT_SEPARATION = 1e-9


class MapError(ValueError):
    """Base class for map loading problems."""


class MapParseError(MapError):
    """The map document is not well-formed."""


class MapValidationError(MapError):
    """The map parsed but violates an invariant; ``lane_id`` names the culprit."""

    def __init__(self, message: str, lane_id: Optional[str] = None):
        super().__init__(message)
        self.lane_id = lane_id


class LaneType(str, Enum):
    STRAIGHT = "straight"
    LEFT_TURN = "left_turn"
    RIGHT_TURN = "right_turn"


@dataclass(frozen=True)
class ArcLengthTable:
    cumulative_s: np.ndarray
    total_length: float


@dataclass(frozen=True, eq=False)
class Lane:
    id: str
    centerline: np.ndarray
    lane_type: LaneType = LaneType.STRAIGHT
    successors: tuple = ()
    predecessors: tuple = ()
    left_neighbor: Optional[str] = None
    right_neighbor: Optional[str] = None
    left_same_direction: bool = True
    right_same_direction: bool = True
    left_boundary: Optional[np.ndarray] = None
    right_boundary: Optional[np.ndarray] = None
    arc: ArcLengthTable = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise MapValidationError(f"lane {self.id!r}: centerline needs at least 2 points", self.id)
        object.__setattr__(self, "centerline", pts)
        try:
            table = arc_length_param(pts)
        except MapValidationError as exc:
            raise MapValidationError(f"lane {self.id!r}: {exc}", self.id) from None
        object.__setattr__(self, "arc", table)

    @property
    def length(self) -> float:
        return self.arc.total_length

    def point_at(self, s: float) -> np.ndarray:
        return point_at_arclength(self.arc, self.centerline, s)

    def heading_at(self, s: float) -> float:
        return heading_at_arclength(self.arc, self.centerline, s)

    def points_at(self, s) -> tuple:
        """Vectorised ``point_at`` and ``heading_at`` for an array of arc lengths."""
        s = np.asarray(s, dtype=float)
        cum = self.arc.cumulative_s
        if s.size and (s.min() < -1e-9 or s.max() > self.length + 1e-9):
            raise ValueError(f"arc length outside [0, {self.length}]")
        i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(cum) - 2)
        pts = self.centerline
        d = pts[i + 1] - pts[i]
        u = np.clip((s - cum[i]) / (cum[i + 1] - cum[i]), 0.0, 1.0)
        # math.atan2 per element: np.arctan2 can differ from the scalar path in the last bit
        heads = np.array([math.atan2(y, x) for x, y in d.tolist()])
        return pts[i] + u[:, None] * d, heads

    def neighbors(self, same_direction_only: bool = True) -> list:
        out = []
        if self.left_neighbor is not None and (self.left_same_direction or not same_direction_only):
            out.append(self.left_neighbor)
        if self.right_neighbor is not None and (self.right_same_direction or not same_direction_only):
            out.append(self.right_neighbor)
        return out


def arc_length_param(centerline) -> ArcLengthTable:
    """Cumulative arc length along a polyline."""
    pts = np.asarray(centerline, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise MapValidationError("centerline needs at least 2 points")
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    bad = np.nonzero(seg <= MIN_POINT_SEPARATION)[0]
    if bad.size:
        raise MapValidationError(f"repeated centerline point at index {int(bad[0]) + 1}")
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    return ArcLengthTable(cumulative_s=cum, total_length=float(cum[-1]))


def _locate(table: ArcLengthTable, s: float) -> tuple:
    if not (-1e-9 <= s <= table.total_length + 1e-9):
        raise ValueError(f"arc length {s} outside [0, {table.total_length}]")
    cum = table.cumulative_s
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(cum) - 2)
    return i, cum


def point_at_arclength(table: ArcLengthTable, centerline, s: float) -> np.ndarray:
    """Point at arc length ``s`` by piecewise linear interpolation."""
    i, cum = _locate(table, s)
    pts = np.asarray(centerline, dtype=float)
    seg_len = cum[i + 1] - cum[i]
    u = min(max((s - cum[i]) / seg_len, 0.0), 1.0)
    return pts[i] + u * (pts[i + 1] - pts[i])


def heading_at_arclength(table: ArcLengthTable, centerline, s: float) -> float:
    # a vertex takes the heading of the segment that follows it
    i, _ = _locate(table, s)
    pts = np.asarray(centerline, dtype=float)
    d = pts[i + 1] - pts[i]
    return math.atan2(d[1], d[0])


def resample_polyline(points, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    table = arc_length_param(pts)
    targets = np.linspace(0.0, table.total_length, n)
    xs = np.interp(targets, table.cumulative_s, pts[:, 0])
    ys = np.interp(targets, table.cumulative_s, pts[:, 1])
    return np.column_stack([xs, ys])


def estimate_lane_width(lane: Lane, default: float = DEFAULT_LANE_WIDTH) -> float:
    """Mean distance between index-paired points of the two boundaries."""
    if lane.left_boundary is None or lane.right_boundary is None:
        return default
    left = resample_polyline(lane.left_boundary, WIDTH_PAIRING_SAMPLES)
    right = resample_polyline(lane.right_boundary, WIDTH_PAIRING_SAMPLES)
    return float(np.mean(np.hypot(*(left - right).T)))


def polyline_curvature(points) -> float:
    """Largest turning rate (rad/m) over consecutive vertex pairs of a polyline."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        return 0.0
    d = np.diff(pts, axis=0)
    ang = np.arctan2(d[:, 1], d[:, 0])
    turn = np.abs((np.diff(ang) + np.pi) % (2 * np.pi) - np.pi)
    seg = np.hypot(d[:, 0], d[:, 1])
    span = 0.5 * (seg[:-1] + seg[1:])
    return float(np.max(turn / span))


class MapModel:
    """Immutable collection of lanes plus drivable-area polygons."""

    def __init__(self, lanes: Iterable[Lane], drivable_area: Sequence = ()):
        lanes = list(lanes)
        self._lanes = {}
        for lane in lanes:
            if lane.id in self._lanes:
                raise MapValidationError(f"duplicate lane id {lane.id!r}", lane.id)
            self._lanes[lane.id] = lane
        self.lane_ids = tuple(sorted(self._lanes))
        self.drivable_area = [np.asarray(p, dtype=float) for p in drivable_area]
        self._validate()
        self._build_segment_index()
        self._widths = {lid: estimate_lane_width(self._lanes[lid]) for lid in self.lane_ids}
        self._curvature = {lid: polyline_curvature(self._lanes[lid].centerline) for lid in self.lane_ids}

    def __len__(self):
        return len(self._lanes)

    def __contains__(self, lane_id):
        return lane_id in self._lanes

    def lane(self, lane_id: str) -> Lane:
        try:
            return self._lanes[lane_id]
        except KeyError:
            raise KeyError(f"unknown lane {lane_id!r}") from None

    @property
    def lanes(self) -> list:
        return [self._lanes[lid] for lid in self.lane_ids]

    def lane_width(self, lane_id: str) -> float:
        return self._widths[lane_id]

    def lane_curvature(self, lane_id: str) -> float:
        return self._curvature[lane_id]

    def _validate(self):
        for lid in self.lane_ids:
            lane = self._lanes[lid]
            for ref in (*lane.successors, *lane.predecessors):
                if ref not in self._lanes:
                    raise MapValidationError(f"lane {lid!r} references missing lane {ref!r}", ref)
            for side, ref in (("left", lane.left_neighbor), ("right", lane.right_neighbor)):
                if ref is None:
                    continue
                if ref not in self._lanes:
                    raise MapValidationError(f"lane {lid!r} references missing lane {ref!r}", ref)
                other = self._lanes[ref]
                same = lane.left_same_direction if side == "left" else lane.right_same_direction
                # same-direction neighbours mirror sides; opposing ones share the side
                back_side = ("right" if side == "left" else "left") if same else side
                back = other.right_neighbor if back_side == "right" else other.left_neighbor
                if back != lid:
                    raise MapValidationError(
                        f"neighbor link {lid!r} -{side}-> {ref!r} is not mirrored by {ref!r}", ref
                    )
        for i, poly in enumerate(self.drivable_area):
            if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
                raise MapValidationError(f"drivable_area polygon {i} needs at least 3 points")

    def _build_segment_index(self):
        starts, vecs, s0, lane_idx = [], [], [], []
        for k, lid in enumerate(self.lane_ids):
            lane = self._lanes[lid]
            pts = lane.centerline
            starts.append(pts[:-1])
            vecs.append(np.diff(pts, axis=0))
            s0.append(lane.arc.cumulative_s[:-1])
            lane_idx.append(np.full(len(pts) - 1, k))
        if starts:
            self._seg_start = np.vstack(starts)
            self._seg_vec = np.vstack(vecs)
            self._seg_s0 = np.concatenate(s0)
            self._seg_lane = np.concatenate(lane_idx)
            self._seg_len2 = np.einsum("ij,ij->i", self._seg_vec, self._seg_vec)
        else:
            self._seg_start = np.zeros((0, 2))

    def project(self, point) -> tuple:
        """Nearest lane, arc length of the foot point and signed offset.

        Positive offset means left of the lane's travel direction. Ties go to
        the lexicographically smallest lane id.
        """
        res = self.project_many(np.asarray(point, dtype=float).reshape(1, 2))
        return res[0][0], float(res[1][0]), float(res[2][0])

    def project_many(self, points) -> tuple:
        """Vectorised ``project`` returning (lane_ids, s, d, distance)."""
        if len(self._lanes) == 0:
            raise ValueError("cannot project onto an empty map")
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        lane_ids, s_out, d_out, dist_out = [], np.empty(len(pts)), np.empty(len(pts)), np.empty(len(pts))
        chunk = max(1, 200_000 // max(1, len(self._seg_start)))
        for lo in range(0, len(pts), chunk):
            p = pts[lo : lo + chunk]
            rel = p[:, None, :] - self._seg_start[None, :, :]
            t = np.einsum("pmj,mj->pm", rel, self._seg_vec) / self._seg_len2[None, :]
            np.clip(t, 0.0, 1.0, out=t)
            foot = self._seg_start[None, :, :] + t[:, :, None] * self._seg_vec[None, :, :]
            diff = p[:, None, :] - foot
            dist2 = np.einsum("pmj,pmj->pm", diff, diff)
            best = np.argmin(dist2, axis=1)  # first minimum: segments are ordered by lane id
            rows = np.arange(len(p))
            bt = t[rows, best]
            vec = self._seg_vec[best]
            cross = vec[:, 0] * diff[rows, best, 1] - vec[:, 1] * diff[rows, best, 0]
            dist = np.sqrt(dist2[rows, best])
            s_out[lo : lo + len(p)] = self._seg_s0[best] + bt * np.sqrt(self._seg_len2[best])
            d_out[lo : lo + len(p)] = np.where(cross >= 0.0, dist, -dist)
            dist_out[lo : lo + len(p)] = dist
            lane_ids.extend(self.lane_ids[k] for k in self._seg_lane[best])
        return lane_ids, s_out, d_out, dist_out


def project_to_lane(map_model: MapModel, point) -> tuple:
    return map_model.project(point)


# --- interchange format -------------------------------------------------

def _parse_points(value, what: str, lane_id: Optional[str]) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise MapParseError(f"{what} of lane {lane_id!r} is not a list of [x, y] pairs") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise MapParseError(f"{what} of lane {lane_id!r} is not a list of [x, y] pairs")
    return arr


def _parse_flag(raw) -> tuple:
    if raw is None:
        return True, True
    if isinstance(raw, bool):
        return raw, raw
    if isinstance(raw, dict):
        return bool(raw.get("left", True)), bool(raw.get("right", True))
    raise MapParseError(f"neighbor_same_direction must be a bool or {{left, right}} object, got {raw!r}")


def lane_from_dict(doc: dict) -> Lane:
    if not isinstance(doc, dict) or "id" not in doc:
        raise MapParseError("every lane needs an 'id'")
    lid = str(doc["id"])
    if "centerline" not in doc:
        raise MapParseError(f"lane {lid!r} has no centerline")
    raw_type = doc.get("lane_type", "straight")
    try:
        lane_type = LaneType(raw_type)
    except ValueError:
        raise MapValidationError(f"lane {lid!r} has unknown lane_type {raw_type!r}", lid) from None
    left_same, right_same = _parse_flag(doc.get("neighbor_same_direction"))
    lb = doc.get("left_boundary")
    rb = doc.get("right_boundary")
    return Lane(
        id=lid,
        centerline=_parse_points(doc["centerline"], "centerline", lid),
        lane_type=lane_type,
        successors=tuple(str(x) for x in doc.get("successors", ())),
        predecessors=tuple(str(x) for x in doc.get("predecessors", ())),
        left_neighbor=None if doc.get("left_neighbor") is None else str(doc["left_neighbor"]),
        right_neighbor=None if doc.get("right_neighbor") is None else str(doc["right_neighbor"]),
        left_same_direction=left_same,
        right_same_direction=right_same,
        left_boundary=None if lb is None else _parse_points(lb, "left_boundary", lid),
        right_boundary=None if rb is None else _parse_points(rb, "right_boundary", lid),
    )


def map_from_dict(doc: dict) -> MapModel:
    if not isinstance(doc, dict) or not isinstance(doc.get("lanes"), list):
        raise MapParseError("map document needs a top-level 'lanes' list")
    lanes = [lane_from_dict(item) for item in doc["lanes"]]
    area = doc.get("drivable_area", [])
    if not isinstance(area, list):
        raise MapParseError("'drivable_area' must be a list of polygons")
    polys = []
    for i, poly in enumerate(area):
        try:
            arr = np.asarray(poly, dtype=float)
        except (TypeError, ValueError):
            raise MapParseError(f"drivable_area polygon {i} is malformed") from None
        polys.append(arr)
    return MapModel(lanes, polys)


def map_to_dict(map_model: MapModel) -> dict:
    lanes = []
    for lane in map_model.lanes:
        item = {
            "id": lane.id,
            "centerline": lane.centerline.tolist(),
            "lane_type": lane.lane_type.value,
            "successors": list(lane.successors),
            "predecessors": list(lane.predecessors),
            "left_neighbor": lane.left_neighbor,
            "right_neighbor": lane.right_neighbor,
            "neighbor_same_direction": {"left": lane.left_same_direction, "right": lane.right_same_direction},
        }
        if lane.left_boundary is not None:
            item["left_boundary"] = lane.left_boundary.tolist()
        if lane.right_boundary is not None:
            item["right_boundary"] = lane.right_boundary.tolist()
        lanes.append(item)
    return {"lanes": lanes, "drivable_area": [p.tolist() for p in map_model.drivable_area]}


def load_map(path) -> MapModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MapParseError(f"{path}: {exc}") from None
    return map_from_dict(doc)


def bundled_map_path(name: str) -> Path:
    """Path of a map shipped in ``scenegrid/data`` (``corridor3`` or ``intersection``)."""
    return Path(__file__).parent / "data" / f"{name}.json"
