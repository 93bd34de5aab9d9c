"""Motion realism and safety metrics over generated scenarios.

Motion metrics work on uniformly sampled positions. Accelerations are
central second differences of position; LO and LA split the acceleration
vector along and across the direction of travel; JE is the magnitude of the
central difference of the acceleration vector. Per-agent values are sample
means, scenario values are agent means and dataset values are scenario means.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import kernels

DEFAULT_LENGTH = 4.5
DEFAULT_WIDTH = 2.0
DEFAULT_IOU = 0.02
STILL_SPEED = 0.1

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    length: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH
    heading: float = 0.0

    def as_tuple(self) -> tuple:
        return (self.cx, self.cy, self.length, self.width, self.heading)

    def corners(self) -> np.ndarray:
        return np.asarray(kernels.box_corners(*self.as_tuple()))


def obb_iou(a: OrientedBox, b: OrientedBox) -> float:
    return float(kernels.obb_iou(a.as_tuple(), b.as_tuple()))


def accel_from_positions(xy, dt: float) -> np.ndarray:
    """Acceleration at interior samples, shape ``(n - 2, 2)``."""
    p = np.asarray(xy, dtype=float)
    if len(p) < 3:
        return np.empty((0, 2))
    return (p[2:] - 2.0 * p[1:-1] + p[:-2]) / (dt * dt)


def heading_from_positions(xy, dt: float, fallback: float = 0.0) -> np.ndarray:
    """Direction of travel at interior samples from central velocity.

    Below 0.1 m/s the previous heading is kept; before any motion the
    ``fallback`` heading is used.
    """
    p = np.asarray(xy, dtype=float)
    if len(p) < 3:
        return np.empty(0)
    vel = (p[2:] - p[:-2]) / (2 * dt)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    theta = np.arctan2(vel[:, 1], vel[:, 0])
    out = np.empty(len(vel))
    prev = fallback
    for i in range(len(vel)):
        if speed[i] >= STILL_SPEED:
            prev = theta[i]
        out[i] = prev
    return out


def longitudinal_accel(ax, ay, theta):
    return np.abs(np.asarray(ax) * np.cos(theta) + np.asarray(ay) * np.sin(theta))


def lateral_accel(ax, ay, theta):
    return np.abs(-np.asarray(ax) * np.sin(theta) + np.asarray(ay) * np.cos(theta))


def jerk(ax, ay, dt: float) -> np.ndarray:
    """Magnitude of the acceleration rate; central differences, one-sided at the ends."""
    ax = np.asarray(ax, dtype=float)
    ay = np.asarray(ay, dtype=float)
    if len(ax) < 2:
        return np.empty(0)
    return np.hypot(np.gradient(ax, dt), np.gradient(ay, dt))


@dataclass
class MotionMetrics:
    lo: float
    la: float
    je: float


def agent_motion(samples, dt: float) -> Optional[MotionMetrics]:
    """LO/LA/JE means for one trajectory; None when it has fewer than 3 samples.

    ``samples`` rows are ``(t, x, y, v, heading)``; the heading column only
    seeds the direction of an agent that starts at rest. With exactly 3
    samples there is no jerk sample and JE is reported as NaN.
    """
    s = np.asarray(samples, dtype=float)
    if len(s) < 3:
        return None
    acc = accel_from_positions(s[:, 1:3], dt)
    theta = heading_from_positions(s[:, 1:3], dt, fallback=float(s[0, 4]))
    lo = longitudinal_accel(acc[:, 0], acc[:, 1], theta)
    la = lateral_accel(acc[:, 0], acc[:, 1], theta)
    je = jerk(acc[:, 0], acc[:, 1], dt)
    return MotionMetrics(float(lo.mean()), float(la.mean()), float(je.mean()) if je.size else float("nan"))


def collision_flags(frames: Sequence[Dict[str, OrientedBox]], iou_threshold: float = DEFAULT_IOU) -> Dict[str, bool]:
    """Per-vehicle flag: IoU above the threshold with some vehicle at some tick."""
    hit: Dict[str, bool] = {}
    for frame in frames:
        ids = sorted(frame)
        for aid in ids:
            hit.setdefault(aid, False)
        if len(ids) < 2:
            continue
        boxes = np.array([frame[a].as_tuple() for a in ids], dtype=float)
        flags = kernels.tick_collision_flags(boxes, iou_threshold)
        for aid, f in zip(ids, flags):
            if f:
                hit[aid] = True
    return hit


def scenario_collision_rate(scenarios: Iterable[Sequence[Dict[str, OrientedBox]]],
                            iou_threshold: float = DEFAULT_IOU) -> float:
    """Mean over scenarios of colliding vehicles over total vehicles."""
    rates = []
    for frames in scenarios:
        flags = collision_flags(frames, iou_threshold)
        if flags:
            rates.append(sum(flags.values()) / len(flags))
        else:
            log.warning("scenario without vehicles excluded from SCR")
    return float(np.mean(rates)) if rates else 0.0


def offroad_count(points, drivable_area) -> int:
    """Points outside every drivable-area polygon."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.size == 0:
        return 0
    inside = np.zeros(len(pts), dtype=bool)
    for poly in drivable_area:
        todo = ~inside
        if not todo.any():
            break
        inside[todo] = np.asarray(kernels.points_in_polygon(pts[todo], np.asarray(poly, dtype=float)), dtype=bool)
    return int((~inside).sum())


def offroad_rate(trajectories, drivable_area) -> float:
    """Fraction of trajectory points outside all drivable-area polygons."""
    total = 0
    off = 0
    for traj in trajectories:
        pts = np.asarray(traj, dtype=float).reshape(-1, 2)
        total += len(pts)
        off += offroad_count(pts, drivable_area)
    return off / total if total else 0.0


def frames_from_samples(trajectories: Dict[str, np.ndarray], dt: float,
                        length: float = DEFAULT_LENGTH, width: float = DEFAULT_WIDTH) -> List[Dict[str, OrientedBox]]:
    """Regroup per-agent ``(t, x, y, v, heading)`` rows into per-tick box sets."""
    by_tick: Dict[int, Dict[str, OrientedBox]] = {}
    for aid, rows in trajectories.items():
        for r in np.asarray(rows, dtype=float):
            tick = int(round(r[0] / dt))
            by_tick.setdefault(tick, {})[aid] = OrientedBox(r[1], r[2], length, width, r[4])
    return [by_tick[t] for t in sorted(by_tick)]


@dataclass
class ScenarioMetrics:
    lo: float
    la: float
    je: float
    scr: float
    orr: float
    n_agents: int
    n_points: int
    n_offroad: int
    colliding: int


def scenario_metrics(trajectories: Dict[str, np.ndarray], drivable_area, dt: float,
                     length: float = DEFAULT_LENGTH, width: float = DEFAULT_WIDTH,
                     iou_threshold: float = DEFAULT_IOU) -> ScenarioMetrics:
    motion = [m for m in (agent_motion(t, dt) for t in trajectories.values()) if m is not None]
    lo = float(np.mean([m.lo for m in motion])) if motion else 0.0
    la = float(np.mean([m.la for m in motion])) if motion else 0.0
    je_vals = [m.je for m in motion if not np.isnan(m.je)]
    je = float(np.mean(je_vals)) if je_vals else 0.0
    flags = collision_flags(frames_from_samples(trajectories, dt, length, width), iou_threshold)
    colliding = sum(flags.values())
    pts = [np.asarray(t, dtype=float)[:, 1:3] for t in trajectories.values()]
    n_points = sum(len(p) for p in pts)
    n_off = sum(offroad_count(p, drivable_area) for p in pts)
    return ScenarioMetrics(
        lo=lo,
        la=la,
        je=je,
        scr=colliding / len(flags) if flags else 0.0,
        orr=n_off / n_points if n_points else 0.0,
        n_agents=len(trajectories),
        n_points=n_points,
        n_offroad=n_off,
        colliding=colliding,
    )


@dataclass
class MetricsReport:
    lo: float
    la: float
    je: float
    scr: float
    orr: float
    n_scenarios: int
    n_agents: int
    config_echo: dict = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "lo": self.lo,
            "la": self.la,
            "je": self.je,
            "scr": self.scr,
            "orr": self.orr,
            "n_scenarios": self.n_scenarios,
            "n_agents": self.n_agents,
            "config_echo": self.config_echo,
            "skipped": list(self.skipped),
        }

    def table(self) -> str:
        head = f"{'LO':>8} {'LA':>8} {'JE':>8} {'SCR':>8} {'ORR':>8} {'scenarios':>10} {'agents':>8}"
        row = (f"{self.lo:8.3f} {self.la:8.3f} {self.je:8.3f} {self.scr:8.3f} {self.orr:8.3f} "
               f"{self.n_scenarios:10d} {self.n_agents:8d}")
        lines = [head, row]
        if self.skipped:
            lines.append(f"skipped {len(self.skipped)} unreadable file(s): " + ", ".join(self.skipped))
        return "\n".join(lines)


def aggregate(results: Sequence[ScenarioMetrics], config_echo: Optional[dict] = None,
              skipped: Sequence[str] = ()) -> MetricsReport:
    """Dataset report: scenario means of every metric; scenarios without vehicles are left out."""
    empty = sum(1 for r in results if r.n_agents == 0)
    if empty:
        log.warning("%d scenario(s) without vehicles excluded from the report", empty)
    results = [r for r in results if r.n_agents > 0]
    if not results:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0.0, 0, 0, dict(config_echo or {}), list(skipped))
    mean = lambda key: float(np.mean([getattr(r, key) for r in results]))  # noqa: E731
    return MetricsReport(
        lo=mean("lo"),
        la=mean("la"),
        je=mean("je"),
        scr=mean("scr"),
        orr=mean("orr"),
        n_scenarios=len(results),
        n_agents=int(sum(r.n_agents for r in results)),
        config_echo=dict(config_echo or {}),
        skipped=list(skipped),
    )
