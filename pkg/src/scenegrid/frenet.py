"""Frenet-frame smoothing of discrete grid paths.

The reference line is a C1 cubic Hermite curve through the vertices of a
lane-sequence polyline with C2 spline tangents, parameterised by chord length so that ``s`` agrees
with lane arc length at every vertex. Longitudinal motion ``s(t)`` is a
piecewise cubic through the cell-transition knots; the lateral offset is a
piecewise cubic in ``s`` so the path geometry does not depend on dwell times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline

MAX_OFFSET = 7.0
LOW_SPEED = 0.1
JOINT_TOL = 0.1
MAX_SEGMENT = 2.0


class FrenetError(ValueError):
    pass


class FrenetState(NamedTuple):
    s: float
    d: float


@dataclass(frozen=True)
class FeasibilityLimits:
    r_min: float = 5.0
    a_y_max: float = 3.0

    def __post_init__(self):
        if self.r_min <= 0 or self.a_y_max <= 0:
            raise ValueError("r_min and a_y_max must be positive")

    @property
    def kappa_max(self) -> float:
        return 1.0 / self.r_min


def _hermite_basis(u):
    u2 = u * u
    u3 = u2 * u
    return 2 * u3 - 3 * u2 + 1, u3 - 2 * u2 + u, -2 * u3 + 3 * u2, u3 - u2


def _hermite_basis_d1(u):
    u2 = u * u
    return 6 * u2 - 6 * u, 3 * u2 - 4 * u + 1, -6 * u2 + 6 * u, 3 * u2 - 2 * u


def _hermite_basis_d2(u):
    return 12 * u - 6, 6 * u - 4, -12 * u + 6, 6 * u - 2


class FrenetFrame:
    """Reference line ``r(s)`` with unit tangent and left normal."""

    def __init__(self, points, max_segment: float = MAX_SEGMENT):
        pts = np.asarray(points, dtype=float)
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        keep = np.concatenate(([True], seglen > 1e-9))
        pts = pts[keep]
        if len(pts) < 2:
            raise FrenetError("reference line needs two distinct points")
        # long chords are subdivided so a tilted end tangent cannot bow the curve
        seg = np.diff(pts, axis=0)
        pieces = np.maximum(1, np.ceil(np.hypot(seg[:, 0], seg[:, 1]) / max_segment).astype(int))
        if pieces.max() > 1:
            parts = [pts[i] + np.outer(np.arange(k) / k, seg[i]) for i, k in enumerate(pieces)]
            pts = np.vstack(parts + [pts[-1:]])
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        unit = seg / seglen[:, None]
        if len(pts) > 2:
            # C2 vertex tangents keep curvature continuous across vertices
            cum = np.concatenate(([0.0], np.cumsum(seglen)))
            tang = CubicSpline(cum, pts, bc_type="natural")(cum, 1)
            tang /= np.hypot(tang[:, 0], tang[:, 1])[:, None]
        else:
            tang = np.vstack([unit[0], unit[0]])
        self.points = pts
        self.seglen = seglen
        self.cum = np.concatenate(([0.0], np.cumsum(seglen)))
        self.length = float(self.cum[-1])
        self._m0 = tang[:-1] * seglen[:, None]
        self._m1 = tang[1:] * seglen[:, None]
        self._unit = unit

    @classmethod
    def from_lanes(cls, centerlines, extension: float = 0.0, joint_tol: float = JOINT_TOL):
        """Concatenate consecutive lane centerlines; joints must meet within ``joint_tol``."""
        out = [np.asarray(centerlines[0], dtype=float)]
        offsets = [0.0]
        total = float(np.sum(np.hypot(*np.diff(out[0], axis=0).T)))
        for line in centerlines[1:]:
            line = np.asarray(line, dtype=float)
            gap = float(np.hypot(*(line[0] - out[-1][-1])))
            if gap > joint_tol:
                raise FrenetError(f"lane joint gap {gap:.3f} m exceeds {joint_tol} m")
            offsets.append(total)
            total += float(np.sum(np.hypot(*np.diff(line, axis=0).T)))
            out.append(line[1:])
        pts = np.vstack(out)
        if extension > 0:
            d = pts[-1] - pts[-2]
            d = d / np.hypot(*d)
            pts = np.vstack([pts, pts[-1] + extension * d])
        frame = cls(pts)
        frame.lane_offsets = offsets
        return frame

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        i = np.minimum(np.maximum(np.searchsorted(self.cum, s, side="right") - 1, 0), len(self.seglen) - 1)
        u = (s - self.cum[i]) / self.seglen[i]
        return i, u

    def _eval(self, i, u, order=0):
        basis = (_hermite_basis, _hermite_basis_d1, _hermite_basis_d2)[order](u)
        h00, h10, h01, h11 = (np.asarray(b)[..., None] for b in basis)
        p = h00 * self.points[i] + h10 * self._m0[i] + h01 * self.points[i + 1] + h11 * self._m1[i]
        if order:
            p = p / (self.seglen[i][..., None] ** order)
        return p

    def point(self, s):
        i, u = self._locate(s)
        return self._eval(i, u)

    def tangent(self, s):
        i, u = self._locate(s)
        t = self._eval(i, u, 1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def normal(self, s):
        t = self.tangent(s)
        return np.stack([-t[..., 1], t[..., 0]], axis=-1)

    def ref_curvature(self, s):
        i, u = self._locate(s)
        d1 = self._eval(i, u, 1)
        d2 = self._eval(i, u, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def from_frenet(self, s, d):
        """Cartesian point(s) ``r(s) + d n(s)``; ``s`` must lie in ``[0, length]``."""
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-9) or np.any(s > self.length + 1e-9):
            raise FrenetError(f"s outside [0, {self.length:.3f}]")
        s = np.clip(s, 0.0, self.length)
        i, u = self._locate(s)
        p = self._eval(i, u)
        t = self._eval(i, u, 1)
        t = t / np.linalg.norm(t, axis=-1, keepdims=True)
        n = np.stack([-t[..., 1], t[..., 0]], axis=-1)
        return p + np.asarray(d, dtype=float)[..., None] * n

    def to_frenet(self, point) -> FrenetState:
        """Foot-point projection by polyline candidates and Newton refinement."""
        p = np.asarray(point, dtype=float)
        rel = p - self.points[:-1]
        t = np.minimum(np.maximum(np.einsum("ij,ij->i", rel, self._unit) / self.seglen, 0.0), 1.0)
        foot = self.points[:-1] + t[:, None] * (self.points[1:] - self.points[:-1])
        dist = np.hypot(*(p - foot).T)
        order = np.argsort(dist, kind="stable")[:3]
        best = None
        for i in order:
            i, u = int(i), float(t[i])
            for _ in range(30):
                r = self._eval(i, u)
                r1 = self._eval(i, u, 1) * self.seglen[i]
                r2 = self._eval(i, u, 2) * self.seglen[i] ** 2
                diff = r - p
                g = float(diff @ r1)
                h = float(r1 @ r1 + diff @ r2)
                step = g / h if h > 1e-12 else 0.0
                u_new = u - step
                if u_new < 0.0 and i > 0:
                    i -= 1
                    u_new = 1.0 + u_new * self.seglen[i + 1] / self.seglen[i]
                elif u_new > 1.0 and i < len(self.seglen) - 1:
                    i += 1
                    u_new = (u_new - 1.0) * self.seglen[i - 1] / self.seglen[i]
                u_new = min(max(u_new, 0.0), 1.0)
                if abs(u_new - u) * self.seglen[i] < 1e-12:
                    u = u_new
                    break
                u = u_new
            r = self._eval(i, u)
            tan = self._eval(i, u, 1)
            tan = tan / np.hypot(*tan)
            diff = p - r
            along = float(diff @ tan)
            s = float(self.cum[i] + u * self.seglen[i])
            gap = float(np.hypot(*diff))
            if best is None or gap < best[0] - 1e-12:
                best = (gap, s, float(tan[0] * diff[1] - tan[1] * diff[0]), along)
        gap, s, d, along = best
        if abs(along) > 1e-6 * max(1.0, gap):
            lo = max(0.0, s - 1.0)
            raise FrenetError(f"point projects outside the reference line near s in [{lo:.2f}, {s + 1.0:.2f}]")
        if abs(d) > MAX_OFFSET:
            raise FrenetError(f"point is {abs(d):.2f} m from the reference line near s={s:.2f}")
        return FrenetState(s, d)


@dataclass(frozen=True)
class CubicSegment:
    a: tuple
    b: tuple
    t_span: float

    def __post_init__(self):
        if not self.t_span > 0:
            raise ValueError("t_span must be positive")


def fit_cubic(p0, v0, a0, p1, v1, a1, t_span):
    """Cubic ``c0 + c1 t + c2 t^2 + c3 t^3`` matching position and velocity at both ends.

    Four coefficients fix four constraints; the boundary accelerations are
    not matched but their mismatch is returned for validation as
    ``(coeffs, (res_a0, res_a1))``.
    """
    if not t_span > 0:
        raise ValueError("t_span must be positive")
    T = float(t_span)
    dp = p1 - p0
    c2 = (3 * dp - (2 * v0 + v1) * T) / (T * T)
    c3 = (-2 * dp + (v0 + v1) * T) / (T * T * T)
    coeffs = np.array([p0, v0, c2, c3], dtype=float)
    res = (2 * c2 - a0, 2 * c2 + 6 * c3 * T - a1)
    return coeffs, res


def eval_cubic(coeffs, t, order: int = 0):
    c0, c1, c2, c3 = coeffs
    if order == 0:
        return c0 + t * (c1 + t * (c2 + t * c3))
    if order == 1:
        return c1 + t * (2 * c2 + 3 * c3 * t)
    return 2 * c2 + 6 * c3 * t


def curvature(positions, dt: float, speeds=None):
    """Path curvature from uniformly sampled positions by finite differences.

    Central differences at interior samples, one-sided at both ends. Samples
    slower than 0.1 m/s report zero curvature.
    """
    p = np.asarray(positions, dtype=float)
    n = len(p)
    if n < 3:
        raise ValueError("curvature needs at least 3 samples")
    vel = np.empty_like(p)
    acc = np.empty_like(p)
    vel[1:-1] = (p[2:] - p[:-2]) / (2 * dt)
    acc[1:-1] = (p[2:] - 2 * p[1:-1] + p[:-2]) / (dt * dt)
    vel[0] = (p[1] - p[0]) / dt
    vel[-1] = (p[-1] - p[-2]) / dt
    acc[0] = (p[2] - 2 * p[1] + p[0]) / (dt * dt)
    acc[-1] = (p[-1] - 2 * p[-2] + p[-3]) / (dt * dt)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    cross = np.abs(vel[:, 0] * acc[:, 1] - vel[:, 1] * acc[:, 0])
    kappa = np.zeros(n)
    ok = speed >= LOW_SPEED
    kappa[ok] = cross[ok] / speed[ok] ** 3
    return kappa


@dataclass
class FeasibilityReport:
    kappa_violations: np.ndarray
    ay_violations: np.ndarray
    max_kappa: float
    max_ay: float
    worst_kappa_index: int
    worst_ay_index: int

    @property
    def ok(self) -> bool:
        return self.kappa_violations.size == 0 and self.ay_violations.size == 0

    @property
    def violating(self) -> np.ndarray:
        return np.union1d(self.kappa_violations, self.ay_violations)


def check_feasibility(positions, speeds, limits: FeasibilityLimits, dt: float, tol: float = 1e-6) -> FeasibilityReport:
    """Flag samples whose curvature or lateral acceleration exceeds the limits."""
    kappa = curvature(positions, dt)
    v = np.asarray(speeds, dtype=float)
    ay = kappa * v * v
    kv = np.nonzero(kappa > limits.kappa_max + tol)[0]
    av = np.nonzero(ay > limits.a_y_max + tol)[0]
    return FeasibilityReport(
        kappa_violations=kv,
        ay_violations=av,
        max_kappa=float(kappa.max()) if kappa.size else 0.0,
        max_ay=float(ay.max()) if ay.size else 0.0,
        worst_kappa_index=int(np.argmax(kappa)) if kappa.size else -1,
        worst_ay_index=int(np.argmax(ay)) if ay.size else -1,
    )


def smoothstep(u):
    u = np.minimum(np.maximum(u, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


def smoothstep_slope(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


@dataclass
class LateralWindow:
    """Offset easing from ``offset`` at ``s_start`` to 0 at ``s_start + length``."""

    s_start: float
    length: float
    offset: float

    def d(self, s):
        return self.offset * (1.0 - smoothstep((np.asarray(s, dtype=float) - self.s_start) / self.length))

    def slope(self, s):
        u = (np.asarray(s, dtype=float) - self.s_start) / self.length
        return -self.offset * smoothstep_slope(u) / self.length


def pchip_slopes(t, y, secant=None):
    """Monotone (Fritsch-Carlson) knot slopes.

    ``secant`` may override the interval slopes when consecutive knots are
    measured in different frames.
    """
    t = np.asarray(t, dtype=float)
    h = np.diff(t)
    delta = np.diff(np.asarray(y, dtype=float)) / h if secant is None else np.asarray(secant, dtype=float)
    n = len(t)
    m = np.zeros(n)
    if n == 2:
        m[:] = delta[0]
        return m
    for k in range(1, n - 1):
        d0, d1 = delta[k - 1], delta[k]
        if d0 * d1 <= 0:
            m[k] = 0.0
        else:
            w1 = 2 * h[k] + h[k - 1]
            w2 = h[k] + 2 * h[k - 1]
            m[k] = (w1 + w2) / (w1 / d0 + w2 / d1)
    m[0] = _pchip_end(h[0], h[1], delta[0], delta[1])
    m[-1] = _pchip_end(h[-1], h[-2], delta[-1], delta[-2])
    return m


def _pchip_end(h0, h1, d0, d1):
    m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
    if m * d0 <= 0:
        return 0.0
    if d0 * d1 <= 0 and abs(m) > abs(3 * d0):
        return 3 * d0
    return m


# --- path smoothing ------------------------------------------------------


@dataclass
class Run:
    """A stretch of knots sharing one reference line."""

    frame: FrenetFrame
    first: int
    last: int
    s: np.ndarray = None
    d: np.ndarray = None
    windows: list = field(default_factory=list)
    cut: bool = False


@dataclass
class SmoothResult:
    samples: np.ndarray  # rows (t, x, y, v, heading)
    unsmoothable: int = 0
    dilation: float = 1.0
    max_kappa: float = 0.0
    max_ay: float = 0.0
    truncated: bool = False
    flags: List[str] = field(default_factory=list)


def _lane_sequence(topology, cids):
    seq = []
    for c in cids:
        if c < 0:
            continue
        lid = topology.lane_of[c]
        if not seq or seq[-1] != lid:
            seq.append(lid)
    return seq


def _build_runs(log, topology, knots):
    """Split knots at lateral transitions and give each run its reference line."""
    breaks = {}
    for ev in log.lateral:
        breaks[ev.tick] = ev
    runs = []
    start = 0
    pending = None
    for k, kn in enumerate(knots):
        ev = breaks.get(kn.tick)
        if ev is not None and k < len(knots) - 1:
            if k > start:
                runs.append((start, k, pending))
                start = k
            pending = ev
    runs.append((start, len(knots) - 1, pending))
    out = []
    for first, last, ev in runs:
        cids = [kn.cid for kn in knots[first : last + 1]]
        if ev is not None:
            cids = cids[1:]
        lanes = _lane_sequence(topology, cids)
        if not lanes:
            lanes = _lane_sequence(topology, [kn.cid for kn in knots[first : last + 1]])
        if not lanes:
            raise FrenetError("run has no lane reference")
        drift = any(kn.cid < 0 for kn in knots[first : last + 1])
        lines = [topology.map.lane(l).centerline for l in lanes]
        ext = 0.0
        if drift:
            ext = max(50.0, 2.0 * float(np.hypot(*(knots[last].xy - knots[first].xy))) + 50.0)
        frame = FrenetFrame.from_lanes(lines, extension=ext)
        frame.lane_index = {l: i for i, l in enumerate(lanes)}
        out.append((Run(frame, first, last), ev))
    return out


RAMP_LENGTH = 12.0


def _same(p, q):
    return abs(p[0] - q[0]) <= 1e-9 and abs(p[1] - q[1]) <= 1e-9


def _knot_frenet(run, knots, topology, ev, last_index, horizon_ticks=None):
    frame = run.frame
    idx = list(range(run.first, run.last + 1))
    s = np.empty(len(idx))
    d = np.zeros(len(idx))
    for i, k in enumerate(idx):
        kn = knots[k]
        lid = topology.lane_of[kn.cid] if kn.cid >= 0 else None
        if i > 0 and k != last_index and _same(kn.xy, knots[k - 1].xy):
            s[i], d[i] = s[i - 1], d[i - 1]
        elif k in (0, last_index) or lid not in frame.lane_index:
            # the agent's endpoints and off-grid knots use the exact projection
            s[i], d[i] = frame.to_frenet(kn.xy)
        elif kn.center:
            s[i] = min(frame.lane_offsets[frame.lane_index[lid]] + topology.s_center[kn.cid], frame.length)
        else:
            # a mid-cell stop sits on the chord between centres; keep it on the centreline
            s[i] = frame.to_frenet(kn.xy).s
    if run.last == last_index:
        # a hold at the very end shares the final knot's exact coordinates
        for i in range(len(idx) - 2, -1, -1):
            if not _same(knots[idx[i]].xy, knots[last_index].xy):
                break
            s[i], d[i] = s[-1], d[-1]
    room = s[-1] - s[0]
    windows = []
    if ev is not None:
        cut = horizon_ticks is not None and run.last == last_index and knots[-1].tick >= horizon_ticks - 1
        # a maneuver cut by the horizon keeps its shape and ends mid-transition
        run.cut = cut and room < ev.length
        length = ev.length if run.cut else min(ev.length, room)
        windows.append((LateralWindow(s_start=s[0], length=max(length, 1e-6), offset=d[0]), 0.0))
    elif run.first == 0 and d[0] != 0.0:
        windows.append((LateralWindow(s_start=s[0], length=max(min(RAMP_LENGTH, room), 1e-6), offset=d[0]), 0.0))
    if run.last == last_index and not run.cut and d[-1] != 0.0:
        # blend into the exact end offset over the last stretch of the run
        length = max(min(RAMP_LENGTH, room), 1e-6)
        windows.append((LateralWindow(s_start=s[-1] - length, length=length, offset=-d[-1]), d[-1]))
    run.windows = windows
    if windows:
        d = _window_sum(windows, s)[0]
    run.s, run.d = s, d


def _window_sum(windows, s):
    d = np.zeros_like(s)
    g = np.zeros_like(s)
    for win, const in windows:
        d += const + win.d(s)
        g += win.slope(s)
    return d, g


def _lateral_slopes(run):
    if not run.windows:
        return np.zeros_like(run.s)
    return _window_sum(run.windows, run.s)[1]


def smooth_path(log, topology, limits: FeasibilityLimits, dt: float, horizon_ticks: Optional[int] = None,
                scale: float = 0.9, max_iter: int = 10, v_floor: float = 1.0) -> SmoothResult:
    """Continuous trajectory through the cell-transition knots of one agent.

    ``log`` supplies ``knots`` (tick, xy, cid, center flag) and ``lateral``
    transition events. Segments whose samples break the curvature or
    lateral-acceleration limits are slowed by ``scale`` per iteration until
    feasible or until their mean speed would drop below ``v_floor``; those
    still infeasible keep the raw discrete segment and are counted as
    unsmoothable.
    """
    knots = _dedupe(log.knots)
    if len(knots) < 2:
        return SmoothResult(samples=log.raw_samples(dt))
    last_index = len(knots) - 1
    runs = _build_runs(log, topology, knots)
    for run, ev in runs:
        _knot_frenet(run, knots, topology, ev, last_index, horizon_ticks)
    # per-interval longitudinal increments, measured in the run holding both knots
    ds = np.empty(last_index)
    run_of_interval = np.empty(last_index, dtype=int)
    for r, (run, _) in enumerate(runs):
        for k in range(run.first, run.last):
            ds[k] = run.s[k + 1 - run.first] - run.s[k - run.first]
            run_of_interval[k] = r
    ticks = np.array([kn.tick for kn in knots], dtype=float)
    durations = np.diff(ticks) * dt
    stretch = np.ones(last_index)
    result = SmoothResult(samples=np.empty((0, 5)))
    flagged = np.zeros(last_index, dtype=bool)
    for it in range(max_iter + 1):
        h = durations * stretch
        times = np.concatenate(([ticks[0] * dt], ticks[0] * dt + np.cumsum(h)))
        secant = ds / h
        m = pchip_slopes(times, np.concatenate(([0.0], np.cumsum(ds))), secant)
        samples, seg_of_sample = _sample(runs, knots, times, ds, m, dt, run_of_interval, horizon_ticks)
        rep = check_feasibility(samples[:, 1:3], samples[:, 3], limits, dt) if len(samples) >= 3 else None
        if rep is None or rep.ok:
            break
        bad = np.unique(seg_of_sample[rep.violating])
        bad = bad[bad >= 0]
        mean_speed = np.abs(ds[bad]) / (h[bad])
        can = bad[(mean_speed * scale >= v_floor) & ~flagged[bad]]
        stuck = bad[(mean_speed * scale < v_floor)]
        flagged[stuck] = True
        if it == max_iter or can.size == 0:
            flagged[bad] = True
            break
        stretch[can] /= scale
    if flagged.any() and rep is not None and not rep.ok:
        bad_now = np.unique(seg_of_sample[rep.violating])
        bad_now = bad_now[bad_now >= 0]
        if bad_now.size:
            samples = _splice_raw(samples, seg_of_sample, bad_now, log, dt)
            result.unsmoothable = int(bad_now.size)
            result.flags.append(f"{bad_now.size} segment(s) kept raw")
    if any(run.cut for run, _ in runs):
        result.flags.append("lateral transition cut by the horizon")
    result.samples = samples
    result.dilation = float(np.sum(durations * stretch) / max(np.sum(durations), 1e-12))
    if rep is not None:
        result.max_kappa, result.max_ay = rep.max_kappa, rep.max_ay
    total_t = ticks[0] * dt + np.sum(durations * stretch)
    if horizon_ticks is not None and total_t > (horizon_ticks - 1) * dt + 1e-9:
        result.truncated = True
    return result


def _dedupe(knots):
    out = []
    for kn in knots:
        if out and out[-1].tick == kn.tick:
            # leaving the grid keeps the lane reference of the departure point
            if not (kn.cid < 0 <= out[-1].cid and _same(kn.xy, out[-1].xy)):
                out[-1] = kn
        else:
            out.append(kn)
    return out


def _sample(runs, knots, times, ds, m, dt, run_of_interval, horizon_ticks):
    t0 = times[0]
    t_end = times[-1]
    if horizon_ticks is not None:
        t_end = min(t_end, (horizon_ticks - 1) * dt)
    n = int(math.floor((t_end - t0) / dt + 1e-9)) + 1
    ts = t0 + np.arange(n) * dt
    seg = np.minimum(np.maximum(np.searchsorted(times, ts, side="right") - 1, 0), len(times) - 2)
    if n and abs(ts[-1] - times[-1]) < 1e-9:
        seg[-1] = len(times) - 2
    out = np.empty((n, 5))
    out[:, 0] = ts
    xy = np.empty((n, 2))
    vel = np.empty((n, 2))
    for r, (run, _) in enumerate(runs):
        sel = np.nonzero(run_of_interval[seg] == r)[0]
        if sel.size == 0:
            continue
        k = seg[sel]
        local = k - run.first
        tau = ts[sel] - times[k]
        s_vals = np.empty(sel.size)
        s_rate = np.empty(sel.size)
        for kk in np.unique(k):
            j = kk - run.first
            coeffs, _ = fit_cubic(run.s[j], m[kk], 0.0, run.s[j + 1], m[kk + 1], 0.0, times[kk + 1] - times[kk])
            mask = k == kk
            s_vals[mask] = eval_cubic(coeffs, tau[mask])
            s_rate[mask] = eval_cubic(coeffs, tau[mask], 1)
        d_vals, d_slope = _lateral(run, s_vals, local)
        s_vals = np.clip(s_vals, 0.0, run.frame.length)
        xy[sel] = run.frame.from_frenet(s_vals, d_vals)
        # velocity: ds/dt along the offset curve plus the lateral slope term
        t_hat = run.frame.tangent(s_vals)
        n_hat = np.stack([-t_hat[:, 1], t_hat[:, 0]], axis=-1)
        kap = run.frame.ref_curvature(s_vals)
        vel[sel] = (s_rate * (1.0 - kap * d_vals))[:, None] * t_hat + (d_slope * s_rate)[:, None] * n_hat
    out[:, 1:3] = xy
    speed = np.hypot(vel[:, 0], vel[:, 1])
    out[:, 3] = speed
    heading = np.arctan2(vel[:, 1], vel[:, 0])
    for i in range(n):
        if speed[i] < LOW_SPEED:
            heading[i] = heading[i - 1] if i > 0 else _first_heading(runs)
    out[:, 4] = heading
    return out, seg


def _first_heading(runs):
    frame = runs[0][0].frame
    t = frame.tangent(runs[0][0].s[0])
    return float(math.atan2(t[1], t[0]))


def _lateral(run, s_vals, local):
    """Offset and its slope in ``s``, piecewise cubic in ``s`` between knots."""
    d_k = run.d
    g_k = _lateral_slopes(run)
    d = np.empty_like(s_vals)
    g = np.empty_like(s_vals)
    if not np.any(d_k) and not np.any(g_k):
        d[:] = 0.0
        g[:] = 0.0
        return d, g
    for j in np.unique(local):
        span = run.s[j + 1] - run.s[j]
        mask = local == j
        if span <= 1e-9:
            d[mask] = d_k[j]
            g[mask] = 0.0
            continue
        coeffs, _ = fit_cubic(d_k[j], g_k[j], 0.0, d_k[j + 1], g_k[j + 1], 0.0, span)
        x = np.clip(s_vals[mask] - run.s[j], 0.0, span)
        d[mask] = eval_cubic(coeffs, x)
        g[mask] = eval_cubic(coeffs, x, 1)
    return d, g


def _splice_raw(samples, seg_of_sample, bad, log, dt):
    raw = log.raw_samples(dt)
    lookup = {round(r[0] / dt): r for r in raw}
    out = samples.copy()
    for i in np.nonzero(np.isin(seg_of_sample, bad))[0]:
        row = lookup.get(round(out[i, 0] / dt))
        if row is not None:
            out[i] = row
    return out
