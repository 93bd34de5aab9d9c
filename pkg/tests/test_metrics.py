import math

import numpy as np
import pytest
from shapely.geometry import Polygon

from scenegrid import kernels
from scenegrid.metrics import (
    OrientedBox,
    accel_from_positions,
    agent_motion,
    aggregate,
    collision_flags,
    jerk,
    lateral_accel,
    longitudinal_accel,
    obb_iou,
    offroad_count,
    offroad_rate,
    scenario_collision_rate,
    scenario_metrics,
)

BACKENDS = [pytest.param(kernels.python_backend, id="python")]
if kernels.compiled_backend is not None:
    BACKENDS.append(pytest.param(kernels.compiled_backend, id="cython"))


def shapely_iou(a, b):
    pa, pb = Polygon(kernels.python_backend.box_corners(*a)), Polygon(kernels.python_backend.box_corners(*b))
    inter = pa.intersection(pb).area
    union = pa.area + pb.area - inter
    return inter / union if union > 0 else 0.0


def even_odd(pt, poly):
    """Ray casting to +x; points on an edge count as inside."""
    x, y = pt
    inside = False
    n = len(poly)
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if abs(cross) < 1e-12 and min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2):
            return True
        if (y1 > y) != (y2 > y):
            xs = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xs:
                inside = not inside
    return inside


def random_boxes(rng, n, spread=6.0):
    return [(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(1, 5), rng.uniform(0.5, 2.5),
             rng.uniform(-np.pi, np.pi)) for _ in range(n)]


def test_accel_examples():
    dt = 0.1
    t = np.arange(20) * dt
    acc = accel_from_positions(np.column_stack([t * t, np.zeros_like(t)]), dt)
    assert np.allclose(acc[:, 0], 2.0, atol=1e-9) and np.allclose(acc[:, 1], 0.0)
    acc = accel_from_positions(np.column_stack([3 * t, -2 * t]), dt)
    assert np.allclose(acc, 0.0, atol=1e-9)
    t = np.arange(100) * dt
    w = 0.8
    acc = accel_from_positions(np.column_stack([5 * t, np.sin(w * t)]), dt)
    err = np.max(np.abs(acc[:, 1] + w * w * np.sin(w * t[1:-1])))
    # truncation error of the central second difference is at most w^4 dt^2 / 12
    assert err < 1e-3 and err <= w**4 * dt * dt / 12 + 1e-12


def test_projections():
    assert longitudinal_accel(2, 0.5, 0.0) == pytest.approx(2.0)
    assert longitudinal_accel(2, 0.5, np.pi / 2) == pytest.approx(0.5)
    assert longitudinal_accel(1, 1, np.pi / 4) == pytest.approx(math.sqrt(2))
    assert lateral_accel(2, 0.5, 0.0) == pytest.approx(0.5)
    assert lateral_accel(2, 0.5, np.pi / 2) == pytest.approx(2.0)


def test_rotation_invariance_and_decomposition(rng):
    ax, ay, th = rng.normal(size=(3, 1000))
    lo, la = longitudinal_accel(ax, ay, th), lateral_accel(ax, ay, th)
    assert np.allclose(lo**2 + la**2, ax**2 + ay**2, atol=1e-9)
    for phi in rng.uniform(-np.pi, np.pi, 10):
        rx = ax * np.cos(phi) - ay * np.sin(phi)
        ry = ax * np.sin(phi) + ay * np.cos(phi)
        assert np.max(np.abs(longitudinal_accel(rx, ry, th + phi) - lo)) < 1e-9
        assert np.max(np.abs(lateral_accel(rx, ry, th + phi) - la)) < 1e-9


def test_jerk_examples(rng):
    dt = 0.1
    assert np.allclose(jerk(np.full(10, 2.0), np.full(10, -1.0), dt), 0.0)
    t = np.arange(10) * dt
    assert np.allclose(jerk(3 * t, np.zeros(10), dt), 3.0)
    for _ in range(20):
        c = rng.normal(size=(3, 2))
        tt = np.arange(50) * dt
        xy = c[0] + np.outer(tt, c[1]) + np.outer(tt * tt, c[2])
        rows = np.column_stack([tt, xy, np.zeros(50), np.zeros(50)])
        assert agent_motion(rows, dt).je < 1e-6


def test_short_tracks():
    assert agent_motion(np.zeros((2, 5)), 0.1) is None
    three = np.array([[0, 0, 0, 1, 0], [0.1, 0.1, 0, 1, 0], [0.2, 0.2, 0, 1, 0]], dtype=float)
    assert math.isnan(agent_motion(three, 0.1).je)


@pytest.mark.parametrize("backend", BACKENDS)
def test_iou_examples(backend):
    a = (0.0, 0.0, 4.5, 2.0, 0.3)
    assert backend.obb_iou(a, a) == pytest.approx(1.0)
    assert backend.obb_iou(a, (20.0, 0.0, 4.5, 2.0, 0.0)) == 0.0
    sq1, sq2 = (0.5, 0.5, 1.0, 1.0, 0.0), (1.0, 0.5, 1.0, 1.0, 0.0)
    assert abs(backend.obb_iou(sq1, sq2) - 1 / 3) < 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_iou_matches_shapely(backend, rng):
    boxes = random_boxes(rng, 400, spread=2.0)
    for a, b in zip(boxes[::2], boxes[1::2]):
        v = backend.obb_iou(a, b)
        assert abs(v - shapely_iou(a, b)) < 1e-9
        assert abs(v - backend.obb_iou(b, a)) < 1e-12


def test_scr_examples():
    frame = {
        "a": OrientedBox(0, 0), "b": OrientedBox(1, 0),
        "c": OrientedBox(20, 0), "d": OrientedBox(40, 0),
    }
    assert scenario_collision_rate([[frame]]) == 0.5
    apart = {k: OrientedBox(10 * i, 0) for i, k in enumerate("abcd")}
    assert scenario_collision_rate([[apart, apart]]) == 0.0
    assert scenario_collision_rate([[apart], []]) == 0.0


def brute_force_scr(scenarios, thr):
    rates = []
    for frames in scenarios:
        ids = sorted({a for f in frames for a in f})
        hit = set()
        for f in frames:
            for a in f:
                for b in f:
                    if a < b and shapely_iou(f[a].as_tuple(), f[b].as_tuple()) > thr:
                        hit.update((a, b))
        if ids:
            rates.append(len(hit) / len(ids))
    return sum(rates) / len(rates)


@pytest.mark.parametrize("backend", BACKENDS)
def test_scr_matches_brute_force(backend, rng, monkeypatch):
    monkeypatch.setattr(kernels, "tick_collision_flags", backend.tick_collision_flags)
    scenarios = []
    for _ in range(10):
        n, T = int(rng.integers(2, 12)), int(rng.integers(1, 6))
        frames = []
        for _ in range(T):
            present = [f"v{i}" for i in range(n) if rng.random() < 0.8]
            frames.append({a: OrientedBox(*b) for a, b in zip(present, random_boxes(rng, len(present), 8.0))})
        scenarios.append(frames)
    assert scenario_collision_rate(scenarios, 0.02) == brute_force_scr(scenarios, 0.02)


def test_scr_monotone():
    frame = {"a": OrientedBox(0, 0), "b": OrientedBox(30, 0), "c": OrientedBox(60, 0)}
    before = scenario_collision_rate([[frame]])
    frame["d"] = OrientedBox(0.5, 0.2)
    assert scenario_collision_rate([[frame]]) >= before


def test_orr_examples():
    square = np.array([[0, 0], [10, 0], [10, 10], [0, 10]], dtype=float)
    inside = np.column_stack([np.linspace(1, 9, 10), np.full(10, 5.0)])
    assert offroad_rate([inside], [square]) == 0.0
    pts = inside.copy()
    pts[:2, 1] = -3.0
    assert offroad_rate([pts], [square]) == pytest.approx(0.2)
    assert offroad_count([[10.0, 5.0], [0.0, 0.0]], [square]) == 0  # boundary is on-road


@pytest.mark.parametrize("backend", BACKENDS)
def test_orr_matches_even_odd(backend, rng):
    ang = np.sort(rng.uniform(0, 2 * np.pi, 12))
    rad = rng.uniform(3, 10, 12)
    star = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    pts = rng.uniform(-11, 11, size=(10_000, 2))
    got = np.asarray(backend.points_in_polygon(pts, star), dtype=bool)
    want = np.array([even_odd(p, star) for p in pts])
    assert np.array_equal(got, want)


def test_straight_agent_scores_zero():
    t = np.arange(50) * 0.1
    rows = np.column_stack([t, 8 * t, np.zeros(50), np.full(50, 8.0), np.zeros(50)])
    area = [np.array([[-5, -5], [500, -5], [500, 5], [-5, 5]], dtype=float)]
    m = scenario_metrics({"a": rows}, area, 0.1)
    assert np.allclose((m.lo, m.la, m.je, m.scr, m.orr), 0.0, atol=1e-9)


def test_aggregate_skips_empty_scenarios(caplog):
    area = [np.array([[-5, -5], [5, -5], [5, 5], [-5, 5]], dtype=float)]
    full = scenario_metrics({"a": np.array([[0, 0, 0, 0, 0], [0.1, 9, 9, 0, 0]], dtype=float)}, area, 0.1)
    empty = scenario_metrics({}, area, 0.1)
    report = aggregate([full, empty])
    assert report.n_scenarios == 1 and report.orr == 0.5
    assert "excluded" in caplog.text
    assert set(report.as_dict()) >= {"lo", "la", "je", "scr", "orr", "n_scenarios", "n_agents", "config_echo"}


def test_collision_flags_cover_every_vehicle():
    frames = [{"a": OrientedBox(0, 0)}, {"a": OrientedBox(1, 0), "b": OrientedBox(1.5, 0)}]
    assert collision_flags(frames) == {"a": True, "b": True}
    assert obb_iou(OrientedBox(0, 0), OrientedBox(0, 0)) == pytest.approx(1.0)
