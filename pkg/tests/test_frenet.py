import numpy as np
import pytest
from scipy.special import fresnel

from scenegrid.engine import SimConfig
from scenegrid.frenet import (
    FeasibilityLimits,
    FrenetError,
    FrenetFrame,
    check_feasibility,
    curvature,
    eval_cubic,
    fit_cubic,
)
from scenegrid.metrics import agent_motion
from scenegrid.synth import generate_scenario

from conftest import straight_map

R = 20.0


def quarter_circle(n=2001, radius=R):
    a = np.linspace(0, np.pi / 2, n)
    return np.column_stack([radius * np.cos(a), radius * np.sin(a)])


@pytest.fixture(scope="module")
def straight_frame():
    return FrenetFrame([(0.0, 0.0), (50.0, 0.0), (100.0, 0.0)])


@pytest.fixture(scope="module")
def circle_frame():
    return FrenetFrame(quarter_circle())


def test_point_on_line_has_zero_offset(straight_frame):
    st = straight_frame.to_frenet((37.5, 0.0))
    assert st.s == pytest.approx(37.5, abs=1e-9) and abs(st.d) < 1e-9


def test_circle_offset_and_arc_position(circle_frame):
    # counter-clockwise travel: the centre lies to the left, so radius 19 is d = +1
    for ang in np.linspace(0.1, 1.4, 7):
        st = circle_frame.to_frenet((19 * np.cos(ang), 19 * np.sin(ang)))
        assert st.d == pytest.approx(1.0, abs=1e-6)
        assert st.s == pytest.approx(R * ang, abs=1e-6)


def test_projection_outside_line_raises(straight_frame):
    with pytest.raises(FrenetError, match="s in"):
        straight_frame.to_frenet((-5.0, 0.0))
    with pytest.raises(FrenetError):
        straight_frame.from_frenet(101.0, 0.0)


def test_joint_gap_rejected():
    with pytest.raises(FrenetError, match="joint gap"):
        FrenetFrame.from_lanes([[(0, 0), (10, 0)], [(11, 0), (20, 0)]])


@pytest.mark.parametrize("which", ["straight_frame", "circle_frame"])
def test_round_trip(which, request, rng):
    frame = request.getfixturevalue(which)
    s = rng.uniform(0.5, frame.length - 0.5, 5000)
    d = rng.uniform(-3.0, 3.0, 5000)
    xy = frame.from_frenet(s, d)
    for k in range(len(s)):
        st = frame.to_frenet(xy[k])
        assert abs(st.s - s[k]) < 1e-6 and abs(st.d - d[k]) < 1e-6
        assert np.linalg.norm(frame.from_frenet(st.s, st.d) - xy[k]) < 1e-6


def test_cubic_examples():
    c, _ = fit_cubic(0, 5, 0, 10, 5, 0, 2)
    assert np.allclose(c, (0, 5, 0, 0), atol=1e-12)
    c, _ = fit_cubic(0, 0, 0, 0, 0, 0, 1)
    assert np.all(c == 0)
    with pytest.raises(ValueError):
        fit_cubic(0, 0, 0, 1, 0, 0, 0)


def test_cubic_matches_linear_solve(rng):
    for _ in range(1000):
        p0, v0, p1, v1 = rng.uniform(-50, 50, 4)
        T = rng.uniform(0.1, 5.0)
        c, _ = fit_cubic(p0, v0, 0, p1, v1, 0, T)
        A = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, T, T**2, T**3], [0, 1, 2 * T, 3 * T**2]])
        ref = np.linalg.solve(A, [p0, v0, p1, v1])
        scale = max(1.0, np.abs(ref).max())
        assert np.max(np.abs(c - ref)) / scale < 1e-9
        res = [eval_cubic(c, 0) - p0, eval_cubic(c, 0, 1) - v0, eval_cubic(c, T) - p1, eval_cubic(c, T, 1) - v1]
        assert max(abs(r) for r in res) < 1e-9


def test_curvature_of_circle_and_line():
    dt, v = 0.1, 5.0
    a = v * np.arange(60) * dt / R
    k = curvature(np.column_stack([R * np.cos(a), R * np.sin(a)]), dt)
    assert np.allclose(k[1:-1], 1 / R, atol=1e-3)
    line = np.column_stack([np.arange(60) * 0.8, np.arange(60) * 0.3])
    assert np.max(np.abs(curvature(line, dt))) < 1e-9
    assert curvature(np.zeros((5, 2)), dt).tolist() == [0.0] * 5


def test_curvature_of_clothoid():
    A, v, dt = 30.0, 8.0, 0.1
    s = v * np.arange(100) * dt
    scale = A * np.sqrt(np.pi)
    S, C = fresnel(s / scale)
    k = curvature(np.column_stack([scale * C, scale * S]), dt)
    assert np.max(np.abs(k[1:-1] - s[1:-1] / A**2)) < 1e-2


def test_lateral_acceleration_limit():
    dt = 0.1
    for v, ok in ((5.0, True), (10.0, False)):
        a = v * np.arange(40) * dt / R
        pts = np.column_stack([R * np.cos(a), R * np.sin(a)])
        rep = check_feasibility(pts, np.full(40, v), FeasibilityLimits(), dt)
        assert rep.ok is ok
        assert rep.max_ay == pytest.approx(v * v / R, rel=1e-3)


def _scenario(m, **kw):
    return generate_scenario(m, None, SimConfig(**kw), keep_log=True)


def test_straight_constant_speed_is_unchanged():
    m = straight_map(200.0)
    sc = _scenario(m, n_generated=1, speed_range=(8.0, 8.0), behavior_mix={"straight": 1.0}, horizon=60)
    (aid,) = sc.tracks
    raw = sc.log.agents[aid].raw_samples(0.1)
    smooth = sc.tracks[aid].samples
    assert smooth.shape == raw.shape
    assert np.max(np.abs(smooth[:, :3] - raw[:, :3])) < 1e-6


def test_lane_change_is_feasible_and_monotone():
    m = straight_map(300.0, lanes=2)
    sc = _scenario(m, n_generated=1, seed=4, speed_range=(9.0, 9.0), behavior_mix={"lane_change": 1.0})
    (aid,) = sc.tracks
    tr = sc.tracks[aid]
    assert tr.label == "lane_change"
    y = tr.samples[:, 2]
    dy = np.diff(y)
    assert np.all(dy >= -1e-9) or np.all(dy <= 1e-9)
    assert abs(y[-1] - y[0]) == pytest.approx(3.5, abs=1e-6)
    rep = check_feasibility(tr.samples[:, 1:3], tr.samples[:, 3], FeasibilityLimits(), 0.1)
    assert rep.ok


def test_right_turn_jerk_is_reduced(intersection):
    raw_je, smooth_je = [], []
    for seed in range(4):
        sc = _scenario(intersection, n_generated=6, seed=seed, behavior_mix={"right_turn": 1.0})
        for aid, tr in sc.tracks.items():
            if tr.label != "right_turn":
                continue
            raw = agent_motion(sc.log.agents[aid].raw_samples(0.1), 0.1)
            smooth = agent_motion(tr.samples, 0.1)
            if raw is None or smooth is None or np.isnan(raw.je):
                continue
            raw_je.append(raw.je)
            smooth_je.append(smooth.je)
    assert raw_je
    assert np.mean(smooth_je) < np.mean(raw_je)


def test_endpoints_are_preserved(intersection):
    checked = 0
    for seed in range(3):
        sc = _scenario(intersection, n_generated=30, seed=seed)
        for aid, tr in sc.tracks.items():
            if tr.kind != "generated" or tr.flags:
                continue
            raw = sc.log.agents[aid].raw_samples(0.1)
            assert np.linalg.norm(tr.samples[0, 1:3] - raw[0, 1:3]) < 1e-6
            assert np.linalg.norm(tr.samples[-1, 1:3] - raw[-1, 1:3]) < 1e-6
            checked += 1
    assert checked > 30
