import json

import numpy as np
import pytest

from scenegrid.mapmodel import (
    Lane,
    MapModel,
    MapParseError,
    MapValidationError,
    arc_length_param,
    estimate_lane_width,
    map_from_dict,
    map_to_dict,
    point_at_arclength,
)

from conftest import straight_map


def random_polyline(rng, n):
    steps = rng.uniform(0.5, 3.0, size=(n - 1, 1)) * np.column_stack(
        [np.cos(a := rng.uniform(-1, 1, n - 1)), np.sin(a)]
    )
    return np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])


def test_single_straight_lane():
    m = map_from_dict({"lanes": [{"id": "A", "centerline": [[0, 0], [40, 0]]}]})
    assert len(m) == 1
    assert m.lane("A").length == 40.0


def test_missing_successor_is_named():
    doc = {"lanes": [{"id": "A", "centerline": [[0, 0], [40, 0]], "successors": ["L99"]}]}
    with pytest.raises(MapValidationError, match="L99") as err:
        map_from_dict(doc)
    assert err.value.lane_id == "L99"


def test_unmirrored_neighbor_rejected():
    doc = {"lanes": [
        {"id": "A", "centerline": [[0, 0], [40, 0]], "left_neighbor": "B"},
        {"id": "B", "centerline": [[0, 3.5], [40, 3.5]]},
    ]}
    with pytest.raises(MapValidationError, match="not mirrored"):
        map_from_dict(doc)


def test_malformed_documents():
    with pytest.raises(MapParseError):
        map_from_dict({"roads": []})
    with pytest.raises(MapParseError):
        map_from_dict({"lanes": [{"id": "A", "centerline": [[0, 0, 0], [1, 1, 1]]}]})
    with pytest.raises(MapParseError):
        map_from_dict({"lanes": [{"centerline": [[0, 0], [1, 0]]}]})


def test_corridor_schema_walk(corridor_doc, corridor):
    # independent walk over the raw JSON, not the parsed model
    lanes = {d["id"]: d for d in corridor_doc["lanes"]}
    pairs = set()
    for lid, d in lanes.items():
        for side, back in (("left_neighbor", "right_neighbor"), ("right_neighbor", "left_neighbor")):
            other = d.get(side)
            if other is not None:
                assert lanes[other].get(back) == lid
                pairs.add(frozenset((lid, other)))
    assert len(lanes) == 3 and len(corridor) == 3
    assert len(pairs) == 2
    parsed = {frozenset((l.id, n)) for l in corridor.lanes for n in l.neighbors()}
    assert parsed == pairs


def test_arc_length_examples():
    t = arc_length_param([(0, 0), (3, 0), (3, 4)])
    assert t.cumulative_s.tolist() == [0, 3, 7] and t.total_length == 7.0
    assert arc_length_param([(0, 0), (1, 0)]).cumulative_s.tolist() == [0, 1]


def test_repeated_point_rejected():
    with pytest.raises(MapValidationError, match="repeated"):
        arc_length_param([(0, 0), (1, 0), (1, 0)])


def test_arc_length_matches_pairwise_sum(rng):
    pts = random_polyline(rng, 100)
    total = sum(float(np.sqrt((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2)) for a, b in zip(pts[:-1], pts[1:]))
    assert abs(arc_length_param(pts).total_length - total) < 1e-12


def test_point_at_arclength_examples():
    pts = [(0, 0), (3, 0), (3, 4)]
    t = arc_length_param(pts)
    assert np.allclose(point_at_arclength(t, pts, 5.0), (3, 2))
    assert np.allclose(point_at_arclength(t, pts, 0.0), (0, 0))
    assert np.allclose(point_at_arclength(t, pts, 7.0), (3, 4))
    with pytest.raises(ValueError):
        point_at_arclength(t, pts, 7.5)


def test_point_at_arclength_lies_on_polyline(rng):
    pts = random_polyline(rng, 30)
    t = arc_length_param(pts)
    for s in rng.uniform(0, t.total_length, 1000):
        p = point_at_arclength(t, pts, s)
        # distance to the nearest segment, brute force
        best = np.inf
        for a, b in zip(pts[:-1], pts[1:]):
            u = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
            best = min(best, np.linalg.norm(a + u * (b - a) - p))
        assert best < 1e-9


def test_lane_width():
    lane = Lane("A", [(0, 0), (40, 0)], left_boundary=np.array([(0, 1.75), (40, 1.75)]),
                right_boundary=np.array([(0, -1.75), (40, -1.75)]))
    assert estimate_lane_width(lane) == pytest.approx(3.5)
    assert estimate_lane_width(Lane("B", [(0, 0), (40, 0)])) == 3.5
    trap = Lane("C", [(0, 0), (40, 0)], left_boundary=np.array([(0, 1.5), (40, 2.0)]),
                right_boundary=np.array([(0, -1.5), (40, -2.0)]))
    # mean of a linearly widening gap sampled at evenly paired points
    xs = np.linspace(0, 40, 32)
    assert abs(estimate_lane_width(trap) - np.mean(3.0 + xs / 40.0)) < 1e-9
    assert abs(estimate_lane_width(trap) - 3.5) < 1e-6


def test_projection_examples():
    m = straight_map()
    lid, s, d = m.project((3, 1))
    assert lid == "L0" and s == pytest.approx(3) and d == pytest.approx(1)
    assert abs(m.project((12.5, 0.0))[2]) < 1e-9
    with pytest.raises(ValueError):
        MapModel([]).project((0, 0))


def test_projection_matches_exhaustive_search(intersection, rng):
    lo = np.min([l.centerline.min(axis=0) for l in intersection.lanes], axis=0)
    hi = np.max([l.centerline.max(axis=0) for l in intersection.lanes], axis=0)
    pts = rng.uniform(lo, hi, size=(500, 2))
    lanes, s, _, dist = intersection.project_many(pts)
    for k, p in enumerate(pts):
        best = (np.inf, None, None)
        for lane in intersection.lanes:
            c = lane.centerline
            for i in range(len(c) - 1):
                a, b = c[i], c[i + 1]
                u = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
                dd = np.linalg.norm(a + u * (b - a) - p)
                if dd < best[0] - 1e-12:
                    best = (dd, lane.id, lane.arc.cumulative_s[i] + u * np.linalg.norm(b - a))
        assert abs(dist[k] - best[0]) < 1e-9
        assert lanes[k] == best[1]
        assert abs(s[k] - best[2]) < 1e-6


def test_json_round_trip(intersection):
    doc = map_to_dict(intersection)
    again = map_from_dict(json.loads(json.dumps(doc)))
    assert map_to_dict(again) == doc


def test_points_at_matches_scalar_lookup(intersection, rng):
    for lane in intersection.lanes:
        s = np.concatenate(([0.0, lane.length], rng.uniform(0, lane.length, 20), lane.arc.cumulative_s))
        pts, heads = lane.points_at(s)
        for k, v in enumerate(s):
            assert np.array_equal(pts[k], lane.point_at(v))
            assert heads[k] == lane.heading_at(v)
    with pytest.raises(ValueError):
        intersection.lanes[0].points_at([-1.0])
