"""Regenerate the bundled synthetic maps in ``src/scenegrid/data``.

corridor3     three parallel eastbound lanes, 200 m
intersection  four-way junction, two lanes per direction on each arm,
              right-hand traffic, straight/left/right connectors
"""

import json
import math
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "scenegrid" / "data"
LANE_W = 3.5
HALF = 15.0  # junction box half-size
ARM = 150.0
ARC_STEP = 2.0


def _offset(points, dist):
    """Offset a polyline to its left by ``dist`` (negative = right)."""
    pts = np.asarray(points, float)
    d = np.gradient(pts, axis=0)
    d /= np.hypot(d[:, 0], d[:, 1])[:, None]
    normal = np.column_stack([-d[:, 1], d[:, 0]])
    return pts + dist * normal


def _r(v):
    return [[round(float(x), 6), round(float(y), 6)] for x, y in v]


def _lane(lid, center, lane_type="straight", **links):
    center = np.asarray(center, float)
    doc = {
        "id": lid,
        "centerline": _r(center),
        "left_boundary": _r(_offset(center, LANE_W / 2)),
        "right_boundary": _r(_offset(center, -LANE_W / 2)),
        "lane_type": lane_type,
        "successors": [],
        "predecessors": [],
        "left_neighbor": None,
        "right_neighbor": None,
        "neighbor_same_direction": {"left": True, "right": True},
    }
    doc.update(links)
    return doc


def corridor3():
    ys = [LANE_W, 0.0, -LANE_W]
    lanes = []
    for i, y in enumerate(ys):
        lanes.append(
            _lane(
                f"lane_{i}",
                [[0.0, y], [200.0, y]],
                left_neighbor=f"lane_{i - 1}" if i > 0 else None,
                right_neighbor=f"lane_{i + 1}" if i < 2 else None,
            )
        )
    top = ys[0] + LANE_W / 2
    area = [[[0.0, -top], [200.0, -top], [200.0, top], [0.0, top]]]
    return {"lanes": lanes, "drivable_area": area}


def _arc(center, radius, a0, a1):
    n = max(2, int(math.ceil(abs(a1 - a0) * radius / ARC_STEP))) + 1
    ang = np.linspace(a0, a1, n)
    return np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])


def _rot(points, k):
    c = round(math.cos(k * math.pi / 2))
    s = round(math.sin(k * math.pi / 2))
    pts = np.asarray(points, float)
    return np.column_stack([c * pts[:, 0] - s * pts[:, 1], s * pts[:, 0] + c * pts[:, 1]])


def intersection():
    arms = ["E", "N", "W", "S"]  # counter-clockwise, E rotated by k quarter turns
    offs = [LANE_W / 2, 1.5 * LANE_W]
    far = HALF + ARM
    lanes = {}
    for k, a in enumerate(arms):
        for i, y in enumerate(offs):
            # inbound travels -x on the north side of the east arm
            lanes[f"{a}_in_{i}"] = _lane(f"{a}_in_{i}", _rot([[far, y], [HALF, y]], k))
            lanes[f"{a}_out_{i}"] = _lane(f"{a}_out_{i}", _rot([[HALF, -y], [far, -y]], k))
        # connectors, expressed for the east approach and rotated
        straight = {i: _rot([[HALF, y], [-HALF, y]], k) for i, y in enumerate(offs)}
        right = _rot(_arc((HALF, HALF), HALF - offs[1], -math.pi / 2, -math.pi), k)
        left = _rot(_arc((HALF, -HALF), HALF + offs[0], math.pi / 2, math.pi), k)
        right_arm = arms[(k + 1) % 4]
        left_arm = arms[(k + 3) % 4]
        opp_arm = arms[(k + 2) % 4]
        for i in (0, 1):
            cid = f"{a}_st_{i}"
            lanes[cid] = _lane(cid, straight[i], predecessors=[f"{a}_in_{i}"], successors=[f"{opp_arm}_out_{i}"])
        lanes[f"{a}_rt"] = _lane(
            f"{a}_rt", right, "right_turn", predecessors=[f"{a}_in_1"], successors=[f"{right_arm}_out_1"]
        )
        lanes[f"{a}_lt"] = _lane(
            f"{a}_lt", left, "left_turn", predecessors=[f"{a}_in_0"], successors=[f"{left_arm}_out_0"]
        )
    for k, a in enumerate(arms):
        lanes[f"{a}_in_0"]["successors"] = [f"{a}_st_0", f"{a}_lt"]
        lanes[f"{a}_in_1"]["successors"] = [f"{a}_st_1", f"{a}_rt"]
        # inbound: inner lane is left of outer; opposing outbound lane sits left of the inner one
        lanes[f"{a}_in_1"]["left_neighbor"] = f"{a}_in_0"
        lanes[f"{a}_in_0"]["right_neighbor"] = f"{a}_in_1"
        lanes[f"{a}_in_0"]["left_neighbor"] = f"{a}_out_0"
        lanes[f"{a}_in_0"]["neighbor_same_direction"] = {"left": False, "right": True}
        lanes[f"{a}_out_0"]["left_neighbor"] = f"{a}_in_0"
        lanes[f"{a}_out_0"]["right_neighbor"] = f"{a}_out_1"
        lanes[f"{a}_out_0"]["neighbor_same_direction"] = {"left": False, "right": True}
        lanes[f"{a}_out_1"]["left_neighbor"] = f"{a}_out_0"
    for lane in lanes.values():
        for succ in lane["successors"]:
            if lane["id"] not in lanes[succ]["predecessors"]:
                lanes[succ]["predecessors"].append(lane["id"])
    w = 2 * LANE_W
    area = [[[-HALF, -HALF], [HALF, -HALF], [HALF, HALF], [-HALF, HALF]]]
    for k in range(4):
        area.append(_r(_rot([[HALF, -w], [far, -w], [far, w], [HALF, w]], k)))
    return {"lanes": [lanes[key] for key in sorted(lanes)], "drivable_area": area}


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    for name, builder in (("corridor3", corridor3), ("intersection", intersection)):
        path = DATA / f"{name}.json"
        path.write_text(json.dumps(builder(), indent=1) + "\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
