"""Regenerate the recorded-agent fixture in ``src/scenegrid/data/originals``.

Each file replays straight east-west traffic through the bundled
intersection: per-lane platoons at constant speed with at least 14 m
between vehicles. Agent counts peak in the 31-40 bin, with two files above
40 so that a +10 enrichment pass pushes them past 50.
"""

from pathlib import Path

import numpy as np

from scenegrid.mapmodel import bundled_map_path, load_map
from scenegrid.scenario_io import AgentRecord, ScenarioFile, save_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "scenegrid" / "data" / "originals"
COUNTS = [22, 25, 27, 30, 31, 33, 34, 35, 36, 38, 42, 46]
ROUTES = [
    ("E_in_0", "E_st_0", "W_out_0"),
    ("E_in_1", "E_st_1", "W_out_1"),
    ("W_in_0", "W_st_0", "E_out_0"),
    ("W_in_1", "W_st_1", "E_out_1"),
]
GAP = 14.0
TICKS = 110
DT = 0.1


def route_line(model, lanes):
    pts = [model.lane(lanes[0]).centerline]
    for lid in lanes[1:]:
        pts.append(model.lane(lid).centerline[1:])
    pts = np.vstack(pts)
    cum = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))))
    return pts, cum


def main():
    model = load_map(bundled_map_path("intersection"))
    lines = [route_line(model, r) for r in ROUTES]
    rng = np.random.default_rng(2024)
    OUT.mkdir(parents=True, exist_ok=True)
    for f, count in enumerate(COUNTS):
        per = np.full(len(ROUTES), count // len(ROUTES))
        per[: count % len(ROUTES)] += 1
        agents = []
        for r, (pts, cum) in enumerate(lines):
            speed = rng.uniform(7.0, 10.0)
            slack = 200.0 - GAP * per[r]
            cuts = np.sort(rng.uniform(0.0, slack, per[r]))
            starts = cuts + GAP * np.arange(per[r])
            seg_heading = np.arctan2(np.diff(pts[:, 1]), np.diff(pts[:, 0]))
            for i, s0 in enumerate(starts):
                t = np.arange(TICKS) * DT
                s = s0 + speed * t
                x = np.interp(s, cum, pts[:, 0])
                y = np.interp(s, cum, pts[:, 1])
                k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg_heading) - 1)
                rows = np.column_stack([t, x, y, np.full_like(t, speed), seg_heading[k]])
                agents.append(AgentRecord(f"rec_{r}_{i:02d}", "original", "straight", rows))
        sf = ScenarioFile(map="bundled:intersection", agents=agents, metadata={"source": "synthetic recorded fixture"})
        save_scenario(OUT / f"recorded_{f:02d}.scenario.json", sf)
    print("wrote", len(COUNTS), "files to", OUT)


if __name__ == "__main__":
    main()
