"""One-call scenario synthesis: engine run plus trajectory smoothing."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .engine import ScenarioStats, SimConfig, TrajectoryLog, run
from .frenet import FeasibilityLimits, FrenetError, smooth_path
from .grid import build_grid
from .mapmodel import MapModel
from .policy import DecisionParams


@dataclass
class AgentTrack:
    agent_id: str
    kind: str
    label: str
    samples: np.ndarray  # rows (t, x, y, v, heading)
    flags: list = field(default_factory=list)
    unsmoothable: int = 0
    max_kappa: float = 0.0
    max_ay: float = 0.0


@dataclass
class Scenario:
    tracks: Dict[str, AgentTrack]
    stats: ScenarioStats
    config: SimConfig
    log: Optional[TrajectoryLog] = None

    def trajectories(self) -> Dict[str, np.ndarray]:
        return {aid: t.samples for aid, t in self.tracks.items()}

    @property
    def unsmoothable(self) -> int:
        return sum(t.unsmoothable for t in self.tracks.values())


def generate_scenario(map_model: MapModel, originals: Optional[dict], config: SimConfig,
                      params: DecisionParams = DecisionParams(),
                      limits: FeasibilityLimits = FeasibilityLimits(), keep_log: bool = False) -> Scenario:
    """Run the engine and turn every generated agent's log into a trajectory.

    Recorded agents pass through unchanged. With ``disable_smoothing`` the
    generated agents keep their piecewise-linear cell-to-cell motion.
    """
    log, stats = run(map_model, originals, config, params, limits)
    topology = build_grid(map_model, config.ds, use_topology=not config.disable_topology)
    tracks: Dict[str, AgentTrack] = {}
    for aid in sorted(log.agents):
        alog = log.agents[aid]
        raw = alog.raw_samples(config.dt)
        track = AgentTrack(aid, alog.kind, alog.label, raw)
        if alog.kind == "generated" and not config.disable_smoothing:
            try:
                res = smooth_path(alog, topology, limits, config.dt, config.horizon)
            except FrenetError as exc:
                track.flags.append(f"kept raw: {exc}")
            else:
                track.samples = res.samples
                track.flags.extend(res.flags)
                track.unsmoothable = res.unsmoothable
                track.max_kappa, track.max_ay = res.max_kappa, res.max_ay
                if res.truncated:
                    track.flags.append("truncated at horizon")
        tracks[aid] = track
    return Scenario(tracks, stats, config, log if keep_log else None)
