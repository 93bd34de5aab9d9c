"""Scenario files: one JSON document per scenario, sampled at 10 Hz."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .mapmodel import MapModel, bundled_map_path, load_map
from .policy import PolicyKind

SUFFIX = ".scenario.json"
FORMAT = "scenegrid-scenario"
OUTPUT_DT = 0.1
DIGITS = 6
KINDS = ("original", "generated")
LABELS = tuple(k.value for k in PolicyKind)


class ScenarioFormatError(ValueError):
    pass


@dataclass
class AgentRecord:
    id: str
    kind: str
    label: str
    samples: np.ndarray  # rows (t, x, y, v, heading)
    flags: List[str] = field(default_factory=list)

    def __eq__(self, other):
        return (
            isinstance(other, AgentRecord)
            and (self.id, self.kind, self.label, self.flags) == (other.id, other.kind, other.label, other.flags)
            and self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
        )


@dataclass
class ScenarioFile:
    map: str
    agents: List[AgentRecord]
    metadata: dict = field(default_factory=dict)
    dt: float = OUTPUT_DT

    def trajectories(self) -> Dict[str, np.ndarray]:
        return {a.id: a.samples for a in self.agents}

    def originals(self) -> Dict[str, np.ndarray]:
        return {a.id: a.samples for a in self.agents if a.kind == "original"}


def map_reference(ref: str, scenario_dir: Optional[Path] = None) -> str:
    """Reference stored in a scenario file: bundled name or a path relative to the file."""
    if ref.startswith("bundled:"):
        return ref
    path = Path(ref).resolve()
    if scenario_dir is None:
        return str(path)
    return os.path.relpath(path, Path(scenario_dir).resolve())


def resolve_map(ref: str, base_dir: Optional[Path] = None) -> Path:
    if ref.startswith("bundled:"):
        return bundled_map_path(ref.split(":", 1)[1])
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


_MAP_CACHE: Dict[str, MapModel] = {}


def load_map_ref(ref: str, base_dir: Optional[Path] = None) -> MapModel:
    path = resolve_map(ref, base_dir).resolve()
    key = str(path)
    if key not in _MAP_CACHE:
        _MAP_CACHE[key] = load_map(path)
    return _MAP_CACHE[key]


def downsample(samples: np.ndarray, dt: float, out_dt: float = OUTPUT_DT) -> np.ndarray:
    """Keep the rows that fall on the output clock."""
    ratio = out_dt / dt
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9:
        raise ScenarioFormatError(f"internal step {dt} does not divide the output step {out_dt}")
    if step == 1 or len(samples) == 0:
        return samples
    ticks = np.round(samples[:, 0] / dt).astype(int)
    return samples[ticks % step == 0]


def _round(samples: np.ndarray) -> list:
    return [[round(v, DIGITS) + 0.0 for v in row] for row in np.asarray(samples, dtype=float).tolist()]


def to_dict(sf: ScenarioFile) -> dict:
    return {
        "format": FORMAT,
        "version": 1,
        "map": sf.map,
        "dt": sf.dt,
        "metadata": sf.metadata,
        "agents": [
            {"id": a.id, "kind": a.kind, "label": a.label, "flags": list(a.flags), "samples": _round(a.samples)}
            for a in sf.agents
        ],
    }


def from_dict(doc: dict) -> ScenarioFile:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ScenarioFormatError("not a scenario document")
    try:
        agents = []
        seen = set()
        for a in doc["agents"]:
            aid = str(a["id"])
            if aid in seen:
                raise ScenarioFormatError(f"duplicate agent id {aid!r}")
            seen.add(aid)
            if a["kind"] not in KINDS:
                raise ScenarioFormatError(f"agent {aid}: unknown kind {a['kind']!r}")
            if a["label"] not in LABELS:
                raise ScenarioFormatError(f"agent {aid}: unknown label {a['label']!r}")
            samples = np.asarray(a["samples"], dtype=float).reshape(-1, 5)
            if len(samples) > 1 and np.any(np.diff(samples[:, 0]) <= 0):
                raise ScenarioFormatError(f"agent {aid}: samples are not strictly time-ordered")
            agents.append(AgentRecord(aid, a["kind"], a["label"], samples, list(a.get("flags", []))))
        return ScenarioFile(map=str(doc["map"]), agents=agents, metadata=dict(doc.get("metadata", {})),
                            dt=float(doc.get("dt", OUTPUT_DT)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioFormatError):
            raise
        raise ScenarioFormatError(f"malformed scenario document: {exc}") from None


def dumps(sf: ScenarioFile) -> str:
    return json.dumps(to_dict(sf), sort_keys=True, separators=(",", ":")) + "\n"


def loads(text: str) -> ScenarioFile:
    try:
        return from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(str(exc)) from None


def save_scenario(path, sf: ScenarioFile) -> None:
    Path(path).write_text(dumps(sf))


def load_scenario(path) -> ScenarioFile:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from None
    return from_dict(doc)


def scenario_files(directory) -> List[Path]:
    return sorted(Path(directory).glob("*" + SUFFIX))


def build_scenario_file(scenario, map_ref: str, metadata: dict) -> ScenarioFile:
    """Package a synthesized scenario for writing (10 Hz, fixed agent order)."""
    agents = []
    for aid in sorted(scenario.tracks):
        tr = scenario.tracks[aid]
        samples = downsample(np.asarray(tr.samples, dtype=float), scenario.config.dt)
        agents.append(AgentRecord(aid, tr.kind, tr.label, samples, list(tr.flags)))
    meta = dict(metadata)
    meta.setdefault("generator", f"scenegrid {__version__}")
    return ScenarioFile(map=map_ref, agents=agents, metadata=meta)
