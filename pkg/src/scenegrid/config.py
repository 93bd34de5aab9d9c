"""Run configuration: one JSON document covering engine, policy, limits and metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .engine import SimConfig
from .frenet import FeasibilityLimits
from .policy import DecisionParams

ABLATIONS = {
    "topology": "disable_topology",
    "collision": "disable_collision",
    "smooth": "disable_smoothing",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSettings:
    iou_threshold: float = 0.02
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0

    def __post_init__(self):
        if not (0 <= self.iou_threshold < 1):
            raise ValueError("iou_threshold must lie in [0, 1)")
        if self.vehicle_length <= 0 or self.vehicle_width <= 0:
            raise ValueError("vehicle footprint must be positive")


@dataclass
class RunConfig:
    """Everything a batch needs. ``out`` and ``workers`` are runtime-only and never echoed."""

    map: str = "bundled:corridor3"
    originals: Optional[str] = None
    n_scenarios: int = 1
    seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    decision: DecisionParams = field(default_factory=DecisionParams)
    limits: FeasibilityLimits = field(default_factory=FeasibilityLimits)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    out: Optional[str] = None
    workers: Optional[int] = None

    def validate(self) -> "RunConfig":
        if self.n_scenarios < 0:
            raise ConfigError("n_scenarios must be non-negative")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.sim.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if abs(self.sim.ds - self.decision.ds) > 1e-12:
            raise ConfigError("sim.ds and decision.ds must agree")
        return self

    def scenario_sim(self, index: int) -> SimConfig:
        """Engine settings for scenario ``index``; its seed is ``seed XOR index``."""
        return replace(self.sim, seed=(self.seed ^ index) % (2 ** 64))

    def with_ablation(self, which: str) -> "RunConfig":
        if which not in ABLATIONS:
            raise ConfigError(f"unknown ablation {which!r}; choose from {', '.join(sorted(ABLATIONS))}")
        return replace(self, sim=replace(self.sim, **{ABLATIONS[which]: True}))

    def echo(self) -> dict:
        """JSON-ready dump of every setting that influences generated content."""
        sim = asdict(self.sim)
        sim.pop("seed")
        sim["speed_range"] = list(sim["speed_range"])
        sim["behavior_mix"] = dict(sorted(sim["behavior_mix"].items()))
        return {
            "map": self.map,
            "originals": self.originals,
            "n_scenarios": self.n_scenarios,
            "seed": self.seed,
            "sim": sim,
            "decision": asdict(self.decision),
            "limits": asdict(self.limits),
            "metrics": asdict(self.metrics),
        }


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    kwargs = dict(data)
    if "speed_range" in kwargs:
        kwargs["speed_range"] = tuple(kwargs["speed_range"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r}: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    top = {"map", "originals", "n_scenarios", "seed", "sim", "decision", "limits", "metrics", "out", "workers"}
    unknown = set(data) - top
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(
        map=data.get("map", "bundled:corridor3"),
        originals=data.get("originals"),
        n_scenarios=int(data.get("n_scenarios", 1)),
        seed=int(data.get("seed", 0)),
        sim=_section(SimConfig, data.get("sim"), "sim"),
        decision=_section(DecisionParams, data.get("decision"), "decision"),
        limits=_section(FeasibilityLimits, data.get("limits"), "limits"),
        metrics=_section(MetricSettings, data.get("metrics"), "metrics"),
        out=data.get("out"),
        workers=data.get("workers"),
    )
    return cfg.validate()


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped in ``scenegrid/data/configs`` (``dense``)."""
    return Path(__file__).parent / "data" / "configs" / f"{name}.json"


def load_config(path) -> RunConfig:
    """Read a config file; ``bundled:<name>`` selects a shipped one."""
    if str(path).startswith("bundled:"):
        path = bundled_config_path(str(path).split(":", 1)[1])
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data)
