"""Batch generation, dataset evaluation, ablation pairs and distribution reports."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from .config import RunConfig, config_from_dict
from .metrics import MetricsReport, aggregate, scenario_metrics
from .policy import SHORT_LABEL, PolicyKind
from .scenario_io import (
    ScenarioFile,
    ScenarioFormatError,
    build_scenario_file,
    dumps,
    load_map_ref,
    load_scenario,
    loads,
    scenario_files,
)
from .synth import generate_scenario

DENSITY_BINS = ((0, 10), (11, 20), (21, 30), (31, 40), (41, 50), (51, None))


def density_label(lo, hi) -> str:
    return f">{lo - 1}" if hi is None else f"{lo}-{hi}"


def scenario_name(index: int) -> str:
    return f"scenario_{index:05d}.scenario.json"


@dataclass
class Rendered:
    index: int
    name: str
    text: str
    shortfall: int
    scenario: ScenarioFile


def originals_for(cfg: RunConfig, index: int) -> tuple:
    """Recorded tracks and source file used by scenario ``index``."""
    if not cfg.originals:
        return None, None
    files = scenario_files(cfg.originals)
    if not files:
        raise FileNotFoundError(f"no scenario files in originals dir {cfg.originals}")
    path = files[index % len(files)]
    return load_scenario(path).originals(), path.name


def render(cfg: RunConfig, index: int) -> Rendered:
    """Generate scenario ``index`` of a batch and serialise it."""
    originals, source = originals_for(cfg, index)
    sim = cfg.scenario_sim(index)
    model = load_map_ref(cfg.map)
    scenario = generate_scenario(model, originals, sim, cfg.decision, cfg.limits)
    meta = {
        "seed": sim.seed,
        "index": index,
        "originals_file": source,
        "config": cfg.echo(),
        "stats": scenario.stats.as_dict(),
    }
    sf = build_scenario_file(scenario, cfg.map, meta)
    return Rendered(index, scenario_name(index), dumps(sf), scenario.stats.shortfall, sf)


def _render_job(args):
    cfg, index = args
    r = render(cfg, index)
    r.scenario = None  # keep the pickle small; the text is authoritative
    return r


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def render_batch(cfg: RunConfig, workers: Optional[int] = None, keep_scenarios: bool = False) -> List[Rendered]:
    """All scenarios of a batch in index order; identical bytes for any worker count."""
    workers = workers or cfg.workers or default_workers()
    jobs = [(cfg, i) for i in range(cfg.n_scenarios)]
    if workers <= 1 or len(jobs) <= 1 or keep_scenarios:
        return [render(cfg, i) for _, i in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_render_job, jobs))


def write_batch(cfg: RunConfig, out_dir, workers: Optional[int] = None) -> List[Rendered]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = render_batch(cfg, workers)
    for r in results:
        (out / r.name).write_text(r.text)
    return results


def regenerate(path) -> str:
    """Recreate a scenario file's text from the config echo embedded in it."""
    sf = load_scenario(path)
    meta = sf.metadata
    cfg = config_from_dict(meta["config"])
    return render(cfg, int(meta["index"])).text


# --- evaluation -------------------------------------------------------------


def evaluate_scenarios(scenarios: Sequence[ScenarioFile], cfg: RunConfig, base_dirs=None):
    results = []
    for i, sf in enumerate(scenarios):
        base = base_dirs[i] if base_dirs else None
        model = load_map_ref(sf.map, base)
        results.append(
            scenario_metrics(
                sf.trajectories(),
                model.drivable_area,
                sf.dt,
                cfg.metrics.vehicle_length,
                cfg.metrics.vehicle_width,
                cfg.metrics.iou_threshold,
            )
        )
    return results


def evaluate_dir(data_dir, cfg: Optional[RunConfig] = None) -> MetricsReport:
    """Metrics over every readable scenario file; unreadable files are reported as skipped."""
    cfg = cfg or RunConfig()
    files = scenario_files(data_dir)
    if not files:
        raise FileNotFoundError(f"no scenario files in {data_dir}")
    loaded, bases, skipped = [], [], []
    for path in files:
        try:
            loaded.append(load_scenario(path))
            bases.append(path.parent)
        except ScenarioFormatError:
            skipped.append(path.name)
    if not loaded:
        raise FileNotFoundError(f"no readable scenario files in {data_dir}")
    results = evaluate_scenarios(loaded, cfg, bases)
    echo = {"metrics": cfg.echo()["metrics"], "dataset": loaded[0].metadata.get("config")}
    return aggregate(results, echo, skipped)


def ablation_pair(cfg: RunConfig, which: str, workers: Optional[int] = None) -> tuple:
    """Baseline and ablated reports on identical seeds."""
    ablated = cfg.with_ablation(which)
    reports = []
    for c in (cfg, ablated):
        rendered = render_batch(c, workers)
        scen = [loads(r.text) for r in rendered]
        reports.append(aggregate(evaluate_scenarios(scen, c), c.echo()))
    return reports[0], reports[1]


def ablation_table(which: str, base: MetricsReport, abl: MetricsReport) -> str:
    head = f"{'variant':<18} {'LO':>8} {'LA':>8} {'JE':>8} {'SCR':>8} {'ORR':>8}"
    rows = [head]
    for name, r in (("baseline", base), (f"w/o {which}", abl)):
        rows.append(f"{name:<18} {r.lo:8.3f} {r.la:8.3f} {r.je:8.3f} {r.scr:8.3f} {r.orr:8.3f}")
    return "\n".join(rows)


# --- distribution report ----------------------------------------------------


def distribution(scenarios: Sequence[ScenarioFile]) -> dict:
    """Agent-count histogram per scenario and label histogram per agent."""
    density = {density_label(lo, hi): 0 for lo, hi in DENSITY_BINS}
    behavior = {SHORT_LABEL[k]: 0 for k in PolicyKind}
    for sf in scenarios:
        n = len(sf.agents)
        for lo, hi in DENSITY_BINS:
            if n >= lo and (hi is None or n <= hi):
                density[density_label(lo, hi)] += 1
                break
        for a in sf.agents:
            behavior[SHORT_LABEL[PolicyKind(a.label)]] += 1
    return {"n_scenarios": len(scenarios), "density": density, "behavior": behavior}


def distribution_dir(data_dir) -> dict:
    files = scenario_files(data_dir)
    scen, skipped = [], []
    for path in files:
        try:
            scen.append(load_scenario(path))
        except ScenarioFormatError:
            skipped.append(path.name)
    out = distribution(scen)
    out["skipped"] = skipped
    return out


def distribution_table(dist: dict) -> str:
    lines = ["agents per scenario"]
    for k, v in dist["density"].items():
        lines.append(f"  {k:>6} {v:6d}")
    lines.append("behaviour labels")
    total = sum(dist["behavior"].values()) or 1
    for k, v in dist["behavior"].items():
        lines.append(f"  {k:>6} {v:6d} {v / total:7.3f}")
    return "\n".join(lines)
