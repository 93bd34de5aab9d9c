"""Command-line entry point: generate, evaluate, ablate, stats.

Exit codes: 0 success, 1 error, 2 partial generation (some scenarios could
not place every requested agent).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .batch import (
    ablation_pair,
    ablation_table,
    distribution_dir,
    distribution_table,
    evaluate_dir,
    regenerate,
    write_batch,
)
from .config import ABLATIONS, ConfigError, RunConfig, load_config
from .mapmodel import MapError, bundled_map_path
from .scenario_io import ScenarioFormatError, scenario_files

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors share the generic error code; 2 means partial generation
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _map_ref(value: str) -> str:
    name = value.split(":", 1)[1] if value.startswith("bundled:") else value
    path = Path(value)
    if not value.startswith("bundled:") and path.is_file():
        return str(path.resolve())
    if not bundled_map_path(name).is_file():
        raise ConfigError(f"map {value!r} is neither a file nor a bundled map")
    return f"bundled:{name}"


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {}
    if getattr(args, "map", None):
        updates["map"] = _map_ref(args.map)
    elif not cfg.map.startswith("bundled:"):
        updates["map"] = _map_ref(cfg.map)
    if getattr(args, "originals", None):
        updates["originals"] = args.originals
    if updates.get("originals", cfg.originals):
        orig = Path(updates.get("originals", cfg.originals))
        if not orig.is_dir():
            raise ConfigError(f"originals dir {orig} does not exist")
        updates["originals"] = str(orig.resolve())
    if getattr(args, "n", None) is not None:
        updates["n_scenarios"] = args.n
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        updates["workers"] = args.workers
    cfg = replace(cfg, **updates)
    sim_updates = {}
    if getattr(args, "agents", None) is not None:
        sim_updates["n_generated"] = args.agents
    if sim_updates:
        cfg = replace(cfg, sim=replace(cfg.sim, **sim_updates))
    return cfg.validate()


def cmd_generate(args) -> int:
    if args.replay:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        src = Path(args.replay)
        text = regenerate(src)
        (out / src.name).write_text(text)
        print(f"regenerated {src.name} -> {out / src.name}")
        return EXIT_OK
    cfg = _base_config(args)
    if cfg.originals and args.n is None and not (args.config and "n_scenarios" in json.loads(Path(args.config).read_text())):
        cfg = replace(cfg, n_scenarios=len(scenario_files(cfg.originals)))
    out = Path(args.out or cfg.out or "scenarios")
    results = write_batch(cfg, out, cfg.workers)
    short = [r for r in results if r.shortfall > 0]
    print(f"wrote {len(results)} scenario file(s) to {out}")
    if short:
        print(f"{len(short)} scenario(s) placed fewer agents than requested", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    report = evaluate_dir(args.data, cfg)
    print(report.table())
    if args.out:
        Path(args.out).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    if args.which not in ABLATIONS:
        raise ConfigError(f"unknown ablation {args.which!r}; choose from {', '.join(sorted(ABLATIONS))}")
    cfg = _base_config(args)
    base, abl = ablation_pair(cfg, args.which, cfg.workers)
    print(ablation_table(args.which, base, abl))
    if args.out:
        doc = {"which": args.which, "baseline": base.as_dict(), "ablated": abl.as_dict()}
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    if not Path(args.data).is_dir():
        raise FileNotFoundError(f"no such directory: {args.data}")
    dist = distribution_dir(args.data)
    print(distribution_table(dist))
    if dist["skipped"]:
        print(f"skipped {len(dist['skipped'])} unreadable file(s)", file=sys.stderr)
    out = Path(args.out) if args.out else Path(args.data) / "distribution.json"
    out.write_text(json.dumps(dist, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scenegrid", description="Grid-based traffic scenario synthesis")
    p.add_argument("--version", action="version", version=f"scenegrid {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthesize scenario files")
    g.add_argument("--config", help="run configuration (JSON)")
    g.add_argument("--map", help="map file or bundled map name")
    g.add_argument("--originals", help="directory of recorded scenario files to enrich")
    g.add_argument("--out", help="output directory")
    g.add_argument("-n", type=int, help="number of scenarios")
    g.add_argument("--seed", type=int)
    g.add_argument("--agents", type=int, help="generated agents per scenario")
    g.add_argument("--workers", type=int, help="parallel worker processes")
    g.add_argument("--replay", help="regenerate one scenario file from its embedded config")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="metrics over a directory of scenario files")
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--config", help="run configuration with metric settings")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("ablate", help="baseline versus one disabled module")
    a.add_argument("--config")
    a.add_argument("--which", required=True, help="topology, collision or smooth")
    a.add_argument("--map")
    a.add_argument("-n", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--agents", type=int)
    a.add_argument("--workers", type=int)
    a.add_argument("--out", help="write the JSON comparison here")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("stats", help="agent-count and behaviour histograms")
    s.add_argument("--data", required=True)
    s.add_argument("--out", help="plot-ready JSON output (default: <data>/distribution.json)")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MapError, ScenarioFormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"scenegrid {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
