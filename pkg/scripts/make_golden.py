"""Rebuild the frozen evaluation fixture under ``tests/golden``.

Only run this when the scenario format or the metric definitions change on
purpose; the test suite compares against the committed files byte for byte.
"""

import json
import shutil
from pathlib import Path

from scenegrid.batch import evaluate_dir, write_batch
from scenegrid.config import config_from_dict

ROOT = Path(__file__).resolve().parents[1] / "tests" / "golden"


def main():
    scen = ROOT / "scenarios"
    if scen.exists():
        shutil.rmtree(scen)
    cfg = config_from_dict({"map": "bundled:corridor3", "n_scenarios": 3, "seed": 7, "sim": {"n_generated": 12}})
    write_batch(cfg, scen, workers=1)
    report = evaluate_dir(scen)
    (ROOT / "report.json").write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    print(report.table())


if __name__ == "__main__":
    main()
