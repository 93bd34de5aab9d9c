import json
import sys
from pathlib import Path

import numpy as np
import pytest

from scenegrid.mapmodel import bundled_map_path, load_map, map_from_dict

DATA = Path(__file__).resolve().parents[1] / "src" / "scenegrid" / "data"


@pytest.fixture(scope="session")
def corridor():
    return load_map(bundled_map_path("corridor3"))


@pytest.fixture(scope="session")
def intersection():
    return load_map(bundled_map_path("intersection"))


@pytest.fixture(scope="session")
def corridor_doc():
    return json.loads(bundled_map_path("corridor3").read_text())


def straight_map(length=40.0, lanes=1, width=3.5, successor=None):
    """Parallel eastbound lanes along the x-axis, lane 0 rightmost."""
    docs = []
    for k in range(lanes):
        y = k * width
        doc = {"id": f"L{k}", "centerline": [[0.0, y], [length, y]]}
        if k > 0:
            doc["right_neighbor"] = f"L{k - 1}"
        if k < lanes - 1:
            doc["left_neighbor"] = f"L{k + 1}"
        docs.append(doc)
    if successor:
        docs[0]["successors"] = [successor]
        docs.append({"id": successor, "centerline": [[length, 0.0], [length + 40.0, 0.0]], "predecessors": ["L0"]})
    area = [[[-1.0, -width], [length + 41.0, -width], [length + 41.0, lanes * width], [-1.0, lanes * width]]]
    return map_from_dict({"lanes": docs, "drivable_area": area})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results, key=lambda k: int(k[2:])):
        ok, detail = results[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")
