import math

import numpy as np
import pytest

from scenegrid.grid import (
    FREE,
    GENERATED,
    ORIGINAL,
    CellRef,
    OccupancyLedger,
    build_grid,
    cell_lengths,
    map_original_agents,
)

from conftest import straight_map


def test_cell_lengths_examples():
    assert cell_lengths(40.0, 4.0).tolist() == [4.0] * 10
    eleven = cell_lengths(41.0, 4.0)
    assert len(eleven) == 11 and eleven[-1] == pytest.approx(1.0)
    assert cell_lengths(2.0, 4.0).tolist() == [2.0]
    with pytest.raises(ValueError):
        cell_lengths(10.0, 0.0)


def test_cell_lengths_random(rng):
    for L in rng.uniform(2, 500, 200):
        c = cell_lengths(L, 4.0)
        assert len(c) == math.ceil(L / 4.0)
        assert abs(c.sum() - L) < 1e-9
        assert np.all(c > 0) and np.all(c <= 4.0 + 1e-12)


def test_links_on_single_lane():
    topo = build_grid(straight_map(40.0, successor="N"))
    nb = topo.neighbors(CellRef("L0", 3))
    assert nb.forward == CellRef("L0", 4)
    last = topo.neighbors(CellRef("L0", 9))
    assert last.forward is None and last.successors == [CellRef("N", 0)]
    with pytest.raises(KeyError):
        topo.cell_id(CellRef("L0", 10))


def test_corridor_lateral_links(corridor):
    topo = build_grid(corridor)
    # hand enumeration: the lane with both neighbours is the middle one
    middle = [l.id for l in corridor.lanes if l.left_neighbor and l.right_neighbor]
    assert len(middle) == 1
    nb = topo.neighbors(CellRef(middle[0], 5))
    assert len(nb.lateral) == 2
    assert {r.index for r in nb.lateral} == {5}
    edges = [l.id for l in corridor.lanes if l.id != middle[0]]
    for lid in edges:
        assert len(topo.neighbors(CellRef(lid, 5)).lateral) == 1


def test_no_topology_keeps_only_forward_links(corridor):
    topo = build_grid(corridor, use_topology=False)
    assert all(l < 0 for l in topo.left) and all(r < 0 for r in topo.right)
    assert all(s == () for s in topo.successors)
    assert sum(f >= 0 for f in topo.forward) == len(topo) - len(corridor)


def test_stationary_original_maps_to_nearest_cell():
    topo = build_grid(straight_map(40.0))
    centre = topo.cell(CellRef("L0", 2)).center
    track = np.array([[t * 0.1, centre[0], centre[1], 0.0, 0.0] for t in range(20)])
    ledger = OccupancyLedger(topo)
    for t in range(20):
        map_original_agents(topo, {"o": track}, t, ledger)
        # exhaustive nearest-cell scan
        d = np.hypot(*(topo.center - np.asarray(centre)).T)
        assert ledger.sigma(int(np.argmin(d))) == ORIGINAL
        assert ledger.sigma(CellRef("L0", 2)) == ORIGINAL


def test_crossing_hands_over_cleanly():
    topo = build_grid(straight_map(40.0))
    track = np.array([[t * 0.1, 9.0 + 1.0 * t, 0.0, 10.0, 0.0] for t in range(6)])
    ledger = OccupancyLedger(topo)
    seen = []
    for t in range(6):
        map_original_agents(topo, {"o": track}, t, ledger)
        held = [c for c in ledger.occupied_cells()]
        assert len(held) == 1
        seen.append(held[0])
    assert seen[0] == topo.cell_id(CellRef("L0", 2)) and seen[-1] == topo.cell_id(CellRef("L0", 3))


def test_two_originals_distinct_owners():
    topo = build_grid(straight_map(40.0))
    tracks = {
        "a": np.array([[0.0, 2.0, 0.0, 0.0, 0.0]]),
        "b": np.array([[0.0, 30.0, 0.0, 0.0, 0.0]]),
        "far": np.array([[0.0, 30.0, 50.0, 0.0, 0.0]]),
    }
    ledger = OccupancyLedger(topo)
    assignment, skipped = map_original_agents(topo, tracks, 0, ledger)
    assert skipped == 1 and set(assignment) == {"a", "b"}
    assert ledger.owner(assignment["a"]) == "a" and ledger.owner(assignment["b"]) == "b"


def test_ledger_claims():
    topo = build_grid(straight_map(40.0))
    ledger = OccupancyLedger(topo)
    c0, c1 = topo.cell_id(CellRef("L0", 0)), topo.cell_id(CellRef("L0", 1))
    assert ledger.sigma(c0) == FREE
    assert ledger.try_claim(c0, 0, "g", GENERATED) and ledger.sigma(c0) == GENERATED
    assert ledger.try_claim(c1, 0, "o", ORIGINAL)
    assert not ledger.try_claim(c1, 1, "g2", GENERATED)
    # a recorded agent takes a generated agent's cell and queues it for replanning
    assert ledger.try_claim(c0, 1, "o", ORIGINAL)
    assert ledger.owner(c0) == "o" and ledger.evicted == ["g"]
    assert ledger.cell_of("g") is None and ledger.sigma(c1) == FREE


def test_ledger_moves_release_previous_cell():
    topo = build_grid(straight_map(40.0))
    ledger = OccupancyLedger(topo)
    for j in range(10):
        assert ledger.try_claim(CellRef("L0", j), j, "g", GENERATED)
        assert list(ledger.occupied_cells()) == [j]


def test_non_exclusive_ledger_accepts_shared_cells():
    topo = build_grid(straight_map(40.0))
    ledger = OccupancyLedger(topo, exclusive=False)
    assert ledger.try_claim(0, 0, "a", GENERATED)
    assert ledger.try_claim(0, 0, "b", GENERATED)
    assert set(ledger.holders(0)) == {"a", "b"}
