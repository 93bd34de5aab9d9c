import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenegrid.config import ConfigError, RunConfig, config_from_dict, load_config
from scenegrid.scenario_io import (
    AgentRecord,
    ScenarioFile,
    ScenarioFormatError,
    downsample,
    dumps,
    load_scenario,
    loads,
    save_scenario,
)

finite = st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)


@st.composite
def scenario_files(draw):
    agents = []
    for i in range(draw(st.integers(0, 4))):
        n = draw(st.integers(0, 6))
        rows = np.array([[k * 0.1, draw(finite), draw(finite), abs(draw(finite)), draw(st.floats(-3.14, 3.14))]
                         for k in range(n)]).reshape(-1, 5)
        rows = np.round(rows, 6) + 0.0
        agents.append(AgentRecord(f"a{i}", draw(st.sampled_from(["original", "generated"])),
                                  draw(st.sampled_from(["straight", "left_turn", "overtake"])), rows,
                                  draw(st.lists(st.text(max_size=8), max_size=2))))
    return ScenarioFile("bundled:corridor3", agents, {"seed": draw(st.integers(0, 2**63))})


@given(scenario_files())
@settings(max_examples=60, deadline=None)
def test_round_trip(sf):
    text = dumps(sf)
    again = loads(text)
    assert again.agents == sf.agents and again.metadata == sf.metadata and again.map == sf.map
    assert dumps(again) == text


def test_file_round_trip(tmp_path):
    rows = np.array([[0.0, 1.0, 2.0, 3.0, 0.5], [0.1, 1.3, 2.0, 3.0, 0.5]])
    sf = ScenarioFile("bundled:intersection", [AgentRecord("x", "generated", "right_turn", rows, ["note"])])
    path = tmp_path / "one.scenario.json"
    save_scenario(path, sf)
    assert load_scenario(path).agents == sf.agents


@pytest.mark.parametrize("doc, msg", [
    ({"format": "other"}, "not a scenario"),
    ({"format": "scenegrid-scenario", "map": "m", "agents": [{"id": "a", "kind": "ghost", "label": "straight",
                                                              "samples": []}]}, "unknown kind"),
    ({"format": "scenegrid-scenario", "map": "m", "agents": [{"id": "a", "kind": "original", "label": "straight",
                                                              "samples": [[0.1, 0, 0, 0, 0], [0.0, 0, 0, 0, 0]]}]},
     "time-ordered"),
    ({"format": "scenegrid-scenario", "map": "m"}, "malformed"),
])
def test_invalid_documents(doc, msg):
    with pytest.raises(ScenarioFormatError, match=msg):
        loads(json.dumps(doc))


def test_garbage_is_a_format_error(tmp_path):
    bad = tmp_path / "bad.scenario.json"
    bad.write_text("{not json")
    with pytest.raises(ScenarioFormatError):
        load_scenario(bad)


def test_downsample_keeps_output_clock():
    rows = np.column_stack([np.arange(10) * 0.05, np.arange(10), np.zeros((10, 3))])
    out = downsample(rows, 0.05)
    assert out[:, 0].tolist() == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4])
    with pytest.raises(ScenarioFormatError):
        downsample(rows, 0.03)


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        config_from_dict({"bogus": 1})
    with pytest.raises(ConfigError, match="unknown keys in 'sim'"):
        config_from_dict({"sim": {"warp": 9}})
    path = tmp_path / "c.json"
    path.write_text("{oops")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_validation():
    with pytest.raises(ConfigError):
        config_from_dict({"sim": {"dt": -1}})
    with pytest.raises(ConfigError):
        config_from_dict({"seed": -5})
    with pytest.raises(ConfigError):
        RunConfig().with_ablation("gravity")


def test_scenario_seed_is_xor_of_index():
    cfg = RunConfig(seed=0b1010)
    assert [cfg.scenario_sim(i).seed for i in range(4)] == [10, 11, 8, 9]


def test_echo_round_trips_through_config():
    cfg = config_from_dict({"map": "bundled:intersection", "seed": 5, "n_scenarios": 4,
                            "sim": {"n_generated": 9, "behavior_mix": {"straight": 1.0}}, "workers": 3,
                            "out": "/tmp/x"})
    echo = cfg.echo()
    assert "workers" not in echo and "out" not in echo and "seed" not in echo["sim"]
    assert config_from_dict(json.loads(json.dumps(echo))).echo() == echo
