import copy

import numpy as np
import pytest

from chpfreq.errors import ValidationError
from chpfreq.scenario import fixture_names, load_scenario, scenario_from_dict

from helpers import fixture_dict, make_scenario


def test_shipped_fixtures_load():
    assert {"paper_mode1", "paper_mode2", "paper_second_order", "null_scenario", "no_pump"} <= set(fixture_names())
    for name in fixture_names():
        load_scenario(name)


def test_paper_fixture_contents():
    sc = load_scenario("paper_mode1")
    assert sc.electric.n_bus == 3
    assert sc.heat.n_edges == 10
    assert len(sc.disturbances) == 1
    d = sc.disturbances[0]
    assert (d.time, d.target, d.index, d.magnitude) == (5.0, "bus", 1, 0.1)  # bus 2, zero-based 1
    assert list(sc.heat.source_edges) == [4, 8]  # edges 5 and 9
    assert sc.generator_cost.tolist() == [2.0, 1.0]
    assert sc.source_cost.tolist() == [0.5, 1.0]


def test_empty_schedule_is_valid():
    sc = make_scenario(disturbances=[])
    assert sc.disturbances == () and sc.last_disturbance_time == 0.0


@pytest.mark.parametrize("t", [-1.0, 500.0])
def test_schedule_outside_horizon(t):
    with pytest.raises(ValidationError, match="outside"):
        make_scenario(disturbances=[{"t": t, "bus": 2, "dp": 0.1}])


@pytest.mark.parametrize("section, patch, match", [
    ("electric", {"inertia_typo": 1.0}, "unknown field"),
    ("control", {"mode": 3}, "mode"),
    ("sim", {"dt": 0.0}, "dt"),
    ("control", {"generator_block": "third_order"}, "block kind"),
    ("control", {"second_order": {"tau": [1.0, 2.0]}}, "unknown field"),
    ("coupling", {"link_susceptance": -1.0}, "link_susceptance"),
])
def test_invalid_fields(section, patch, match):
    with pytest.raises(ValidationError, match=match):
        make_scenario(**{section: patch})


def test_unknown_top_level_key():
    data = copy.deepcopy(fixture_dict())
    data["extra"] = 1
    with pytest.raises(ValidationError, match="unknown"):
        scenario_from_dict(data)


def test_schema_version_checked():
    data = copy.deepcopy(fixture_dict())
    data["schema_version"] = 2
    with pytest.raises(ValidationError, match="schema_version"):
        scenario_from_dict(data)


def test_labels_are_one_based():
    with pytest.raises(ValidationError, match="one-based"):
        make_scenario(electric={"generators": [0, 1]})


@pytest.mark.parametrize("entry, match", [
    ({"t": 1.0, "bus": 2}, "dp"),
    ({"t": 1.0, "bus": 2, "edge": 3, "dp": 0.1}, "exactly one"),
    ({"t": 1.0, "edge": 5, "dh": 0.1}, "not a load edge"),
    ({"t": 1.0, "bus": 9, "dp": 0.1}, "does not exist"),
])
def test_bad_disturbances(entry, match):
    with pytest.raises(ValidationError, match=match):
        make_scenario(disturbances=[entry])


def test_mode2_needs_link():
    data = copy.deepcopy(fixture_dict())
    del data["coupling"]["link_susceptance"]
    data["control"]["mode"] = 2
    with pytest.raises(ValidationError, match="link_susceptance"):
        scenario_from_dict(data)


def test_heat_load_per_load_edge():
    sc = make_scenario(heat={"heat_load": [0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]})
    assert sc.heat.heat_load[2] == 0.2  # second load edge is edge 3
    with pytest.raises(ValidationError, match="heat_load"):
        make_scenario(heat={"heat_load": [0.0, 0.2]})


def test_parse_error_names_file(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("schema_version = 1\n[electric\n")
    with pytest.raises(ValidationError, match="broken.toml"):
        load_scenario(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/scenario.toml")


def test_mode2_scenario_grows_a_converter_bus():
    sc = load_scenario("paper_mode2")
    assert sc.mode == 2
    el = sc.electric_for_mode()
    assert el.n_bus == 4 and el.converters == (3,)
    assert np.array_equal(el.lines[-1], [2, 3])
