import math
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from roverswarm.config import (
    REFERENCE_WEIGHTS,
    ScenarioConfig,
    builtin_scenarios,
    dump_scenario,
    load_scenario,
    parse_overrides,
)
from roverswarm.errors import ConfigError

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def test_builtin_values():
    sc = builtin_scenarios()
    assert (sc["sim1"].steps, sc["sim1"].target, sc["sim1"].min_tol) == (20, (-3.0, 11.0), 0.2)
    assert (sc["sim2"].steps, sc["sim2"].target, sc["sim2"].min_tol) == (30, (5.0, 24.0), 0.1)
    assert (sc["sim3"].a1, sc["sim3"].a2) == (0.25, 0.75)
    for ref in REFERENCE_WEIGHTS.values():
        assert ref.shape == (3, 4)
        assert abs(ref.sum(axis=1) - 1.0).max() < 1e-12


@pytest.mark.parametrize("name", ["sim1", "sim2", "sim3"])
def test_shipped_files_match_builtins(name):
    assert load_scenario(SCENARIO_DIR / f"{name}.ini") == builtin_scenarios()[name]


@pytest.mark.parametrize("name", ["sim1", "sim2", "sim3"])
def test_dump_round_trip(name, tmp_path):
    path = tmp_path / "s.ini"
    path.write_text(dump_scenario(builtin_scenarios()[name]))
    assert load_scenario(path) == builtin_scenarios()[name]


def test_overrides_apply():
    cfg = load_scenario("sim1", ["solver.max_iters=7", "scenario.target_x=-2", "smoothing.beta=20",
                                 "grid.cell_size=0.5"])
    assert cfg.solver.max_iters == 7
    assert cfg.target == (-2.0, 11.0)
    assert cfg.smoothing.beta == 20.0
    assert cfg.grid.cell_size == 0.5


def test_formation_override_in_degrees():
    cfg = load_scenario("sim1", ["formation.heading_deg=0, 0, 0, 90"])
    assert math.isclose(cfg.formation_headings[3], math.pi / 2)


def test_parse_overrides():
    assert parse_overrides(["a.b=1", "a.c = x y"]) == {"a": {"b": "1", "c": "x y"}}
    with pytest.raises(ConfigError):
        parse_overrides(["novalue"])
    with pytest.raises(ConfigError):
        parse_overrides(["nosection=1"])


@pytest.mark.parametrize("override, key", [
    ("solver.unknown=1", "solver.unknown"),
    ("bogus.x=1", "bogus"),
    ("scenario.steps=abc", "scenario.steps"),
    ("scenario.a1=0.9", "scenario.a1"),
    ("scenario.steps=5", "scenario.target_x"),
    ("scenario.min_tol=6", "scenario.min_tol"),
    ("scenario.phi1_variant=other", "scenario.phi1_variant"),
    ("scenario.weight_lower_bound=0.5", "scenario.weight_lower_bound"),
    ("formation.x=1, 2", "formation.x"),
    ("formation.z=1", "formation.z"),
])
def test_bad_overrides_name_the_key(override, key):
    with pytest.raises(ConfigError) as err:
        load_scenario("sim1", [override])
    assert err.value.key == key


def test_bad_solver_value_is_config_error():
    with pytest.raises(ConfigError):
        load_scenario("sim1", ["solver.max_iters=0"])


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.cfg")
    bad = tmp_path / "bad.ini"
    bad.write_text("no section header\n")
    with pytest.raises(ConfigError):
        load_scenario(bad)


def test_partial_file_uses_defaults(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text("[scenario]\nname = small\nsteps = 4\ntarget_x = 0\ntarget_y = 4\n")
    cfg = load_scenario(path)
    assert cfg.name == "small" and cfg.steps == 4 and cfg.min_tol == 0.2


@given(st.integers(1, 40), st.floats(0.0, 1.0), st.floats(0.05, 1.0), st.floats(1.1, 9.0))
def test_random_scenarios_round_trip(steps, a1, lo, hi):
    cfg = ScenarioConfig(steps=steps, a1=a1, a2=1.0 - a1, min_tol=lo, max_tol=hi, target=(0.0, float(steps)))
    assert dump_scenario(cfg) == dump_scenario(load_scenario_from_text(dump_scenario(cfg)))


def load_scenario_from_text(text):
    import configparser

    from roverswarm.config import scenario_from_sections

    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    return scenario_from_sections({s: dict(parser[s]) for s in parser.sections()})
