import textwrap

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msnbargain import ScenarioFileError, dump_scenario, load_scenario, parse_scenario
from msnbargain.cli import preset_names, resolve_scenario

from conftest import random_scenario

MINIMAL = """\
users:
  - {energy_budget_joules: 300}
  - {energy_budget_joules: 500, sensitivity: 0.5}
data_size_mb: 10
"""


def parse(text):
    return parse_scenario(textwrap.dedent(text))


def problems_of(text):
    with pytest.raises(ScenarioFileError) as err:
        parse(text)
    return err.value.problems


def test_defaults():
    sc = parse(MINIMAL).scenario
    assert sc.airtime_horizon == 20 and sc.unit_reward == 0.01
    assert sc.unit_energy_send == 2.85 and sc.unit_energy_recv == 2.85
    assert sc.bargaining_power == (0.5, 0.5)
    assert sc.utility_params.normalized_cost
    assert [it.interested for it in sc.items] == [frozenset({1}), frozenset({0})]
    assert np.all(sc.capacity[~np.eye(2, dtype=bool)] == 4.0)


def test_bundled_reference_file():
    sf = resolve_scenario("preset:budget")
    sc = sf.scenario
    assert sc.n_users == 4
    assert sc.energy_budget.tolist() == [300, 500, 400, 400]
    assert sf.experiment.variable == "budget" and sf.experiment.user == 0
    assert list(sf.experiment.values) == [50, 100, 300, 500]
    assert resolve_scenario("preset:budget_insensitive").scenario.sensitivity.tolist() == [0, 1, 1, 1]


@pytest.mark.parametrize("name", preset_names())
def test_every_preset_loads(name):
    sf = resolve_scenario(f"preset:{name}")
    assert sf.scenario.n_users >= 2
    assert sf.experiment.variable is not None or name == "saturation"


def test_unknown_preset():
    with pytest.raises(ScenarioFileError):
        resolve_scenario("preset:nope")


def test_power_sum_error_names_field():
    probs = problems_of(MINIMAL + "bargaining_power: [0.5, 0.6]\n")
    assert len(probs) == 1
    assert "bargaining_power" in probs[0] and "line 5" in probs[0]


def test_power_fractions_accepted():
    sc = parse(MINIMAL + "bargaining_power: ['10/13', '3/13']\n").scenario
    assert sc.bargaining_power[0] == pytest.approx(10 / 13)


def test_owner_in_interested_rejected():
    text = """\
    users:
      - {energy_budget_joules: 300}
      - {energy_budget_joules: 500}
    items:
      - {owner: 1, size_mb: 5, interested: [1, 2]}
    """
    probs = problems_of(text)
    assert any("items[0].interested[0]" in p and "own item" in p and "line 5" in p for p in probs)


def test_unknown_key_rejected():
    probs = problems_of(MINIMAL + "airtime_horizon: 20\n")
    assert any("airtime_horizon" in p and "line" in p for p in probs)
    probs = problems_of(MINIMAL.replace("sensitivity: 0.5", "sensitivity: 0.5, colour: red"))
    # locations are positions in the file's lists, counted from 0
    assert any("users[1]" in p and "colour" in p and "line 3" in p for p in probs)


def test_problems_listed_exhaustively():
    text = """\
    users:
      - {energy_budget_joules: -3}
      - {energy_budget_joules: 500, sensitivity: 2}
    data_size_mb: 10
    unit_reward_per_mb: -1
    """
    probs = problems_of(text)
    assert len(probs) == 3
    assert all(p.startswith("line ") for p in probs)


def test_semantic_problems():
    text = """\
    users:
      - {energy_budget_joules: 300}
      - {energy_budget_joules: 500}
    link_capacity_mb_per_s: [[0, 1], [1, 0], [1, 1]]
    items:
      - {owner: 3, size_mb: 5, interested: [1]}
    experiment:
      sweep: {variable: budget, values: [1, 2]}
    """
    probs = problems_of(text)
    assert any("2x2" in p for p in probs)
    assert any("user 3 does not exist" in p for p in probs)
    assert any("needs a 'user'" in p for p in probs)


def test_yaml_syntax_error_has_line():
    probs = problems_of("users: [\n  {energy_budget_joules: 1}\n")
    assert "line" in probs[0] and "YAML" in probs[0]


def test_missing_file():
    with pytest.raises(ScenarioFileError) as err:
        load_scenario("/nonexistent/file.scn")
    assert "cannot read" in str(err.value)


def test_experiment_block():
    sf = resolve_scenario("preset:preference")
    exp = sf.experiment
    assert exp.variable == "preference_case"
    assert exp.values == ("1", "2", "3", "4")
    assert exp.cases["4"] == {"A(4,1)": (0, 1)}
    fading = resolve_scenario("preset:fading").experiment
    assert fading.channel.snr == 20 and len(fading.seed_list) == fading.seeds


def test_round_trip_reference_files(tmp_path):
    for name in preset_names():
        sc = resolve_scenario(f"preset:{name}").scenario
        path = tmp_path / f"{name}.scn"
        path.write_text(dump_scenario(sc))
        assert load_scenario(path).scenario == sc


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_round_trip_random(seed):
    sc = random_scenario(np.random.default_rng(seed))
    text = dump_scenario(sc)
    assert parse_scenario(text).scenario == sc
    assert dump_scenario(parse_scenario(text).scenario) == text
