import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iiotnet.harness.builtins import bundled_names, load_bundled, scenario_text
from iiotnet.harness.generate import random_scenario
from iiotnet.harness.scenario import (ParseError, ScenarioError, ValidationError, dump_scenario,
                                      load_scenario, parse_scenario, validate_scenario)
from conftest import PAIR

BASE = PAIR.format(duration=50_000)


def line_of(text, diag):
    return text.splitlines()[diag.line - 1]


def test_pair_template_is_valid():
    assert validate_scenario(parse_scenario(BASE)) == []


def test_unknown_segment_in_policy_is_named_with_its_line():
    text = BASE.replace("  roles: {cell: [20]}",
                        "  roles: {cell: [20]}\n  rules:\n    - {from: 20, to: 77, verdict: allow}")
    diags = validate_scenario(parse_scenario(text))
    hit = [d for d in diags if d.field == "policy.rules[0].to"]
    assert hit and "77" in hit[0].message
    assert "to: 77" in line_of(text, hit[0])


def test_two_facility_controllers_give_a_single_root_diagnostic():
    text = BASE.replace("  - {id: 1, level: facility, scope: [1, 2]}",
                        "  - {id: 1, level: facility, scope: [1, 2]}\n  - {id: 2, level: facility, scope: [1]}")
    diags = validate_scenario(parse_scenario(text))
    assert any("single root" in d.message for d in diags)
    assert all(d.field == "controllers" for d in diags)


def test_bad_enum_value_reports_field_and_line():
    text = BASE.replace("kind: host", "kind: hots", 1)
    with pytest.raises(ParseError) as exc:
        parse_scenario(text)
    [d] = exc.value.diagnostics
    assert d.field == "nodes[2].kind" and "hots" in line_of(text, d)


def test_unknown_top_level_field_is_refused():
    with pytest.raises(ParseError, match="bogus"):
        parse_scenario(BASE.replace("seed: 3", "seed: 3\nbogus: 1"))


def test_yaml_syntax_error_has_a_line():
    with pytest.raises(ParseError) as exc:
        parse_scenario(BASE.replace("nodes:", "nodes: [", 1))
    assert exc.value.diagnostics[0].line is not None


def test_value_range_checks():
    diags = validate_scenario(parse_scenario(BASE.replace("latency: 10,", "latency: 0,")))
    assert [d.field for d in diags] == ["links[0].latency"]
    diags = validate_scenario(parse_scenario(BASE.replace("src: 10, dst: 11,", "src: 10, dst: 99,")))
    assert [d.field for d in diags] == ["flows[0].dst"]


def test_load_raises_validation_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(BASE.replace("latency: 10,", "latency: 0,"))
    with pytest.raises(ValidationError) as exc:
        load_scenario(path)
    assert isinstance(exc.value, ScenarioError)
    assert load_scenario(path, validate=False).links[0].latency == 0


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_scenarios_validate_and_round_trip(name):
    sc = load_bundled(name)
    assert validate_scenario(sc) == []
    assert parse_scenario(dump_scenario(sc)) == sc
    assert parse_scenario(scenario_text(name)) == sc


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_generated_scenarios_validate_and_round_trip(seed):
    sc = random_scenario(seed)
    assert validate_scenario(sc) == []
    text = dump_scenario(sc)
    assert parse_scenario(text) == sc
    assert dump_scenario(parse_scenario(text)) == text


def test_generator_is_deterministic_per_seed():
    assert dump_scenario(random_scenario(5)) == dump_scenario(random_scenario(5))
    assert dump_scenario(random_scenario(5)) != dump_scenario(random_scenario(6))
