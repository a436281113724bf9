import hashlib
import json
from pathlib import Path

import pytest

from iiotnet.harness.builtins import BUILTINS, builtin_scenarios, bundled_names, list_builtins, scenario_text
from iiotnet.harness.verify import build_report, dumps_report
from conftest import bundled_run

GOLDEN = json.loads((Path(__file__).parent / "fixtures" / "golden.json").read_text())


def facts(trace, fact):
    return [r for r in trace if r.fact == fact]


def test_three_use_cases_are_listed_first():
    assert list_builtins() == list(BUILTINS)
    assert [sc.name for sc in builtin_scenarios()] == list(BUILTINS)
    assert set(BUILTINS) < set(bundled_names())


def test_unknown_bundled_name():
    with pytest.raises(KeyError):
        scenario_text("no-such-scenario")


def test_camera_is_retargeted_to_a_second_machine():
    sc, trace, _ = bundled_run("inspection-camera")
    [ev] = facts(trace, "flow-retargeted")
    old, new = sc.flow(ev.fields["old"]), sc.flow(ev.fields["new"])
    assert old.src == new.src and old.dst != new.dst
    assert old.traffic_class.label == new.traffic_class.label == "guaranteed"
    assert old.mode == new.mode == "proactive"
    established = {r.fields["flow"] for r in facts(trace, "flow-established")}
    assert {old.id, new.id} <= established


def test_external_access_refuses_a_typo_before_the_valid_login():
    _, trace, _ = bundled_run("external-access")
    refused = [r for r in facts(trace, "auth-denied") if r.fields.get("stage") == "credential"]
    granted = [r for r in facts(trace, "auth-granted") if r.fields["entry"] == "vpn"]
    assert len(refused) == 1 and len(granted) == 1
    assert refused[0].fields["principal"] == granted[0].fields["principal"]
    assert refused[0].at < granted[0].at


def test_transport_sets_up_ad_hoc_link_after_each_plug_in():
    _, trace, _ = bundled_run("autonomous-transport")
    plugs = [r for r in facts(trace, "device-plug-in") if r.fields["host"] == 70]
    assert len(plugs) == 2 and plugs[0].fields["switch"] != plugs[1].fields["switch"]
    for plug in plugs:
        assert any(r.at > plug.at and r.fields["flow"] == 1 for r in facts(trace, "flow-established"))


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_matches_frozen_golden_run(name):
    sc, trace, verdicts = bundled_run(name)
    gold = GOLDEN[name]
    assert {f"DR{v.dr}": v.status.value for v in verdicts} == gold["verdicts"]
    assert len(trace) == gold["records"]
    assert hashlib.sha256(trace.dumps().encode()).hexdigest() == gold["trace_sha256"]
    report = dumps_report(build_report(sc, verdicts, sc.seed))
    assert hashlib.sha256(report.encode()).hexdigest() == gold["report_sha256"]
