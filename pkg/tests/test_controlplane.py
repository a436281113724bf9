import pytest
import yaml

from iiotnet.controlplane import Controller, FlowIntent, Level, hierarchy_problems
from iiotnet.dataplane import TrafficClass
from iiotnet.harness.builtins import bundled_names, scenario_text
from iiotnet.network import simulate
from conftest import bundled_run, scenario_from, verdict

HEARTBEAT_US, MISSES, INSTALL_US = 500, 3, 100


def ring(events, **flow_overrides):
    doc = yaml.safe_load(scenario_text("ring-failure"))
    doc["events"] = events
    doc["flows"][0].update(flow_overrides)
    return scenario_from(yaml.safe_dump(doc))


def facts(trace, fact, **match):
    return [r for r in trace if r.fact == fact and all(r.fields.get(k) == v for k, v in match.items())]


def test_ring_reroute_finishes_within_detection_plus_installs():
    _, trace, _ = bundled_run("ring-failure")
    [path] = [r for r in facts(trace, "flow-path") if r.fields["source"] == "reroute"]
    assert path.fields["nodes"] == [10, 1, 4, 3, 11]
    [done] = facts(trace, "reroute-completed", flow=1)
    installs = done.fields["installs"]
    assert installs == 2
    assert done.at <= 10_000 + 2 * HEARTBEAT_US + installs * INSTALL_US == 11_200
    assert any(r.fact == "packet-delivered" and r.at > done.at for r in trace)


def test_reroute_is_make_before_break():
    _, trace, _ = bundled_run("ring-failure")
    start = facts(trace, "reroute-started", flow=1)[0].at
    new_installs = [r.at for r in facts(trace, "rule-installed", flow=1) if r.at >= start]
    removals = [r.at for r in facts(trace, "rule-removed", flow=1)]
    assert new_installs and removals
    assert max(new_installs) < min(removals)


def test_failure_of_an_idle_link_reroutes_nothing():
    trace = simulate(ring([{"at": 10_000, "kind": "link-failure", "link": 3}]))
    [report] = facts(trace, "reroute-report")
    assert report.fields["rerouted"] == [] and report.fields["suspended"] == []


def test_flow_suspends_without_a_path_and_resumes_on_repair():
    events = [{"at": 10_000, "kind": "link-failure", "link": 2},
              {"at": 20_000, "kind": "link-failure", "link": 4},
              {"at": 40_000, "kind": "link-repair", "link": 2}]
    trace = simulate(ring(events))
    assert facts(trace, "flow-suspended", flow=1)
    assert not any(r.fact == "packet-delivered" for r in trace if 22_000 < r.at < 40_000)
    assert any(r.fact == "packet-delivered" for r in trace if r.at > 42_000)


def test_denied_flow_reaches_controller_once_per_cache_window():
    _, trace, _ = bundled_run("unauthorized-access")
    for fid in (2, 3):
        times = [r.at for r in facts(trace, "packet-in", flow=fid)]
        assert len(times) > 2
        assert all(b - a >= 10_000 for a, b in zip(times, times[1:]))
        drops = [r for r in facts(trace, "rule-installed", flow=fid)]
        assert all(r.fields["hard_timeout"] == 10_000 and r.fields["actions"].startswith("drop")
                   for r in drops)


def test_machine_local_flow_is_not_escalated():
    _, trace, _ = bundled_run("controller-kill")
    assert not facts(trace, "escalated", flow=2)
    assert {r.fields["installed_by"] for r in facts(trace, "rule-installed", flow=2)} == {3}
    assert [r.fields["to"] for r in facts(trace, "escalated", flow=1)] == [2]


def test_escalation_walks_each_level_once():
    _, trace, _ = bundled_run("autonomous-transport")
    first = [r for r in facts(trace, "escalated", flow=1) if r.at == 20_300]
    assert [(r.emitter, r.fields["to"]) for r in first] == [("ctrl4", 2), ("ctrl2", 1)]


def test_controller_death_never_drops_established_traffic():
    _, trace, verdicts = bundled_run("controller-kill")
    assert not facts(trace, "packet-dropped")
    for kill, restore in zip(facts(trace, "controller-killed"), facts(trace, "switch-rehomed")):
        assert restore.at - kill.at <= MISSES * HEARTBEAT_US + INSTALL_US
    assert facts(trace, "controller-failover", failed=2, standby=6)
    assert facts(trace, "degraded-mode", failed=3)
    # a flow that starts after the failover is still set up
    assert facts(trace, "flow-path", flow=3)
    assert verdict(verdicts, 7).status.value == "pass"


def test_registered_app_steers_and_deregistration_reverts():
    reg = {"at": 1000, "kind": "register-app", "controller": 1, "app": "detour",
           "params": {"via": 4, "hosts": [10, 11]}}
    steered = simulate(ring([reg]))
    [p] = facts(steered, "flow-path", flow=1)
    assert p.fields["nodes"] == [10, 1, 4, 3, 11] and p.fields["source"] == "app:detour"
    dereg = {"at": 2000, "kind": "deregister-app", "controller": 1, "app": "detour"}
    plain = simulate(ring([reg, dereg]))
    [p] = facts(plain, "flow-path", flow=1)
    assert p.fields["nodes"] == [10, 1, 2, 3, 11] and p.fields["source"] == "default"


def test_duplicate_app_registration_is_rejected():
    reg = {"at": 1000, "kind": "register-app", "controller": 1, "app": "detour", "params": {"via": 4}}
    trace = simulate(ring([reg, dict(reg, at=1500)]))
    assert len(facts(trace, "app-registered")) == 1
    assert facts(trace, "app-rejected", reason="duplicate")


@pytest.mark.parametrize("name", bundled_names())
def test_rules_only_come_from_the_owning_scope(name):
    # scope authority is part of the authorization check
    _, _, verdicts = bundled_run(name)
    assert verdict(verdicts, 5).status.value == "pass"


def ctrl(cid, level, scope, parent=None):
    return Controller(cid, level, set(scope), parent)


def test_valid_hierarchy_has_no_problems():
    tree = [ctrl(1, Level.FACILITY, [1, 2, 3]), ctrl(2, Level.LINE, [1, 2], 1), ctrl(3, Level.MACHINE, [1], 2)]
    assert hierarchy_problems(tree, [1, 2, 3]) == []


def test_two_facility_controllers_are_refused():
    tree = [ctrl(1, Level.FACILITY, [1]), ctrl(2, Level.FACILITY, [2])]
    assert any("single root" in p for p in hierarchy_problems(tree, [1, 2]))


def test_overlapping_siblings_and_uncovered_switch():
    tree = [ctrl(1, Level.FACILITY, [1, 2]), ctrl(2, Level.LINE, [1, 2], 1), ctrl(3, Level.LINE, [2], 1)]
    problems = hierarchy_problems(tree, [1, 2, 9])
    assert any("overlap" in p for p in problems)
    assert any("switch 9" in p for p in problems)


def test_child_scope_must_be_inside_parent():
    tree = [ctrl(1, Level.FACILITY, [1]), ctrl(2, Level.LINE, [1, 2], 1)]
    assert any("not contained" in p for p in hierarchy_problems(tree, [1, 2]))


def test_time_critical_intent_needs_bound():
    with pytest.raises(ValueError):
        FlowIntent(1, 2, TrafficClass.TIME_CRITICAL, 100)
