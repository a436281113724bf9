import dataclasses

import pytest

from iiotnet.harness.builtins import bundled_names
from iiotnet.harness.verify import (IncompleteTrace, RequirementVerdict, Status, TraceIndex, p99, ser_us,
                                    verify)
from iiotnet.network import simulate
from iiotnet.simkernel import ScenarioTrace
from conftest import bundled_run, verdict


def edit(trace, i, **fields):
    """Copy of the trace with record i's fields updated."""
    recs = list(trace.records)
    r = recs[i]
    recs[i] = dataclasses.replace(r, fields={**r.fields, **fields})
    return ScenarioTrace(recs, trace.meta)


def without(trace, i):
    recs = list(trace.records)
    del recs[i]
    return ScenarioTrace(recs, trace.meta)


def first(trace, fact, pred=lambda r: True):
    return next(i for i, r in enumerate(trace) if r.fact == fact and pred(r))


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_scenarios_have_no_failures(name):
    _, _, verdicts = bundled_run(name)
    assert [v.dr for v in verdicts] == list(range(1, 12))
    failing = [(v.dr, v.detail) for v in verdicts if v.status is Status.FAIL]
    assert failing == []
    for v in verdicts:
        assert v.evidence == [] or v.status is Status.FAIL


def test_unfirewalled_cross_segment_delivery_fails_confinement():
    sc, trace, _ = bundled_run("host-failure")
    fw = first(trace, "vnf-traversed", lambda r: r.fields["kind"] == "Firewall")
    key = (trace[fw].fields["flow"], trace[fw].fields["seq"])
    mutated = without(trace, fw)
    delivered = first(mutated, "packet-delivered",
                      lambda r: (r.fields["flow"], r.fields["seq"]) == key)
    v = verdict(verify(mutated, sc), 3)
    assert v.status is Status.FAIL
    assert v.evidence == [delivered]
    assert mutated[delivered].fields["src_segment"] != mutated[delivered].fields["dst_segment"]


def test_delivery_into_wrong_vlan_fails_confinement():
    sc, trace, _ = bundled_run("ring-failure")
    i = first(trace, "packet-delivered")
    v = verdict(verify(edit(trace, i, vlan=999), sc), 3)
    assert v.status is Status.FAIL and v.evidence == [i]


def test_latency_over_bound_fails_with_that_delivery():
    sc, trace, _ = bundled_run("ring-failure")
    i = first(trace, "packet-delivered", lambda r: r.at > 50_000)
    v = verdict(verify(edit(trace, i, latency=sc.flows[0].latency_bound_us + 1), sc), 1)
    assert v.status is Status.FAIL and i in v.evidence


def test_missing_outcome_breaks_conservation():
    sc, trace, _ = bundled_run("ring-failure")
    i = first(trace, "packet-delivered", lambda r: r.at > 50_000)
    seq = trace[i].fields["seq"]
    mutated = without(trace, i)
    inj = first(mutated, "packet-injected", lambda r: r.fields["seq"] == seq and r.fields["flow"] == 1)
    v = verdict(verify(mutated, sc), 4)
    assert v.status is Status.FAIL and inj in v.evidence


def test_out_of_order_delivery_is_flagged():
    sc, trace, _ = bundled_run("ring-failure")
    i = first(trace, "packet-delivered", lambda r: r.at > 50_000)
    v = verdict(verify(edit(trace, i, seq=0), sc), 4)
    assert v.status is Status.FAIL


def test_rule_from_outside_the_scope_fails_authorization():
    sc, trace, _ = bundled_run("controller-kill")
    i = first(trace, "rule-installed", lambda r: r.fields["switch"] == 3)
    v = verdict(verify(edit(trace, i, installed_by=4), sc), 5)
    assert v.status is Status.FAIL and v.evidence == [i]


def test_undetected_tamper_fails_integrity():
    sc, trace, _ = bundled_run("integrity")
    nack = first(trace, "integrity-nack")
    n = trace[nack].fields
    # the clean retransmission's delivery, passed off as the tampered attempt
    clean = trace[first(trace, "packet-delivered",
                        lambda r: (r.fields["flow"], r.fields["seq"]) == (n["flow"], n["seq"]))]
    recs = list(trace.records)
    recs[nack] = dataclasses.replace(recs[nack], fact="packet-delivered",
                                     fields={**clean.fields, "attempt": n["attempt"]})
    v = verdict(verify(ScenarioTrace(recs, trace.meta), sc), 6)
    assert v.status is Status.FAIL and nack in v.evidence


def test_no_legacy_region_is_not_applicable(pair_scenario):
    v = verdict(verify(simulate(pair_scenario), pair_scenario), 8)
    assert v.status is Status.NOT_APPLICABLE


def test_trace_without_run_end_is_incomplete():
    sc, trace, _ = bundled_run("ring-failure")
    with pytest.raises(IncompleteTrace):
        verify(without(trace, len(trace) - 1), sc)


def test_short_run_is_incomplete(pair_scenario):
    trace = simulate(pair_scenario, until=10_000)
    with pytest.raises(IncompleteTrace):
        TraceIndex(trace, pair_scenario)


@pytest.mark.parametrize("name", ["ring-failure", "controller-kill", "integrity"])
def test_verdicts_are_deterministic(name):
    sc, trace, verdicts = bundled_run(name)
    again = verify(ScenarioTrace.loads(trace.dumps()), sc)
    assert [v.to_dict() for v in again] == [v.to_dict() for v in verdicts]


def test_failing_verdict_requires_evidence():
    with pytest.raises(ValueError):
        RequirementVerdict(3, Status.FAIL, [])


def test_percentile_and_serialization_helpers():
    assert p99(list(range(1, 101))) == 99
    assert p99([5]) == 5
    assert p99(list(range(1, 201))) == 198
    assert ser_us(1500, 100_000) == 120
    assert ser_us(1, 1_000_000) == 1
