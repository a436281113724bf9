import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from iiotnet.dataplane import Packet, TrafficClass
from iiotnet.harness.builtins import scenario_text
from iiotnet.network import simulate
from iiotnet.nfv import (DropPacket, Forward, InstanceNotRunning, InstanceState, NfvHost, NoCapacity,
                         NotOrchestrator, Orchestrator, Transform, VnfDescriptor, VnfKind)
from iiotnet.policy import PolicyRule, SegmentPolicy, Verdict, compile_policy
from conftest import bundled_run, scenario_from

FW = VnfKind.FIREWALL


def desc(cpu, kind=FW):
    return VnfDescriptor(kind, cpu, 1)


def test_first_fit_placement_sequence():
    orch = Orchestrator([NfvHost(1, 4, 100), NfvHost(2, 2, 100)])
    a = orch.instantiate(desc(3))
    assert a.host == 1 and orch.hosts[1].cpu_residual == 1
    with pytest.raises(NoCapacity):
        orch.instantiate(desc(3))
    assert orch.instantiate(desc(2)).host == 2


def test_only_facility_controller_may_instantiate():
    orch = Orchestrator([NfvHost(1, 4, 100)])
    with pytest.raises(NotOrchestrator):
        orch.instantiate(desc(1), caller_is_facility=False)


def test_placement_constraint_is_respected():
    orch = Orchestrator([NfvHost(1, 4, 100), NfvHost(2, 4, 100)])
    assert orch.instantiate(desc(1), constraint=2).host == 2
    with pytest.raises(NoCapacity):
        orch.instantiate(desc(5), constraint=1)


def test_descriptor_invariants():
    with pytest.raises(ValueError):
        VnfDescriptor(FW, 0, 1)
    with pytest.raises(ValueError):
        VnfDescriptor(FW, 1, 1, processing_delay=-1)


def pkt(cls, vlan=10):
    return Packet(1, 0, 5, 6, vlan, cls, 100, 0)


def running(orch, d, **kw):
    inst = orch.instantiate(d, **kw)
    orch.mark_running(inst.id)
    return inst


def test_firewall_traversal_follows_compiled_rules():
    orch = Orchestrator([NfvHost(1, 4, 100)])
    fw = running(orch, desc(1), attachments=[(10, 20)])
    compiled = compile_policy(SegmentPolicy([PolicyRule(10, 20, TrafficClass.TIME_CRITICAL, Verdict.ALLOW)]),
                              {10, 20})
    res = orch.traverse(fw, pkt(TrafficClass.TIME_CRITICAL), compiled, 20)
    assert isinstance(res, Forward) and res.pkt.vlan == 20
    assert orch.traverse(fw, pkt(TrafficClass.BEST_EFFORT), compiled, 20) == DropPacket("policy")


def test_monitor_counts_and_leaves_packet_alone():
    orch = Orchestrator([NfvHost(1, 4, 100)])
    mon = running(orch, desc(1, VnfKind.TRAFFIC_MONITOR))
    p = pkt(TrafficClass.GUARANTEED)
    before = (p.vlan, p.checksum, p.payload_tag)
    assert orch.traverse(mon, p) == Forward(p)
    assert (p.vlan, p.checksum, p.payload_tag) == before
    assert mon.stats == {1: 1}


def test_vpn_gateway_decapsulates_external_packets():
    orch = Orchestrator([NfvHost(1, 4, 100)])
    gw = running(orch, desc(1, VnfKind.VPN_GATEWAY))
    p = pkt(TrafficClass.BEST_EFFORT)
    p.encapsulated = True
    res = orch.traverse(gw, p)
    assert isinstance(res, Transform) and not res.pkt.encapsulated


def test_traverse_needs_running_instance():
    orch = Orchestrator([NfvHost(1, 4, 100)])
    inst = orch.instantiate(desc(1))
    assert inst.state is InstanceState.STARTING
    with pytest.raises(InstanceNotRunning):
        orch.traverse(inst, pkt(TrafficClass.BEST_EFFORT))


def test_migration_moves_what_fits_and_strands_the_rest():
    orch = Orchestrator([NfvHost(1, 4, 100), NfvHost(2, 3, 100)])
    a = running(orch, desc(2))
    b = running(orch, desc(2))
    report = orch.migrate_on_failure(1)
    assert report.moved == [(a.id, 2)]
    assert report.stranded == [b.id]
    assert orch.instances[a.id].state is InstanceState.MIGRATING
    assert orch.instances[b.id].state is InstanceState.FAILED
    assert orch.committed(2) == (2, 1)


@given(st.lists(st.integers(1, 5), max_size=12), st.lists(st.integers(1, 8), min_size=1, max_size=4))
def test_placement_is_deterministic_and_within_capacity(demands, caps):
    def place():
        orch = Orchestrator([NfvHost(i + 1, c, 100) for i, c in enumerate(caps)])
        out = []
        for d in demands:
            try:
                out.append(orch.instantiate(desc(d)).host)
            except NoCapacity:
                out.append(None)
        for h in orch.hosts.values():
            assert 0 <= h.cpu_residual <= h.cpu_capacity
            assert orch.committed(h.node)[0] == h.cpu_capacity - h.cpu_residual
        return out

    assert place() == place()


def test_firewall_survives_host_failure_without_unfiltered_delivery():
    sc, trace, verdicts = bundled_run("host-failure")
    moves = [r for r in trace if r.fact == "vnf-migrating"]
    assert [(m.fields["source"], m.fields["target"]) for m in moves] == [(30, 31)]
    later = [r for r in trace if r.fact == "packet-delivered" and r.at > 155_000]
    assert later, "flow should resume through the migrated firewall"
    # link 3 leads to the failed host, link 4 to its replacement
    assert all(3 not in r.fields["links"] and 4 in r.fields["links"] for r in later)
    assert next(v for v in verdicts if v.dr == 3).status.value == "pass"


def test_losing_the_only_firewall_host_closes_the_transition():
    doc = yaml.safe_load(scenario_text("host-failure"))
    doc["nodes"] = [n for n in doc["nodes"] if n["id"] != 31]
    doc["links"] = [l for l in doc["links"] if l["id"] != 4]
    trace = simulate(scenario_from(yaml.safe_dump(doc)))
    assert any(r.fact == "vnf-stranded" for r in trace)
    after = [r for r in trace if r.at > 151_000]
    assert not any(r.fact == "packet-delivered" for r in after)
    assert any(r.fact == "packet-dropped" and r.fields["reason"] == "no-firewall" for r in after)
