"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import random
import time
from pathlib import Path

import pytest

from iiotnet.controlplane import FlowIntent
from iiotnet.dataplane import TrafficClass
from iiotnet.harness.builtins import BUILTINS, bundled_names, load_bundled
from iiotnet.harness.catalog import catalog, coverage_report
from iiotnet.harness.generate import random_scenario
from iiotnet.harness.verify import Status, build_report, dumps_report, p99, ser_us, verify
from iiotnet.network import Network, simulate
from iiotnet.qosrouting import Accepted, Rejected, Reservation, ReservationLedger, admit
from iiotnet.topology import QUARANTINE_VLAN, NoFeasiblePath
from oracles import admit_oracle, all_graphs, best_path, graph_topology

LINES: list[str] = []

# desk scale
MAX_NODES, MAX_FLOWS, MAX_SIM_US, MAX_WALL_S = 20, 50, 1_000_000, 10.0
RANDOM_SUITE = 100
AVAILABILITY = 0.99
TAMPER_PACKETS = 1000


def report(no: int, ok: bool, detail: str) -> None:
    line = f"C{no:<2} {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def delivered(trace, fid=None):
    return [r for r in trace if r.fact == "packet-delivered" and not r.get("copy")
            and (fid is None or r.fields["flow"] == fid)]


# 1 ---------------------------------------------------------------------------------------------


def test_c1_use_cases_fast_and_passing():
    rows, ok = [], True
    for name in BUILTINS:
        sc = load_bundled(name)
        t0 = time.perf_counter()
        trace = simulate(sc)
        verdicts = verify(trace, sc)
        wall = time.perf_counter() - t0
        scale = len(sc.nodes) <= MAX_NODES and len(sc.flows) <= MAX_FLOWS and sc.duration_us <= MAX_SIM_US
        applicable = [v for v in verdicts if v.status is not Status.NOT_APPLICABLE]
        good = scale and wall < MAX_WALL_S and all(v.status is Status.PASS for v in applicable)
        ok &= good
        rows.append(f"{name} {wall:.2f}s {len(applicable)} DRs pass" if good else f"{name} FAILED")
    report(1, ok, "; ".join(rows))


# 2 ---------------------------------------------------------------------------------------------


def _tc_latencies(sc, trace):
    tc = {f.id for f in sc.flows if f.traffic_class is TrafficClass.TIME_CRITICAL}
    out = {fid: [] for fid in tc}
    for r in delivered(trace):
        if r.fields["flow"] in tc:
            out[r.fields["flow"]].append(r)
    return out


def test_c2_best_effort_cannot_delay_time_critical():
    loaded_sc = load_bundled("interference")
    be = {f.id for f in loaded_sc.flows if f.traffic_class is TrafficClass.BEST_EFFORT}
    baseline_sc = dataclasses.replace(loaded_sc, flows=[f for f in loaded_sc.flows if f.id not in be])
    loaded = _tc_latencies(loaded_sc, simulate(loaded_sc))
    base = _tc_latencies(baseline_sc, simulate(baseline_sc))
    links = {l.id: l for l in loaded_sc.links}
    mf = loaded_sc.settings.max_frame_bytes
    ok, parts = True, []
    for fid in sorted(loaded):
        path = loaded[fid][0].fields["links"]
        assert all(r.fields["links"] == path for r in loaded[fid] + base[fid])
        blocking = sum(ser_us(mf, links[l].bandwidth) for l in path)
        lp = p99([r.fields["latency"] for r in loaded[fid]])
        bp = p99([r.fields["latency"] for r in base[fid]])
        ok &= lp <= bp + blocking
        parts.append(f"flow {fid}: loaded p99 {lp}us <= baseline {bp}us + {blocking}us ({len(path)} hops)")
    report(2, ok, "; ".join(parts))


# 3 ---------------------------------------------------------------------------------------------


def _unfirewalled(trace) -> int:
    allowed = {(r.fields["flow"], r.fields["seq"], r.fields["attempt"]) for r in trace
               if r.fact == "vnf-traversed" and r.fields["kind"] == "Firewall" and r.fields["verdict"] == "allow"}
    bad = 0
    for r in delivered(trace):
        f = r.fields
        if f["src_segment"] == QUARANTINE_VLAN or f["vlan"] != f["dst_segment"]:
            bad += 1
        elif f["src_segment"] != f["dst_segment"] and (f["flow"], f["seq"], f["attempt"]) not in allowed:
            bad += 1
    return bad


def _unauthenticated(sc, trace) -> int:
    granted: dict[str, int] = {}
    for r in trace:
        if r.fact == "auth-granted":
            granted.setdefault(r.fields["principal"], r.at)
    owner = {}
    for f in sc.flows:
        owner[f.id] = f.requester or next((p.id for p in sc.policy.principals if p.host == f.src), "")
    bad = 0
    for r in delivered(trace):
        t = granted.get(owner[r.fields["flow"]])
        if t is None or t > r.fields["created"]:
            bad += 1
    return bad


def test_c3_random_isolation_suite():
    cross = unauth = fails = deliveries = 0
    for seed in range(RANDOM_SUITE):
        sc = random_scenario(seed)
        trace = simulate(sc)
        verdicts = {v.dr: v for v in verify(trace, sc)}
        fails += sum(verdicts[d].status is Status.FAIL for d in (3, 5))
        cross += _unfirewalled(trace)
        unauth += _unauthenticated(sc, trace)
        deliveries += len(delivered(trace))
    report(3, cross == unauth == fails == 0,
           f"{RANDOM_SUITE} scenarios, {deliveries} deliveries: {cross} unfirewalled cross-segment, "
           f"{unauth} unauthenticated, {fails} DR3/DR5 fails")


# 4 ---------------------------------------------------------------------------------------------


def test_c4_failover():
    sc = load_bundled("ring-failure")
    trace = simulate(sc)
    st = sc.settings
    fail_at = next(r.at for r in trace if r.fact == "link-failure")
    done = next(r for r in trace if r.fact == "reroute-completed")
    gap = done.at - fail_at
    budget = st.failover_misses * st.heartbeat_us + st.install_us * done.fields["path_switches"]
    avail = {fid: m["availability"] for fid, m in
             next(v for v in verify(trace, sc) if v.dr == 7).metrics["flows"].items()}

    ck = load_bundled("controller-kill")
    ck_trace = simulate(ck)
    kills = [r.at for r in ck_trace if r.fact == "controller-killed"]
    established = {r.fields["flow"]: r.at for r in ck_trace if r.fact == "flow-established"}
    drops = [r for r in ck_trace if r.fact == "packet-dropped"
             and established.get(r.fields["flow"], float("inf")) < min(kills)]
    ok = gap <= budget and min(avail.values()) >= AVAILABILITY and not drops
    report(4, ok, f"ring reroute gap {gap}us <= {budget}us, availability {avail}; "
                  f"{len(kills)} controller kills, {len(drops)} drops of established flows")


# 5 ---------------------------------------------------------------------------------------------


LATS = [7, 3, 5, 3, 9, 4, 6, 2, 8, 5, 1, 4, 7, 2, 6, 3, 5, 8, 2, 9, 4]
BWS = [100_000, 10_000, 50_000, 100_000, 1_000_000]
INTENTS = [(TrafficClass.GUARANTEED, 20_000, None), (TrafficClass.GUARANTEED, 45_000, None),
           (TrafficClass.TIME_CRITICAL, 5_000, 300), (TrafficClass.TIME_CRITICAL, 5_000, 150),
           (TrafficClass.BEST_EFFORT, 0, None)]


def _oracle_cases(n, edges, shift):
    lats = [LATS[(i + shift) % len(LATS)] for i in range(len(edges))]
    topo = graph_topology(n, edges, lats, bandwidth=lambda lid: BWS[(lid + shift) % len(BWS)], jitter=1)
    ledger = ReservationLedger(topo)
    if edges:
        # one standing reservation so residuals differ from capacities
        ledger.reserve(Reservation(ledger.new_handle(), (1,), min(60_000, topo.links[1].bandwidth),
                                   TrafficClass.GUARANTEED))
    checked = mismatched = 0
    for src, dst in itertools.permutations(range(1, n + 1), 2):
        want = best_path(topo, src, dst)
        try:
            p = topo.shortest_feasible_path(src, dst)
            got = (p.nodes, p.links, p.latency)
        except NoFeasiblePath:
            got = None
        checked += 1
        mismatched += got != want
        for cls, demand, bound in INTENTS:
            res = admit(FlowIntent(src, dst, cls, demand, bound), topo, ledger)
            kind, detail = admit_oracle(topo, ledger.residual, src, dst, cls, demand, bound)
            if kind == "accepted":
                same = isinstance(res, Accepted) and (res.path.nodes, res.path.links, res.path.latency) == detail
            else:
                same = res == Rejected(detail)
            checked += 1
            mismatched += not same
    return checked, mismatched


def test_c5_routing_and_admission_match_enumeration():
    checked = mismatched = graphs = 0
    for n in (2, 3, 4, 5):
        for k, edges in enumerate(all_graphs(n)):
            c, m = _oracle_cases(n, edges, k)
            checked, mismatched, graphs = checked + c, mismatched + m, graphs + 1
    rng = random.Random(2024)
    sampled = 0
    for n in (6, 7):
        pairs = list(itertools.combinations(range(1, n + 1), 2))
        for k in range(150):
            edges = [p for p in pairs if rng.random() < 0.4]
            c, m = _oracle_cases(n, edges, k)
            checked, mismatched, sampled = checked + c, mismatched + m, sampled + 1
    report(5, mismatched == 0, f"{graphs} exhaustive graphs (2-5 nodes) + {sampled} sampled (6-7 nodes): "
                               f"{checked - mismatched}/{checked} decisions agree")


# 6 ---------------------------------------------------------------------------------------------


def test_c6_compiled_predicate_equals_firewall():
    scenarios = [load_bundled(n) for n in bundled_names()] + [random_scenario(s) for s in range(RANDOM_SUITE)]
    triples = disagree = 0
    for sc in scenarios:
        compiled = Network(sc).policy.compiled
        segs = sorted({s.vlan for s in sc.segments} | {QUARANTINE_VLAN})
        for a, b in itertools.product(segs, repeat=2):
            for cls in TrafficClass:
                triples += 1
                disagree += compiled.predicate(a, b, cls)[0] is not compiled.firewall_verdict(a, b, cls)
    report(6, disagree == 0, f"{len(scenarios)} scenarios, {triples - disagree}/{triples} triples agree")


# 7 ---------------------------------------------------------------------------------------------


def _digests(sc):
    trace = simulate(sc)
    rep = dumps_report(build_report(sc, verify(trace, sc), sc.seed))
    return hashlib.sha256(trace.dumps().encode()).hexdigest(), hashlib.sha256(rep.encode()).hexdigest()


def test_c7_reruns_are_byte_identical():
    scenarios = [load_bundled(n) for n in bundled_names()] + [random_scenario(s) for s in range(10)]
    differ = [sc.name for sc in scenarios if _digests(sc) != _digests(sc)]
    report(7, not differ, f"{len(scenarios)} scenarios re-run: {len(differ)} differ {differ or ''}".rstrip())


# 8 ---------------------------------------------------------------------------------------------


def test_c8_catalog_fidelity_and_coverage():
    fixture = json.loads((Path(__file__).parent / "fixtures" / "requirements_table.json").read_text())
    got = [{"number": e.number, "text": e.text, "source": e.source,
            "design_requirements": sorted(e.design_requirements)} for e in catalog()]
    cov = coverage_report()
    covered = sum(1 for item in cov.values() if item["covered_by"])
    noted = sum(1 for item in cov.values() if item["note"])
    ok = got == fixture and len(got) == 44 and covered == 44
    report(8, ok, f"{len(got)} entries equal the frozen table; {covered}/44 mapped to checks, "
                  f"{noted} with out-of-scope notes")


# 9 ---------------------------------------------------------------------------------------------


def test_c9_tampering_detected_and_accounted():
    sc = load_bundled("integrity")
    assert sc.flows[0].tamper_probability == pytest.approx(0.1)
    trace = simulate(sc)
    tampered = {(r.fields["flow"], r.fields["seq"], r.fields["attempt"]) for r in trace
                if r.fact == "tamper-injected"}
    outcome = {}
    for r in trace:
        if r.fact in ("packet-delivered", "integrity-nack", "integrity-failure", "packet-dropped",
                      "duplicate-discarded", "packet-in-flight") and not r.get("copy"):
            outcome[(r.fields["flow"], r.fields["seq"], r.fields["attempt"])] = r.fact
    reached = [t for t in tampered if outcome.get(t) in ("packet-delivered", "integrity-nack",
                                                         "integrity-failure", "duplicate-discarded")]
    detected = [t for t in reached if outcome[t] in ("integrity-nack", "integrity-failure")]
    # per original packet: exactly one clean delivery, one integrity failure, or a traced loss
    packets = {(r.fields["flow"], r.fields["seq"]) for r in trace if r.fact == "packet-injected"}
    final = {}
    for r in trace:
        key = (r.fields.get("flow"), r.fields.get("seq"))
        if r.fact in ("packet-delivered", "integrity-failure", "packet-dropped", "packet-in-flight") \
                and not r.get("copy"):
            final.setdefault(key, []).append(r.fact)
    unbalanced = [k for k in packets if len(final.get(k, [])) != 1]
    clean = sum(1 for k in packets if final.get(k) == ["packet-delivered"])
    failed = sum(1 for k in packets if final.get(k) == ["integrity-failure"])
    other = len(packets) - clean - failed
    ok = (len(packets) >= TAMPER_PACKETS and reached and len(detected) == len(reached)
          and not unbalanced and failed >= 1)
    report(9, ok, f"{len(packets)} packets, {len(tampered)} tampered, {len(detected)}/{len(reached)} "
                  f"reaching the sink detected; {clean} clean + {failed} integrity failures + {other} "
                  f"other outcomes = {len(packets)}")


# 10 --------------------------------------------------------------------------------------------


def test_c10_plug_and_produce_onboarding():
    sc = load_bundled("plug-and-produce")
    trace = simulate(sc)
    bound = sc.settings.onboarding_bound_us
    times = []
    for plug in (r for r in trace if r.fact == "device-plug-in"):
        host = plug.fields["host"]
        first = next((r.at for r in delivered(trace) if r.at > plug.at
                      and host in (r.fields["src"], r.fields["dst"])), None)
        times.append(None if first is None else first - plug.at)
    manual = sum(1 for r in trace if r.fact == "manual-action")
    ok = bool(times) and all(t is not None and t <= bound for t in times) and manual == 0
    report(10, ok, f"onboarding {times}us <= bound {bound}us, {manual} manual actions")
