"""Design-requirement checks evaluated from a finished trace.

Every check works only on trace records plus the scenario's declarations
(bounds, link parameters, policy roles).  A failing verdict lists the indices
of the records that violate it, so a reader can re-check the evidence by hand.
"""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

from ..simkernel import ScenarioTrace
from .catalog import coverage_report
from .scenario import Scenario

REPORT_FORMAT_VERSION = 1
QUARANTINE = 4094

# Drop reasons that follow from an injected event or a deliberate refusal.
ATTRIBUTABLE = frozenset({"link-down", "node-failed", "off-path", "suspended", "unattached",
                          "no-path", "no-firewall", "quarantine"})
TERMINAL = ("packet-delivered", "packet-dropped", "integrity-nack", "integrity-failure",
            "duplicate-discarded", "packet-in-flight")
REQUIRE_ORDER = ("time_critical", "guaranteed")


class IncompleteTrace(Exception):
    pass


class Status(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not-applicable"


@dataclass
class RequirementVerdict:
    dr: int
    status: Status
    evidence: list[int] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    detail: str = ""

    def __post_init__(self):
        if self.status is Status.FAIL and not self.evidence:
            raise ValueError(f"DR{self.dr}: a failing verdict needs evidence")

    def to_dict(self) -> dict:
        return {"dr": self.dr, "status": self.status.value, "evidence": list(self.evidence),
                "metrics": self.metrics, "detail": self.detail}


def _verdict(dr: int, bad: list[int], metrics: dict, ok: str, why: str) -> RequirementVerdict:
    if bad:
        return RequirementVerdict(dr, Status.FAIL, sorted(set(bad))[:50], metrics, why)
    return RequirementVerdict(dr, Status.PASS, [], metrics, ok)


def _na(dr: int, why: str) -> RequirementVerdict:
    return RequirementVerdict(dr, Status.NOT_APPLICABLE, [], {}, why)


def ser_us(size: int, bandwidth_kbps: int) -> int:
    return -(-size * 8000 // bandwidth_kbps)


def p99(values: list[int]) -> int:
    """Nearest-rank 99th percentile."""
    if not values:
        raise ValueError("p99 of nothing")
    s = sorted(values)
    return s[max(0, math.ceil(0.99 * len(s)) - 1)]


@dataclass
class Window:
    """A steady interval of one flow: installed and undisturbed."""

    opened: int  # record index
    start: int
    end: int | None  # None while still open at run end


class TraceIndex:
    """Lookups shared by the checks."""

    def __init__(self, trace: ScenarioTrace, sc: Scenario):
        self.trace = trace
        self.sc = sc
        self.records = trace.records
        ends = [i for i, r in enumerate(self.records) if r.fact == "run-end"]
        if not ends:
            raise IncompleteTrace("trace has no run-end record")
        self.end_index = ends[-1]
        self.end_time = self.records[self.end_index]["until"]
        if self.end_time < sc.duration_us:
            raise IncompleteTrace(f"run stopped at {self.end_time} before {sc.duration_us}")
        self.facts: dict[str, list[int]] = defaultdict(list)
        self.by_flow: dict[int, list[int]] = defaultdict(list)
        for i, r in enumerate(self.records):
            self.facts[r.fact].append(i)
            if "flow" in r.fields and not r.get("copy"):
                self.by_flow[r["flow"]].append(i)
        self.flows = {f.id: f for f in sc.flows}
        self.links = {l.id: l for l in sc.links}
        self.injected: dict[tuple, int] = {}
        for i in self.facts["packet-injected"] + self.facts["retransmit"]:
            r = self.records[i]
            self.injected[(r["flow"], r["seq"], r["attempt"])] = i
        self.delivered = [i for i in self.facts["packet-delivered"] if not self.records[i].get("copy")]
        self.principal_hosts = {p.id: p.host for p in sc.policy.principals}

    def rec(self, i: int):
        return self.records[i]

    def of(self, fact: str):
        return [(i, self.records[i]) for i in self.facts.get(fact, ())]

    def ident(self, i: int) -> tuple:
        r = self.records[i]
        return (r["flow"], r["seq"], r["attempt"])

    def requester(self, fid: int) -> str:
        f = self.flows[fid]
        if f.requester:
            return f.requester
        for p in self.sc.policy.principals:
            if p.host == f.src:
                return p.id
        return ""

    def created(self, i: int) -> int:
        """Creation time of the packet behind a per-packet record."""
        inj = self.injected.get(self.ident(i))
        return self.records[inj].at if inj is not None else self.records[i].at

    def admitted(self) -> list[int]:
        return sorted({self.records[i]["flow"] for i in self.facts["flow-established"]})

    def windows(self, fid: int) -> list[Window]:
        f = self.flows[fid]
        hosts = {f.src, f.dst}
        path_links: set[int] = set()
        path_nodes: set[int] = set()
        out: list[Window] = []
        current: Window | None = None
        own = set(self.by_flow.get(fid, ()))
        closers = {"reroute-started", "flow-suspended", "flow-held", "flow-torn-down", "flow-path",
                   "flow-stopped"}
        for i, r in enumerate(self.records):
            close = False
            if i in own:
                if r.fact == "flow-path":
                    path_links, path_nodes = set(r["links"]), set(r["nodes"])
                if r.fact in ("flow-established", "reroute-completed"):
                    if current is None:
                        current = Window(i, r.at, None)
                    continue
                close = r.fact in closers
            elif r.fact == "link-failure":
                close = r["link"] in path_links
            elif r.fact == "device-unplugged":
                close = r["host"] in hosts
            elif r.fact == "host-failed":
                close = r["node"] in path_nodes
            if close and current is not None:
                current.end = r.at
                out.append(current)
                current = None
        if current is not None:
            out.append(current)
        return out

    def in_window(self, w: Window, created: int, at: int) -> bool:
        return created >= w.start and (w.end is None or at <= w.end)


# --- individual checks ---------------------------------------------------------------


def check_dr1(ix: TraceIndex) -> RequirementVerdict:
    """Declared latency, jitter, bandwidth and loss bounds inside steady windows."""
    flows = ix.admitted()
    if not flows:
        return _na(1, "no admitted flow")
    bad: list[int] = []
    metrics: dict = {}
    delivered_by_flow: dict[int, list[int]] = defaultdict(list)
    for i in ix.delivered:
        delivered_by_flow[ix.rec(i)["flow"]].append(i)
    for fid in flows:
        f = ix.flows[fid]
        wins = ix.windows(fid)
        lat_max = 0
        spread_max = 0
        sent = lost = 0
        for w in wins:
            groups: dict[tuple, list[tuple[int, int]]] = defaultdict(list)
            for i in delivered_by_flow[fid]:
                r = ix.rec(i)
                if not ix.in_window(w, r["created"], r.at):
                    continue
                lat_max = max(lat_max, r["latency"])
                if f.latency_bound_us is not None and r["latency"] > f.latency_bound_us:
                    bad.append(i)
                if r["attempt"] == 0:
                    groups[tuple(r["links"])].append((r["latency"], i))
            for items in groups.values():
                lo, hi = min(items), max(items)
                spread = hi[0] - lo[0]
                spread_max = max(spread_max, spread)
                if f.jitter_bound_us is not None and spread > f.jitter_bound_us:
                    bad.append(hi[1])
            for i in ix.by_flow[fid]:
                r = ix.rec(i)
                if r.fact == "packet-injected" and ix.in_window(w, r.at, r.at):
                    sent += 1
                elif r.fact == "packet-dropped" and r["reason"] not in ATTRIBUTABLE \
                        and ix.in_window(w, ix.created(i), r.at):
                    lost += 1
        max_loss = f.max_loss
        if max_loss is None and f.traffic_class.label in REQUIRE_ORDER:
            max_loss = ix.sc.settings.default_max_loss
        loss = lost / sent if sent else 0.0
        if max_loss is not None and loss > max_loss:
            bad.extend(i for i in ix.by_flow[fid] if ix.rec(i).fact == "packet-dropped"
                       and ix.rec(i)["reason"] not in ATTRIBUTABLE)
        if f.demand_kbps and f.traffic_class.label in REQUIRE_ORDER:
            offered = -(-f.size * 8000 // f.period_us)
            if offered > f.demand_kbps:
                bad.append(ix.facts["flow-established"][0])
        metrics[str(fid)] = {"windows": len(wins), "max_latency_us": lat_max,
                             "max_spread_us": spread_max, "loss": round(loss, 6)}
    bad.extend(_oversubscription(ix))
    return _verdict(1, bad, {"flows": metrics}, "all admitted flows within their bounds",
                    "a flow exceeded a declared bound")


def _oversubscription(ix: TraceIndex) -> list[int]:
    reserved: dict[int, int] = defaultdict(int)
    live: dict[int, tuple] = {}
    bad = []
    for i, r in enumerate(ix.records):
        if r.fact in ("reservation-moved", "reservation-released"):
            old = live.pop(r["old"] if r.fact == "reservation-moved" else r["handle"], None)
            if old is not None:
                for lid in old[0]:
                    reserved[lid] -= old[1]
        if r.fact in ("reservation-made", "reservation-moved"):
            live[r["handle"]] = (r["links"], r["demand"])
            for lid in r["links"]:
                reserved[lid] += r["demand"]
                if reserved[lid] > ix.links[lid].bandwidth:
                    bad.append(i)
    return bad


def tc_bound(ix: TraceIndex, rec) -> int:
    """Worst-case latency of one time-critical delivery along the links it used."""
    mf = ix.sc.settings.max_frame_bytes
    total = 0
    for lid in rec["links"]:
        l = ix.links[lid]
        total += l.latency + l.jitter + ser_us(rec["size"], l.bandwidth) + ser_us(mf, l.bandwidth)
    proc = defaultdict(int)
    for v in ix.sc.vnfs:
        proc[v.kind.label] = max(proc[v.kind.label], v.processing_us)
    return total + sum(proc[k] for k in rec["vnfs"])


def check_dr2(ix: TraceIndex) -> RequirementVerdict:
    """Time-critical packets stay within the strict-priority blocking bound."""
    tc = [fid for fid in ix.admitted() if ix.flows[fid].traffic_class.label == "time_critical"]
    if not tc:
        return _na(2, "no admitted time-critical flow")
    bad, metrics = [], {}
    wins = {fid: ix.windows(fid) for fid in tc}
    for fid in tc:
        lats = []
        for i in ix.delivered:
            r = ix.rec(i)
            if r["flow"] != fid or not any(ix.in_window(w, r["created"], r.at) for w in wins[fid]):
                continue
            lats.append(r["latency"])
            if r["latency"] > tc_bound(ix, r):
                bad.append(i)
        if lats:
            metrics[str(fid)] = {"p99_latency_us": p99(lats), "packets": len(lats)}
    if not metrics:
        return _na(2, "no steady time-critical delivery")
    return _verdict(2, bad, {"flows": metrics}, "time-critical latency within the per-hop blocking bound",
                    "a time-critical packet exceeded its blocking bound")


def check_dr3(ix: TraceIndex) -> RequirementVerdict:
    """Cross-segment deliveries must be firewall-allowed and land in the right segment."""
    allowed = set()
    for i, r in ix.of("vnf-traversed"):
        if r["kind"] == "Firewall" and r["verdict"] == "allow":
            allowed.add((r["flow"], r["seq"], r["attempt"], r["from_segment"], r["to_segment"]))
    bad = []
    cross = 0
    for i in ix.delivered:
        r = ix.rec(i)
        src, dst = r["src_segment"], r["dst_segment"]
        if src == QUARANTINE or r["vlan"] != dst:
            bad.append(i)
            continue
        if src != dst:
            cross += 1
            if (r["flow"], r["seq"], r["attempt"], src, dst) not in allowed:
                bad.append(i)
    return _verdict(3, bad, {"deliveries": len(ix.delivered), "cross_segment": cross},
                    "segment confinement held", "a delivery bypassed segment confinement")


def _session_intervals(ix: TraceIndex) -> dict[str, list[list[int]]]:
    out: dict[str, list[list[int]]] = defaultdict(list)
    for r in ix.records:
        p = r.get("principal")
        if r.fact == "auth-granted":
            if out[p] and out[p][-1][1] is None:
                out[p][-1][1] = r.at
            out[p].append([r.at, None])
        elif r.fact in ("session-expired", "session-ended") and out[p] and out[p][-1][1] is None:
            out[p][-1][1] = r.at
    return out


def _live_session(intervals, t: int):
    for iv in intervals:
        if iv[0] <= t and (iv[1] is None or t < iv[1]):
            return iv
    return None


def check_dr5(ix: TraceIndex) -> RequirementVerdict:
    """Deliveries only for authorized principals; rules only from the owning scope."""
    sessions = _session_intervals(ix)
    grace = ix.sc.settings.install_us
    last_auth: dict[int, object] = {}
    parent: dict[int, int | None] = {}
    home: dict[int, int] = {}
    bad = []
    unauthorized = 0
    for i, r in enumerate(ix.records):
        if r.fact == "controller-up":
            parent[r["controller"]] = r["parent"]
        elif r.fact == "controller-failover":
            dead, sb = r["failed"], r["standby"]
            parent[sb] = parent.get(dead)
            for c, p in list(parent.items()):
                if p == dead and c != sb:
                    parent[c] = sb
        elif r.fact in ("switch-homed", "switch-rehomed"):
            home[r["switch"]] = r["controller"]
        elif r.fact == "rule-installed":
            chain, c = [], home.get(r["switch"])
            while c is not None and c not in chain:
                chain.append(c)
                c = parent.get(c)
            if r["installed_by"] not in chain:
                bad.append(i)
        elif r.fact == "flow-authorized":
            if r["principal"] != ix.requester(r["flow"]):
                bad.append(i)
            last_auth[r["flow"]] = _live_session(sessions.get(r["principal"], []), r.at)
            if last_auth[r["flow"]] is None:
                bad.append(i)
        elif r.fact == "packet-delivered" and not r.get("copy"):
            iv = last_auth.get(r["flow"])
            if iv is None or (iv[1] is not None and r["created"] > iv[1] + grace):
                bad.append(i)
                unauthorized += 1
    return _verdict(5, bad, {"unauthorized_deliveries": unauthorized,
                             "rules_installed": len(ix.facts["rule-installed"])},
                    "only authorized principals were served", "authority was violated")


def check_dr4(ix: TraceIndex) -> RequirementVerdict:
    """Order, completeness between reroutes, bounded reroute gaps, conservation."""
    bad = []
    st = ix.sc.settings
    # in-order delivery of first attempts along one path
    last_seq: dict[tuple, int] = {}
    for i in ix.delivered:
        r = ix.rec(i)
        if r["attempt"]:
            continue
        key = (r["flow"], tuple(r["links"]))
        if key in last_seq and r["seq"] < last_seq[key]:
            bad.append(i)
        last_seq[key] = max(r["seq"], last_seq.get(key, -1))
    # completeness: no unexplained loss for reserved classes
    admitted = set(ix.admitted())
    for i, r in ix.of("packet-dropped"):
        if r.get("copy") or r["flow"] not in admitted:
            continue
        if ix.flows[r["flow"]].traffic_class.label in REQUIRE_ORDER and r["reason"] not in ATTRIBUTABLE \
                and not r["reason"].startswith(("denied-", "admission-")):
            bad.append(i)
    # reroute gaps and make-before-break
    gaps = []
    failures = ix.of("link-failure")
    started: dict[int, int] = {}
    path_switches: dict[int, int] = {}
    for i, r in enumerate(ix.records):
        if r.fact == "reroute-started":
            started[r["flow"]] = i
        elif r.fact == "rule-removed" and r["flow"] in started:
            bad.append(i)
        elif r.fact == "reroute-completed":
            s = started.pop(r["flow"], None)
            cause = [f for f in failures if s is not None and f[0] < s]
            if cause:
                gap = r.at - cause[-1][1].at
                gaps.append(gap)
                budget = st.failover_misses * st.heartbeat_us + st.install_us * r["path_switches"]
                path_switches[r["flow"]] = r["path_switches"]
                if gap > budget:
                    bad.append(i)
    # conservation per attempt
    ends: dict[tuple, list[int]] = defaultdict(list)
    for fact in TERMINAL:
        for i, r in ix.of(fact):
            if not r.get("copy"):
                ends[ix.ident(i)].append(i)
    for ident, i in ix.injected.items():
        got = ends.pop(ident, [])
        if len(got) != 1:
            bad.append(got[1] if len(got) > 1 else i)
    for extra in ends.values():
        bad.extend(extra)
    run_end = ix.rec(ix.end_index)
    if run_end["in_flight"] != len(ix.facts["packet-in-flight"]):
        bad.append(ix.end_index)
    # time never runs backwards
    for i in range(1, len(ix.records)):
        if ix.records[i].at < ix.records[i - 1].at:
            bad.append(i)
    metrics = {"reroutes": len(gaps), "max_reroute_gap_us": max(gaps, default=0),
               "attempts": len(ix.injected)}
    return _verdict(4, bad, metrics, "ordered, complete delivery with bounded reroutes",
                    "ordering, completeness or reroute budget violated")


def check_dr6(ix: TraceIndex) -> RequirementVerdict:
    """Tampered packets are never delivered and always nacked or reported."""
    tampered = {(r["flow"], r["seq"], r["attempt"]): i for i, r in ix.of("tamper-injected")}
    if not tampered:
        return _na(6, "no tampering injected")
    outcome: dict[tuple, tuple[str, int]] = {}
    for fact in ("packet-delivered", "integrity-nack", "integrity-failure", "duplicate-discarded",
                 "packet-dropped", "packet-in-flight"):
        for i, r in ix.of(fact):
            if not r.get("copy"):
                outcome[ix.ident(i)] = (fact, i)
    bad = []
    counts = defaultdict(int)
    for ident, ti in sorted(tampered.items()):
        fact, i = outcome.get(ident, ("missing", ti))
        counts[fact] += 1
        if fact in ("packet-delivered", "duplicate-discarded", "missing"):
            bad.append(i)
        elif fact == "integrity-nack":
            nxt = (ident[0], ident[1], ident[2] + 1)
            if nxt not in ix.injected and ix.rec(i).at + (ix.rec(i).at - ix.created(i)) <= ix.end_time:
                bad.append(i)
    detected = counts["integrity-nack"] + counts["integrity-failure"]
    reached = detected + counts["packet-delivered"] + counts["duplicate-discarded"]
    metrics = {"tampered": len(tampered), "detected": detected, "reached_sink": reached,
               "integrity_failures": counts["integrity-failure"],
               "lost_in_network": counts["packet-dropped"], "in_flight": counts["packet-in-flight"],
               "retransmit_limit": ix.sc.settings.retransmit_limit}
    return _verdict(6, bad, metrics, "every tampered packet that reached its sink was detected",
                    "a tampered packet went undetected")


def _rehome_windows(ix: TraceIndex) -> list[tuple[int, int, int]]:
    """(record index, kill time, control restored time) per killed controller."""
    out = []
    for i, r in ix.of("controller-killed"):
        cid = r["controller"]
        restored = ix.end_time
        target = None
        for j, q in enumerate(ix.records[i:], start=i):
            if q.fact == "controller-failover" and q["failed"] == cid:
                target = q["standby"]
            elif q.fact == "degraded-mode" and q["failed"] == cid:
                target = q["serving"]
            elif q.fact == "control-plane-lost" and q["controller"] == cid:
                break
            elif q.fact == "switch-rehomed" and q["controller"] == target:
                restored = q.at
                if j + 1 < len(ix.records) and ix.records[j + 1].fact != "switch-rehomed":
                    break
        out.append((i, r.at, restored))
    return out


def check_dr7(ix: TraceIndex) -> RequirementVerdict:
    """Availability of reserved flows and loss-free control-plane failover."""
    flows = [fid for fid in ix.admitted() if ix.flows[fid].traffic_class.label in REQUIRE_ORDER]
    if not flows:
        return _na(7, "no admitted time-critical or guaranteed flow")
    threshold = ix.sc.settings.availability_threshold
    bad, metrics = [], {}
    for fid in flows:
        f = ix.flows[fid]
        own = ix.by_flow[fid]
        start_i = next(i for i in own if ix.rec(i).fact == "flow-established")
        first_sent = next((ix.rec(i).at for i in own if ix.rec(i).fact == "packet-injected"), None)
        start = max(ix.rec(start_i).at, first_sent if first_sent is not None else 0)
        end = next((ix.rec(i).at for i in own if ix.rec(i).fact in ("flow-stopped", "flow-torn-down")
                    and i > start_i), ix.end_time)
        excluded = []
        for i, r in ix.of("device-unplugged"):
            if r["planned"] and r["host"] in (f.src, f.dst) and start <= r.at < end:
                back = next((ix.rec(j).at for j in own if j > i and ix.rec(j).fact == "flow-established"), end)
                excluded.append((r.at, back))
        times = [start] + sorted(ix.rec(i).at for i in ix.delivered
                                 if ix.rec(i)["flow"] == fid and start <= ix.rec(i).at <= end) + [end]

        def hidden(a, b):
            return sum(max(0, min(b, y) - max(a, x)) for x, y in excluded)

        # a gap only counts once it exceeds two periods plus worst non-preemptive blocking en route
        blocking = max((sum(ser_us(ix.sc.settings.max_frame_bytes, ix.links[l].bandwidth) for l in r["links"])
                        for i, r in ((i, ix.rec(i)) for i in own) if r.fact == "flow-path"), default=0)
        slack = 2 * f.period_us + blocking
        down = sum(max(0, (b - a) - hidden(a, b) - slack) for a, b in zip(times, times[1:]))
        span = (end - start) - hidden(start, end)
        avail = 1.0 - down / span if span > 0 else 1.0
        metrics[str(fid)] = {"availability": round(avail, 6), "window_us": span, "downtime_us": down,
                             "gap_slack_us": slack}
        if avail < threshold:
            bad.append(start_i)
    killed = _rehome_windows(ix)
    for ki, t0, t1 in killed:
        for fid in ix.admitted():
            wins = ix.windows(fid)
            if not any(w.start <= t0 and (w.end is None or w.end > t0) for w in wins):
                continue
            for i in ix.by_flow[fid]:
                r = ix.rec(i)
                if r.fact == "packet-dropped" and t0 <= r.at <= t1:
                    bad.append(i)
    m = {"threshold": threshold, "flows": metrics,
         "failovers": [{"killed_at": t0, "restored_at": t1} for _, t0, t1 in killed]}
    return _verdict(7, bad, m, "availability above threshold", "availability was lost")


def check_dr8(ix: TraceIndex) -> RequirementVerdict:
    """Flows with a legacy endpoint are delivered through the SDN gateway."""
    legacy = {n.id for n in ix.sc.nodes if n.kind.value == "legacy_switch"}
    if not legacy:
        return _na(8, "no legacy region")
    attach = {}
    for l in ix.sc.links:
        for end, other in ((l.a, l.b), (l.b, l.a)):
            attach.setdefault(end[0], set()).add(other[0])
    legacy_hosts = {h for h, peers in attach.items() if peers & legacy and h not in legacy
                    and ix.sc.node(h).kind.value == "host"}
    flows = [f for f in ix.sc.flows if f.src in legacy_hosts or f.dst in legacy_hosts]
    if not flows:
        return _na(8, "no flow touches the legacy region")
    gw_links = set()
    gateways = {n.id: set(n.gateway_ports) for n in ix.sc.nodes if n.gateway_ports}
    for l in ix.sc.links:
        for end in (l.a, l.b):
            if end[1] in gateways.get(end[0], ()):
                gw_links.add(l.id)
    bad, metrics = [], {}
    for f in flows:
        got = [i for i in ix.delivered if ix.rec(i)["flow"] == f.id]
        crossed = [i for i in got if set(ix.rec(i)["links"]) & gw_links]
        metrics[str(f.id)] = {"delivered": len(got), "via_gateway": len(crossed)}
        if not got:
            bad.append(ix.by_flow[f.id][0] if ix.by_flow[f.id] else ix.end_index)
        bad.extend(i for i in got if i not in crossed)
    return _verdict(8, bad, {"flows": metrics}, "legacy flows delivered across the gateway",
                    "a legacy flow was not delivered through the gateway")


def _rejected_after(ix: TraceIndex, plug: int, host: int) -> bool:
    """The device's credential was refused before it was ever granted access."""
    for i in range(plug + 1, len(ix.records)):
        r = ix.records[i]
        if r.fact == "auth-granted" and r["host"] == host:
            return False
        if r.fact == "auth-denied" and r.get("stage") == "credential" and r.get("host") == host:
            return True
        if r.fact == "device-plug-in" and r["host"] == host:
            return False
    return False


ONBOARDING_FAULTS = frozenset({"unattached", "session-expired"})


def _service_after(ix: TraceIndex, plug: int, host: int) -> tuple[bool, bool, set]:
    """After ``plug``: was the device granted, was a flow touching it admitted, which denials."""
    touching = {f.id for f in ix.sc.flows if host in (f.src, f.dst)}
    granted = admitted = False
    denied = set()
    for i in range(plug + 1, ix.end_index):
        r = ix.records[i]
        if r.fact == "device-plug-in" and r["host"] == host:
            break
        if r.fact == "auth-granted" and r["host"] == host:
            granted = True
        elif r.fact == "flow-admitted" and r["flow"] in touching:
            admitted = True
        elif r.fact == "auth-denied" and r.get("stage") == "flow" and host in (r["src"], r["dst"]):
            denied.add(r["reason"])
    return granted, admitted, denied


def check_dr9(ix: TraceIndex) -> RequirementVerdict:
    """Plug-in to first delivery within the onboarding bound and without operators.

    A device must be granted access after plug-in.  It is then expected to
    deliver only once a flow touching it is admitted; devices whose flows are
    refused by policy or capacity, or whose peer never joins, count as unserved.
    """
    plugs = ix.of("device-plug-in")
    if not plugs:
        return _na(9, "no device plugged in")
    bound = ix.sc.settings.onboarding_bound_us or 50_000
    bad = [i for i, _ in ix.of("manual-action")]
    times = []
    rejected = unserved = 0
    for i, r in plugs:
        h = r["host"]
        if _rejected_after(ix, i, h):
            rejected += 1
            continue
        granted, admitted, denied = _service_after(ix, i, h)
        if not granted or denied & ONBOARDING_FAULTS:
            bad.append(i)
            continue
        if not admitted:
            unserved += 1
            continue
        first = next((j for j in ix.delivered if j > i and h in (ix.rec(j)["src"], ix.rec(j)["dst"])), None)
        if first is None:
            bad.append(i)
            continue
        t = ix.rec(first).at - r.at
        times.append(t)
        if t > bound:
            bad.append(first)
    if not times and not bad:
        return _na(9, "no plugged-in device was expected to deliver")
    metrics = {"bound_us": bound, "onboarding_us": times, "refused": rejected, "unserved": unserved,
               "manual_actions": len(ix.facts["manual-action"])}
    return _verdict(9, bad, metrics, "devices onboarded within the bound", "onboarding failed")


def check_dr10(ix: TraceIndex) -> RequirementVerdict:
    """Remote-access principals reach only their permitted segments via the VPN gateway."""
    vpn = {r["principal"] for _, r in ix.of("auth-granted") if r["entry"] == "vpn"}
    if not vpn:
        return _na(10, "no remote-access session")
    roles = ix.sc.policy.roles
    principals = {p.id: p for p in ix.sc.policy.principals}
    bad, metrics = [], {}
    for pid in sorted(vpn):
        p = principals[pid]
        permitted = set().union(*(set(roles.get(role, ())) for role in p.roles)) if p.roles else set()
        got = [i for i in ix.delivered if ix.requester(ix.rec(i)["flow"]) == pid or ix.rec(i)["src"] == p.host]
        for i in got:
            r = ix.rec(i)
            if "VpnGateway" not in r["vnfs"] or r["dst_segment"] not in permitted:
                bad.append(i)
        if not got:
            bad.append(next(i for i, r in ix.of("auth-granted") if r["principal"] == pid))
        metrics[pid] = {"delivered": len(got), "segments": sorted({ix.rec(i)["dst_segment"] for i in got})}
    return _verdict(10, bad, {"principals": metrics}, "remote access confined to its targets",
                    "remote access reached too little or too much")


def check_dr11(ix: TraceIndex) -> RequirementVerdict:
    """A northbound app registered at run time changed an installed path."""
    regs = ix.of("app-registered")
    if not regs:
        return _na(11, "no northbound app registered")
    altered = []
    for i, r in regs:
        for j, q in ix.of("flow-path"):
            if j > i and q["source"] == f"app:{r['app']}" and q["nodes"] != q["default_nodes"]:
                altered.append(j)
                break
    metrics = {"apps": [r["app"] for _, r in regs], "altered_paths": len(altered)}
    bad = [] if altered else [regs[0][0]]
    return _verdict(11, bad, metrics, "a runtime app changed routing", "no app changed routing")


CHECKS = {1: check_dr1, 2: check_dr2, 3: check_dr3, 4: check_dr4, 5: check_dr5, 6: check_dr6,
          7: check_dr7, 8: check_dr8, 9: check_dr9, 10: check_dr10, 11: check_dr11}


def verify(trace: ScenarioTrace, scenario: Scenario) -> list[RequirementVerdict]:
    ix = TraceIndex(trace, scenario)
    return [CHECKS[dr](ix) for dr in sorted(CHECKS)]


def all_pass(verdicts: list[RequirementVerdict]) -> bool:
    return all(v.status is not Status.FAIL for v in verdicts)


def build_report(scenario: Scenario, verdicts: list[RequirementVerdict], seed: int) -> dict:
    return {
        "format_version": REPORT_FORMAT_VERSION,
        "scenario": scenario.name,
        "seed": seed,
        "duration_us": scenario.duration_us,
        "passed": all_pass(verdicts),
        "verdicts": [v.to_dict() for v in verdicts],
        "coverage": {str(k): v for k, v in coverage_report(verdicts).items()},
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
