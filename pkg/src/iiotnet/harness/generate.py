"""Random small scenarios for isolation testing.

Each scenario is a random switch tree (plus an optional chord) with an NFV host,
a handful of end hosts in random segments, random roles and segment rules, and
flows between random host pairs.  Some hosts join by port authentication later
in the run and some of those present a wrong credential.
"""

from __future__ import annotations

import random

from ..controlplane import Level
from ..dataplane import TrafficClass
from ..nfv import VnfKind
from ..policy import Verdict
from ..topology import NodeKind
from .scenario import (ControllerSpec, EventSpec, FlowSpec, LinkSpec, NodeSpec, PolicySpec,
                       PrincipalSpec, RuleSpec, Scenario, SegmentSpec, Settings, VnfSpec)

MAX_NODES = 10
NFV_NODE = 30
VLANS = (10, 20, 30)
CLASSES = (TrafficClass.TIME_CRITICAL, TrafficClass.GUARANTEED, TrafficClass.BEST_EFFORT)


def random_scenario(seed: int, duration_us: int = 60_000) -> Scenario:
    rng = random.Random(seed)
    n_sw = rng.randint(2, 4)
    n_hosts = rng.randint(3, MAX_NODES - n_sw - 1)
    switches = list(range(1, n_sw + 1))
    nodes = [NodeSpec(s, NodeKind.SDN_SWITCH, list(range(1, 9)), name=f"s{s}") for s in switches]
    nodes.append(NodeSpec(NFV_NODE, NodeKind.NFV_HOST, [1], name="nfv", cpu=8, mem=4096))
    free = {s: list(range(1, 9)) for s in switches}
    links: list[LinkSpec] = []

    def connect(a: int, pa: int, b: int, pb: int, present: bool = True, bw: int = 100_000) -> int:
        lid = len(links) + 1
        links.append(LinkSpec(lid, (a, pa), (b, pb), latency=rng.randint(2, 20), bandwidth=bw,
                              jitter=rng.randint(0, 2), present=present))
        return lid

    for s in switches[1:]:
        t = rng.choice([x for x in switches if x < s])
        connect(s, free[s].pop(0), t, free[t].pop(0))
    if n_sw >= 3 and rng.random() < 0.5:
        a, b = rng.sample(switches, 2)
        if not any({l.a[0], l.b[0]} == {a, b} for l in links):
            connect(a, free[a].pop(0), b, free[b].pop(0))
    connect(NFV_NODE, 1, 1, free[1].pop(0))

    vlans = sorted(rng.sample(VLANS, rng.randint(2, 3)))
    segments = {v: SegmentSpec(v, f"seg{v}", security_level=rng.randint(0, 3)) for v in vlans}
    roles = {f"r{i}": sorted(rng.sample(vlans, rng.randint(1, len(vlans)))) for i in range(3)}

    principals: list[PrincipalSpec] = []
    events: list[EventSpec] = []
    hosts: list[int] = []
    access_kbps: dict[int, int] = {}
    joins: dict[int, str] = {}  # host -> "static" | "port" | "rogue" | "none"
    for k in range(n_hosts):
        hid = 11 + k
        sw = rng.choice(switches)
        port = free[sw].pop(0)
        seg = rng.choice(vlans)
        how = rng.choices(("static", "port", "rogue", "none"), weights=(5, 2, 1, 1))[0]
        late = how in ("port", "rogue")
        nodes.append(NodeSpec(hid, NodeKind.HOST, [1], name=f"h{hid}", present=not late,
                              credential="guess" if how == "rogue" else None))
        lid = connect(hid, 1, sw, port, present=not late, bw=rng.choice((10_000, 100_000)))
        access_kbps[hid] = links[-1].bandwidth
        if not late:
            segments[seg].ports.append((sw, port))
        if how != "none":
            principals.append(PrincipalSpec(
                f"p{hid}", rng.choice(("device", "human_user")), sorted(rng.sample(sorted(roles), rng.randint(1, 2))),
                credential=f"secret-{hid}", host=hid, segment=seg,
                auth="static" if how == "static" else "port"))
        if late:
            events.append(EventSpec(rng.randint(1_000, duration_us // 3), "plug-in", {"host": hid, "link": lid}))
        hosts.append(hid)
        joins[hid] = how

    rules = []
    for a in vlans:
        for b in vlans:
            if a != b and rng.random() < 0.6:
                cls = rng.choice((None,) + CLASSES)
                rules.append(RuleSpec(a, b, cls, rng.choice((Verdict.ALLOW, Verdict.ALLOW, Verdict.DENY))))
    transitions = [[a, b] for a in vlans for b in vlans if a != b]
    attach = [t for t in transitions if rng.random() < 0.8]
    vnfs = []
    if attach:
        vnfs.append(_vnf("fw", VnfKind.FIREWALL, [tuple(t) for t in attach]))
    if any(j in ("port", "rogue") for j in joins.values()):
        vnfs.append(_vnf("nac", VnfKind.AUTHENTICATOR, ["any"]))

    flows: list[FlowSpec] = []
    seen = set()
    # A host's own uplink is outside the network's control, so keep each sender under it.
    offered = {h: 0 for h in hosts}
    for fid in range(1, rng.randint(2, 6) + 1):
        src, dst = rng.sample(hosts, 2)
        cls = rng.choice(CLASSES)
        if (src, dst, cls) in seen:
            continue
        seen.add((src, dst, cls))
        size = rng.choice((64, 256, 512, 1000))
        period = rng.choice((500, 1000, 2000))
        load = -(-size * 8000 // period)
        if offered[src] + load > access_kbps[src] * 0.8:
            continue
        offered[src] += load
        on_auth = joins[src] == "port" and rng.random() < 0.7
        start = 0 if on_auth else rng.randint(0, duration_us // 2)
        flows.append(FlowSpec(
            fid, src, dst, cls, size, period, start_us=start,
            demand_kbps=load if cls is not TrafficClass.BEST_EFFORT else 0,
            latency_bound_us=5_000 if cls is TrafficClass.TIME_CRITICAL else None,
            mode=rng.choice(("proactive", "reactive")),
            start_on="auth" if on_auth else "time"))

    return Scenario(
        name=f"random-{seed}", duration_us=duration_us, seed=seed,
        description="randomly generated isolation scenario", settings=Settings(),
        nodes=nodes, links=links, segments=list(segments.values()),
        controllers=[ControllerSpec(1, Level.FACILITY, list(switches))],
        vnfs=vnfs, policy=PolicySpec(roles, principals, rules), flows=flows, events=events)


def _vnf(name: str, kind: VnfKind, attach: list) -> VnfSpec:
    return VnfSpec(name, kind, cpu=1, mem=256, processing_us=10, attach=attach)
