"""Scenario description, YAML loading with line diagnostics, and static validation."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path as FsPath
from typing import Any

import yaml

from ..controlplane import APP_FACTORIES, Controller, Level, hierarchy_problems
from ..dataplane import TrafficClass
from ..nfv import VnfKind
from ..policy import PolicyRule, SegmentPolicy, UnknownSegment, Verdict, compile_policy
from ..topology import QUARANTINE_VLAN, Link, Node, NodeKind, Region, Segment, Topology, TopologyError

SCENARIO_FORMAT_VERSION = 1

EVENT_KINDS = {
    "link-failure": ("link",),
    "link-repair": ("link",),
    "controller-kill": ("controller",),
    "host-failure": ("node",),
    "plug-in": ("host", "link"),
    "unplug": ("host",),
    "tamper": ("flow",),
    "register-app": ("controller", "app"),
    "deregister-app": ("controller", "app"),
    "start-flow": ("flow",),
    "stop-flow": ("flow",),
    "retarget": ("stop", "start"),
    "authenticate": ("principal", "credential"),
    "manual": (),
}


class ScenarioError(Exception):
    """Parse or validation failure; ``diagnostics`` holds every finding."""

    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.field}: {self.message}"


@dataclass
class Settings:
    heartbeat_us: int = 500
    detect_heartbeats: int = 2
    failover_misses: int = 3
    install_us: int = 100
    channel_us: int = 100
    max_frame_bytes: int = 1500
    queue_capacity: int = 64
    miss_buffer: int = 64
    retransmit_limit: int = 3
    negative_cache_us: int = 10_000
    session_expiry_us: int = 60_000_000
    nfv_boot_us: int = 1_000
    nfv_migration_us: int = 5_000
    auth_retry_us: int = 1_000
    availability_threshold: float = 0.99
    default_max_loss: float = 0.01
    onboarding_bound_us: int | None = None


@dataclass
class NodeSpec:
    id: int
    kind: NodeKind
    ports: list[int]
    name: str = ""
    region: Region = Region.SDN
    gateway_ports: list[int] = field(default_factory=list)
    present: bool = True
    cpu: int = 0
    mem: int = 0
    credential: str | None = None


@dataclass
class LinkSpec:
    id: int
    a: tuple[int, int]
    b: tuple[int, int]
    latency: int
    bandwidth: int
    jitter: int = 0
    present: bool = True


@dataclass
class SegmentSpec:
    vlan: int
    name: str
    security_level: int = 0
    ports: list[tuple[int, int]] = field(default_factory=list)
    external: bool = False


@dataclass
class ControllerSpec:
    id: int
    level: Level
    scope: list[int] = field(default_factory=list)
    parent: int | None = None
    standby: int | None = None


@dataclass
class VnfSpec:
    name: str
    kind: VnfKind
    cpu: int
    mem: int
    processing_us: int = 0
    attach: list = field(default_factory=list)
    host: int | None = None


@dataclass
class PrincipalSpec:
    id: str
    kind: str
    roles: list[str]
    credential: str
    host: int | None = None
    segment: int | None = None
    traffic_class: TrafficClass = TrafficClass.BEST_EFFORT
    auth: str = "port"  # port | static | vpn


@dataclass
class RuleSpec:
    from_segment: int
    to_segment: int
    traffic_class: TrafficClass | None
    verdict: Verdict
    require_firewall: bool = True


@dataclass
class PolicySpec:
    roles: dict[str, list[int]] = field(default_factory=dict)
    principals: list[PrincipalSpec] = field(default_factory=list)
    rules: list[RuleSpec] = field(default_factory=list)

    def segment_policy(self) -> SegmentPolicy:
        return SegmentPolicy([PolicyRule(r.from_segment, r.to_segment, r.traffic_class, r.verdict,
                                         r.require_firewall) for r in self.rules])


@dataclass
class FlowSpec:
    id: int
    src: int
    dst: int
    traffic_class: TrafficClass
    size: int
    period_us: int
    start_us: int = 0
    stop_us: int | None = None
    demand_kbps: int = 0
    latency_bound_us: int | None = None
    jitter_bound_us: int | None = None
    max_loss: float | None = None
    mode: str = "proactive"  # proactive | reactive
    requester: str | None = None
    start_on: str = "time"  # time | auth | event
    tamper_probability: float = 0.0


@dataclass
class EventSpec:
    at: int
    kind: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    duration_us: int
    seed: int = 0
    description: str = ""
    settings: Settings = field(default_factory=Settings)
    nodes: list[NodeSpec] = field(default_factory=list)
    links: list[LinkSpec] = field(default_factory=list)
    segments: list[SegmentSpec] = field(default_factory=list)
    controllers: list[ControllerSpec] = field(default_factory=list)
    vnfs: list[VnfSpec] = field(default_factory=list)
    policy: PolicySpec = field(default_factory=PolicySpec)
    flows: list[FlowSpec] = field(default_factory=list)
    events: list[EventSpec] = field(default_factory=list)
    redundant: list[tuple[int, int]] = field(default_factory=list)
    requirements: list[int] = field(default_factory=list)
    lines: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def node(self, nid: int) -> NodeSpec:
        return next(n for n in self.nodes if n.id == nid)

    def flow(self, fid: int) -> FlowSpec:
        return next(f for f in self.flows if f.id == fid)

    def link(self, lid: int) -> LinkSpec:
        return next(l for l in self.links if l.id == lid)

    def build_topology(self, include_absent: bool = False) -> Topology:
        topo = Topology()
        for n in self.nodes:
            if n.present or include_absent:
                topo.add_node(Node(n.id, n.kind, list(n.ports), n.region, n.name, set(n.gateway_ports)))
        for l in self.links:
            if l.present:
                topo.add_link(Link(l.id, tuple(l.a), tuple(l.b), l.latency, l.bandwidth, l.jitter))
        for s in self.segments:
            topo.add_segment(Segment(s.vlan, s.name, s.security_level, set(), s.external))
        topo.add_segment(Segment(QUARANTINE_VLAN, "quarantine", 0))
        for s in self.segments:
            for node, port in s.ports:
                if node in topo.nodes:
                    topo.assign_port_segment(node, port, s.vlan)
        return topo


# --- parsing ----------------------------------------------------------------------


def _line_map(text: str) -> dict[str, int]:
    """Dotted field path -> 1-based source line, from the YAML node tree."""
    out: dict[str, int] = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out.setdefault(path or "<root>", node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{path}.{k.value}" if path else str(k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    if root is not None:
        walk(root, "")
    return out


class _Reader:
    def __init__(self, lines: dict[str, int]):
        self.lines = lines
        self.problems: list[Diagnostic] = []

    def fail(self, path: str, msg: str) -> None:
        line = self.lines.get(path)
        probe = path
        while line is None and ("." in probe or "[" in probe):
            probe = probe[: max(probe.rfind("."), probe.rfind("["))]
            line = self.lines.get(probe)
        self.problems.append(Diagnostic(path, msg, line))

    def mapping(self, value, path: str, allowed: set[str]) -> dict:
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
            return {}
        for k in value:
            if k not in allowed:
                self.fail(f"{path}.{k}" if path else str(k), f"unknown field {k!r}")
        return value

    def get(self, d: dict, key: str, path: str, kind, default=..., conv=None):
        p = f"{path}.{key}" if path else key
        if key not in d or d[key] is None:
            if default is ...:
                self.fail(p, "required field missing")
                return None
            return default
        v = d[key]
        if conv is not None:
            try:
                return conv(v)
            except (KeyError, ValueError, TypeError):
                self.fail(p, f"invalid value {v!r}")
                return default if default is not ... else None
        if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
            self.fail(p, f"expected an integer, got {v!r}")
            return default if default is not ... else None
        if kind is float and (isinstance(v, bool) or not isinstance(v, (int, float))):
            self.fail(p, f"expected a number, got {v!r}")
            return default if default is not ... else None
        if kind is float:
            return float(v)
        if kind is not None and not isinstance(v, kind):
            self.fail(p, f"expected {kind.__name__}, got {v!r}")
            return default if default is not ... else None
        return v

    def seq(self, d: dict, key: str, path: str) -> list:
        v = d.get(key) or []
        if not isinstance(v, list):
            self.fail(f"{path}.{key}" if path else key, "expected a list")
            return []
        return v


def _pair(v) -> tuple[int, int]:
    if not (isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, int) for x in v)):
        raise ValueError(v)
    return (v[0], v[1])


def _int_list(v) -> list[int]:
    if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ValueError(v)
    return list(v)


def _class(v) -> TrafficClass:
    return TrafficClass.parse(str(v).replace("-", "_"))


def _class_or_any(v) -> TrafficClass | None:
    return None if v == "any" else _class(v)


def _attach(v):
    out = []
    for a in v:
        if isinstance(a, str):
            out.append(a)
        else:
            out.append(_pair(a))
    return out


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse YAML text into a Scenario; raises ParseError with line diagnostics."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError([Diagnostic(source, f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                                     mark.line + 1 if mark else None)]) from None
    lines = _line_map(text)
    r = _Reader(lines)
    top = r.mapping(data, "", {"format_version", "name", "description", "duration_us", "seed",
                               "settings", "nodes", "links", "segments", "controllers", "vnfs",
                               "policy", "flows", "events", "redundant", "requirements"})
    if not top:
        raise ParseError(r.problems or [Diagnostic(source, "empty scenario")])
    fv = top.get("format_version", SCENARIO_FORMAT_VERSION)
    if fv != SCENARIO_FORMAT_VERSION:
        r.fail("format_version", f"unsupported format version {fv!r}")

    settings = Settings()
    raw = r.mapping(top.get("settings") or {}, "settings", {f.name for f in fields(Settings)})
    for f in fields(Settings):
        if f.name in raw:
            kind = float if f.name in ("availability_threshold", "default_max_loss") else int
            setattr(settings, f.name, r.get(raw, f.name, "settings", kind, getattr(settings, f.name)))

    nodes = []
    for i, n in enumerate(r.seq(top, "nodes", "")):
        p = f"nodes[{i}]"
        n = r.mapping(n, p, {"id", "kind", "ports", "name", "region", "gateway_ports", "present",
                              "cpu", "mem", "credential"})
        if not n:
            continue
        kind = r.get(n, "kind", p, None, conv=NodeKind)
        region_default = Region.LEGACY if kind is NodeKind.LEGACY_SWITCH else Region.SDN
        nodes.append(NodeSpec(
            id=r.get(n, "id", p, int), kind=kind,
            ports=r.get(n, "ports", p, None, conv=_int_list),
            name=r.get(n, "name", p, str, ""),
            region=r.get(n, "region", p, None, region_default, conv=Region),
            gateway_ports=r.get(n, "gateway_ports", p, None, [], conv=_int_list),
            present=r.get(n, "present", p, bool, True),
            cpu=r.get(n, "cpu", p, int, 0), mem=r.get(n, "mem", p, int, 0),
            credential=r.get(n, "credential", p, str, None)))

    links = []
    for i, l in enumerate(r.seq(top, "links", "")):
        p = f"links[{i}]"
        l = r.mapping(l, p, {"id", "a", "b", "latency", "bandwidth", "jitter", "present"})
        if not l:
            continue
        links.append(LinkSpec(
            id=r.get(l, "id", p, int), a=r.get(l, "a", p, None, conv=_pair),
            b=r.get(l, "b", p, None, conv=_pair), latency=r.get(l, "latency", p, int),
            bandwidth=r.get(l, "bandwidth", p, int), jitter=r.get(l, "jitter", p, int, 0),
            present=r.get(l, "present", p, bool, True)))

    segments = []
    for i, s in enumerate(r.seq(top, "segments", "")):
        p = f"segments[{i}]"
        s = r.mapping(s, p, {"vlan", "name", "security_level", "ports", "external"})
        if not s:
            continue
        segments.append(SegmentSpec(
            vlan=r.get(s, "vlan", p, int), name=r.get(s, "name", p, str, ""),
            security_level=r.get(s, "security_level", p, int, 0),
            ports=r.get(s, "ports", p, None, [], conv=lambda v: [_pair(x) for x in v]),
            external=r.get(s, "external", p, bool, False)))

    controllers = []
    for i, c in enumerate(r.seq(top, "controllers", "")):
        p = f"controllers[{i}]"
        c = r.mapping(c, p, {"id", "level", "scope", "parent", "standby"})
        if not c:
            continue
        controllers.append(ControllerSpec(
            id=r.get(c, "id", p, int), level=r.get(c, "level", p, None, conv=Level.parse),
            scope=r.get(c, "scope", p, None, [], conv=_int_list),
            parent=r.get(c, "parent", p, int, None), standby=r.get(c, "standby", p, int, None)))

    vnfs = []
    for i, v in enumerate(r.seq(top, "vnfs", "")):
        p = f"vnfs[{i}]"
        v = r.mapping(v, p, {"name", "kind", "cpu", "mem", "processing_us", "attach", "host"})
        if not v:
            continue
        vnfs.append(VnfSpec(
            name=r.get(v, "name", p, str), kind=r.get(v, "kind", p, None, conv=VnfKind),
            cpu=r.get(v, "cpu", p, int), mem=r.get(v, "mem", p, int),
            processing_us=r.get(v, "processing_us", p, int, 0),
            attach=r.get(v, "attach", p, None, [], conv=_attach),
            host=r.get(v, "host", p, int, None)))

    pol = r.mapping(top.get("policy") or {}, "policy", {"roles", "principals", "rules"})
    roles = {}
    for role, segs in (pol.get("roles") or {}).items():
        roles[str(role)] = r.get(pol["roles"], role, "policy.roles", None, conv=_int_list)
    principals = []
    for i, pr in enumerate(r.seq(pol, "principals", "policy")):
        p = f"policy.principals[{i}]"
        pr = r.mapping(pr, p, {"id", "kind", "roles", "credential", "host", "segment", "class", "auth"})
        if not pr:
            continue
        principals.append(PrincipalSpec(
            id=r.get(pr, "id", p, str), kind=r.get(pr, "kind", p, str),
            roles=r.get(pr, "roles", p, None, [], conv=lambda v: [str(x) for x in v]),
            credential=r.get(pr, "credential", p, str), host=r.get(pr, "host", p, int, None),
            segment=r.get(pr, "segment", p, int, None),
            traffic_class=r.get(pr, "class", p, None, TrafficClass.BEST_EFFORT, conv=_class),
            auth=r.get(pr, "auth", p, str, "port")))
    rules = []
    for i, ru in enumerate(r.seq(pol, "rules", "policy")):
        p = f"policy.rules[{i}]"
        ru = r.mapping(ru, p, {"from", "to", "class", "verdict", "require_firewall"})
        if not ru:
            continue
        rules.append(RuleSpec(
            from_segment=r.get(ru, "from", p, int), to_segment=r.get(ru, "to", p, int),
            traffic_class=r.get(ru, "class", p, None, None, conv=_class_or_any),
            verdict=r.get(ru, "verdict", p, None, conv=lambda v: Verdict(str(v).lower())),
            require_firewall=r.get(ru, "require_firewall", p, bool, True)))
    policy = PolicySpec(roles, principals, rules)

    flows = []
    for i, f in enumerate(r.seq(top, "flows", "")):
        p = f"flows[{i}]"
        f = r.mapping(f, p, {"id", "src", "dst", "class", "size", "period_us", "start_us", "stop_us",
                              "demand_kbps", "latency_bound_us", "jitter_bound_us", "max_loss", "mode",
                              "requester", "start_on", "tamper_probability"})
        if not f:
            continue
        flows.append(FlowSpec(
            id=r.get(f, "id", p, int), src=r.get(f, "src", p, int), dst=r.get(f, "dst", p, int),
            traffic_class=r.get(f, "class", p, None, conv=_class), size=r.get(f, "size", p, int),
            period_us=r.get(f, "period_us", p, int), start_us=r.get(f, "start_us", p, int, 0),
            stop_us=r.get(f, "stop_us", p, int, None), demand_kbps=r.get(f, "demand_kbps", p, int, 0),
            latency_bound_us=r.get(f, "latency_bound_us", p, int, None),
            jitter_bound_us=r.get(f, "jitter_bound_us", p, int, None),
            max_loss=r.get(f, "max_loss", p, float, None), mode=r.get(f, "mode", p, str, "proactive"),
            requester=r.get(f, "requester", p, str, None), start_on=r.get(f, "start_on", p, str, "time"),
            tamper_probability=r.get(f, "tamper_probability", p, float, 0.0)))

    events = []
    for i, e in enumerate(r.seq(top, "events", "")):
        p = f"events[{i}]"
        if not isinstance(e, dict):
            r.fail(p, "expected a mapping")
            continue
        kind = r.get(e, "kind", p, str)
        at = r.get(e, "at", p, int)
        params = {k: v for k, v in e.items() if k not in ("kind", "at")}
        if kind is not None and kind not in EVENT_KINDS:
            r.fail(f"{p}.kind", f"unknown event kind {kind!r}")
        elif kind is not None:
            for need in EVENT_KINDS[kind]:
                if need not in params:
                    r.fail(f"{p}.{need}", "required field missing")
        events.append(EventSpec(at, kind, params))

    redundant = [r.get({"v": v}, "v", f"redundant[{i}]", None, conv=_pair)
                 for i, v in enumerate(r.seq(top, "redundant", ""))]
    scenario = Scenario(
        name=r.get(top, "name", "", str, source), duration_us=r.get(top, "duration_us", "", int),
        seed=r.get(top, "seed", "", int, 0), description=r.get(top, "description", "", str, ""),
        settings=settings, nodes=nodes, links=links, segments=segments, controllers=controllers,
        vnfs=vnfs, policy=policy, flows=flows, events=events, redundant=redundant,
        requirements=r.get(top, "requirements", "", None, [], conv=_int_list), lines=lines)
    if r.problems:
        raise ParseError(r.problems)
    return scenario


def load_scenario(path: str | FsPath, validate: bool = True) -> Scenario:
    text = FsPath(path).read_text()
    sc = parse_scenario(text, str(path))
    if validate:
        problems = validate_scenario(sc)
        if problems:
            raise ValidationError(problems)
    return sc


# --- validation -------------------------------------------------------------------


def validate_scenario(sc: Scenario) -> list[Diagnostic]:
    """Full static check without running; an empty list means the scenario is valid."""
    out: list[Diagnostic] = []

    def bad(path: str, msg: str) -> None:
        out.append(Diagnostic(path, msg, sc.lines.get(path) or sc.lines.get(path.split(".")[0])))

    if sc.duration_us is None or sc.duration_us <= 0:
        bad("duration_us", "must be > 0")
    nodes = {}
    for i, n in enumerate(sc.nodes):
        if n.id in nodes:
            bad(f"nodes[{i}].id", f"duplicate node id {n.id}")
        nodes[n.id] = n
        if not n.ports:
            bad(f"nodes[{i}].ports", "node needs at least one port")
        if not set(n.gateway_ports) <= set(n.ports or []):
            bad(f"nodes[{i}].gateway_ports", "gateway ports must be ports of the node")
        if n.gateway_ports and n.kind is not NodeKind.SDN_SWITCH:
            bad(f"nodes[{i}].gateway_ports", "only SDN switches have gateway ports")
        try:
            Node(n.id, n.kind, list(n.ports or []), n.region)
        except TopologyError as exc:
            bad(f"nodes[{i}]", str(exc))
        if n.kind is NodeKind.NFV_HOST and (n.cpu <= 0 or n.mem <= 0):
            bad(f"nodes[{i}]", "NFV hosts need positive cpu and mem capacity")

    links = {}
    used: dict[tuple[int, int], int] = {}
    for i, l in enumerate(sc.links):
        if l.id in links:
            bad(f"links[{i}].id", f"duplicate link id {l.id}")
        links[l.id] = l
        for end, name in ((l.a, "a"), (l.b, "b")):
            node = nodes.get(end[0])
            if node is None:
                bad(f"links[{i}].{name}", f"unknown node {end[0]}")
            elif end[1] not in node.ports:
                bad(f"links[{i}].{name}", f"node {end[0]} has no port {end[1]}")
            elif l.present:
                if end in used:
                    bad(f"links[{i}].{name}", f"port {end} already used by link {used[end]}")
                used[end] = l.id
        if l.a[0] == l.b[0]:
            bad(f"links[{i}]", "self-loop")
        if l.latency <= 0:
            bad(f"links[{i}].latency", "must be > 0")
        if l.bandwidth <= 0:
            bad(f"links[{i}].bandwidth", "must be > 0")
        if l.jitter < 0:
            bad(f"links[{i}].jitter", "must be >= 0")
        if l.present and not all(nodes.get(e[0]) and nodes[e[0]].present for e in (l.a, l.b)):
            bad(f"links[{i}].present", "present link attaches an absent node")
    for i, n in enumerate(sc.nodes):
        if n.kind is NodeKind.NFV_HOST:
            count = sum(1 for l in sc.links if l.present and n.id in (l.a[0], l.b[0]))
            if count != 1:
                bad(f"nodes[{i}]", "NFV hosts attach through exactly one link")

    vlans = set()
    for i, s in enumerate(sc.segments):
        if s.vlan in vlans:
            bad(f"segments[{i}].vlan", f"duplicate vlan {s.vlan}")
        vlans.add(s.vlan)
        if not 1 <= s.vlan <= 4093:
            bad(f"segments[{i}].vlan", "vlan must be in 1..4093 (4094 is quarantine)")
        if not 0 <= s.security_level <= 3:
            bad(f"segments[{i}].security_level", "must be in 0..3")
        for j, (node, port) in enumerate(s.ports):
            if node not in nodes or port not in nodes[node].ports:
                bad(f"segments[{i}].ports[{j}]", f"unknown port ({node}, {port})")

    # controller tree
    ctrl_ids = {c.id for c in sc.controllers}
    if len(ctrl_ids) != len(sc.controllers):
        bad("controllers", "duplicate controller ids")
    standbys = {c.standby for c in sc.controllers if c.standby is not None}
    sdn = sorted(n.id for n in sc.nodes if n.kind is NodeKind.SDN_SWITCH)
    for i, c in enumerate(sc.controllers):
        for sw in c.scope:
            if sw not in nodes or nodes[sw].kind is not NodeKind.SDN_SWITCH:
                bad(f"controllers[{i}].scope", f"{sw} is not an SDN switch")
        if c.standby is not None:
            if c.standby not in ctrl_ids:
                bad(f"controllers[{i}].standby", f"unknown controller {c.standby}")
        if c.id in standbys and (c.scope or c.parent is not None):
            bad(f"controllers[{i}]", "a standby controller carries no scope or parent of its own")
    tree = [Controller(c.id, c.level, set(c.scope), c.parent, c.standby)
            for c in sc.controllers if c.id not in standbys]
    if sdn or sc.controllers:
        for msg in hierarchy_problems(tree, sdn):
            bad("controllers", msg)

    # NFV
    names = set()
    for i, v in enumerate(sc.vnfs):
        if v.name in names:
            bad(f"vnfs[{i}].name", f"duplicate VNF name {v.name}")
        names.add(v.name)
        if v.cpu <= 0 or v.mem <= 0:
            bad(f"vnfs[{i}]", "VNF demands must be positive")
        if v.host is not None and (v.host not in nodes or nodes[v.host].kind is not NodeKind.NFV_HOST):
            bad(f"vnfs[{i}].host", f"{v.host} is not an NFV host")
        for a in v.attach:
            if isinstance(a, tuple) and not set(a) <= vlans:
                bad(f"vnfs[{i}].attach", f"transition {a} references an unknown segment")

    # policy
    for role, segs in sc.policy.roles.items():
        for s in segs:
            if s not in vlans:
                bad(f"policy.roles.{role}", f"unknown segment {s}")
    pids = set()
    for i, p in enumerate(sc.policy.principals):
        path = f"policy.principals[{i}]"
        if p.id in pids:
            bad(f"{path}.id", f"duplicate principal {p.id}")
        pids.add(p.id)
        if p.kind not in ("human_user", "service", "device"):
            bad(f"{path}.kind", f"unknown principal kind {p.kind!r}")
        if not p.credential:
            bad(f"{path}.credential", "credential must be non-empty")
        if p.auth not in ("port", "static", "vpn"):
            bad(f"{path}.auth", f"unknown auth method {p.auth!r}")
        if p.host is not None and (p.host not in nodes or nodes[p.host].kind is not NodeKind.HOST):
            bad(f"{path}.host", f"{p.host} is not a host")
        if p.kind == "device" and p.segment is None:
            bad(f"{path}.segment", "devices need an expected segment")
        if p.segment is not None and p.segment not in vlans:
            bad(f"{path}.segment", f"unknown segment {p.segment}")
        for role in p.roles:
            if role not in sc.policy.roles:
                bad(f"{path}.roles", f"unknown role {role!r}")
    for i, ru in enumerate(sc.policy.rules):
        for name, seg in (("from", ru.from_segment), ("to", ru.to_segment)):
            if seg not in vlans:
                bad(f"policy.rules[{i}].{name}", f"unknown segment {seg}")
        if ru.verdict is Verdict.ALLOW and ru.from_segment != ru.to_segment and not ru.require_firewall:
            bad(f"policy.rules[{i}].require_firewall", "cross-segment allows must traverse a firewall")
    try:
        compile_policy(sc.policy.segment_policy(), vlans | {QUARANTINE_VLAN})
    except UnknownSegment as exc:
        bad("policy.rules", str(exc))

    # flows
    fids = set()
    triples: dict[tuple, int] = {}
    for i, f in enumerate(sc.flows):
        path = f"flows[{i}]"
        if f.id in fids:
            bad(f"{path}.id", f"duplicate flow id {f.id}")
        fids.add(f.id)
        for name, h in (("src", f.src), ("dst", f.dst)):
            if h not in nodes or nodes[h].kind is not NodeKind.HOST:
                bad(f"{path}.{name}", f"{h} is not a host")
        if f.src == f.dst:
            bad(f"{path}.dst", "src and dst must differ")
        key = (f.src, f.dst, f.traffic_class)
        if key in triples:
            bad(f"{path}", f"flows {triples[key]} and {f.id} share source, destination and class")
        triples[key] = f.id
        if f.size is not None and not 0 < f.size <= sc.settings.max_frame_bytes:
            bad(f"{path}.size", f"must be in 1..{sc.settings.max_frame_bytes}")
        if f.period_us is not None and f.period_us <= 0:
            bad(f"{path}.period_us", "must be > 0")
        if f.traffic_class is TrafficClass.TIME_CRITICAL and f.latency_bound_us is None:
            bad(f"{path}.latency_bound_us", "TimeCritical flows need a latency bound")
        if f.demand_kbps < 0:
            bad(f"{path}.demand_kbps", "must be >= 0")
        if f.mode not in ("proactive", "reactive"):
            bad(f"{path}.mode", f"unknown mode {f.mode!r}")
        if f.start_on not in ("time", "auth", "event"):
            bad(f"{path}.start_on", f"unknown start trigger {f.start_on!r}")
        if not 0.0 <= f.tamper_probability <= 1.0:
            bad(f"{path}.tamper_probability", "must be in [0, 1]")
        if f.requester is not None and f.requester not in pids:
            bad(f"{path}.requester", f"unknown principal {f.requester!r}")

    # events
    for i, e in enumerate(sc.events):
        path = f"events[{i}]"
        if e.at is None or e.kind is None:
            continue
        if not 0 <= e.at <= (sc.duration_us or 0):
            bad(f"{path}.at", "event time outside the scenario window")
        ref = {"link": links, "node": nodes, "host": nodes, "flow": fids, "controller": ctrl_ids,
               "principal": pids, "stop": fids, "start": fids}
        for k, table in ref.items():
            if k in e.params and e.params[k] not in table:
                bad(f"{path}.{k}", f"unknown {k} {e.params[k]!r}")
        if e.kind == "host-failure" and e.params.get("node") in nodes \
                and nodes[e.params["node"]].kind is not NodeKind.NFV_HOST:
            bad(f"{path}.node", "host-failure targets an NFV host")
        if e.kind in ("register-app", "deregister-app"):
            if e.params.get("app") not in APP_FACTORIES:
                bad(f"{path}.app", f"unknown app {e.params.get('app')!r}")

    # redundancy
    if not out:
        topo = sc.build_topology()
        for i, (a, b) in enumerate(sc.redundant):
            if a not in topo.nodes or b not in topo.nodes:
                bad(f"redundant[{i}]", "unknown node")
            elif topo.disjoint_path_count(a, b) < 2:
                bad(f"redundant[{i}]", f"nodes {a} and {b} are declared redundant but have "
                                       f"{topo.disjoint_path_count(a, b)} link-disjoint path(s)")
    return out


def scenario_to_dict(sc: Scenario) -> dict:
    """Plain-data rendering (used by the random generator to emit YAML)."""

    def enc(v):
        if isinstance(v, (TrafficClass,)):
            return v.label
        if isinstance(v, (NodeKind, Region, VnfKind, Verdict)):
            return v.value
        if isinstance(v, Level):
            return v.name.lower()
        if isinstance(v, tuple):
            return [enc(x) for x in v]
        if isinstance(v, list):
            return [enc(x) for x in v]
        if isinstance(v, dict):
            return {k: enc(x) for k, x in v.items()}
        return v

    d: dict[str, Any] = {"format_version": SCENARIO_FORMAT_VERSION, "name": sc.name,
                         "description": sc.description, "duration_us": sc.duration_us, "seed": sc.seed}
    default = Settings()
    d["settings"] = {f.name: getattr(sc.settings, f.name) for f in fields(Settings)
                     if getattr(sc.settings, f.name) != getattr(default, f.name)}
    d["nodes"] = [{k: enc(v) for k, v in vars(n).items()} for n in sc.nodes]
    d["links"] = [{k: enc(v) for k, v in vars(l).items()} for l in sc.links]
    d["segments"] = [{k: enc(v) for k, v in vars(s).items()} for s in sc.segments]
    d["controllers"] = [{k: enc(v) for k, v in vars(c).items()} for c in sc.controllers]
    d["vnfs"] = [{k: enc(v) for k, v in vars(v).items()} for v in sc.vnfs]
    d["policy"] = {
        "roles": enc(sc.policy.roles),
        "principals": [{("class" if k == "traffic_class" else k): enc(v) for k, v in vars(p).items()}
                       for p in sc.policy.principals],
        "rules": [{"from": r.from_segment, "to": r.to_segment,
                   "class": "any" if r.traffic_class is None else r.traffic_class.label,
                   "verdict": r.verdict.value, "require_firewall": r.require_firewall}
                  for r in sc.policy.rules],
    }
    d["flows"] = [{("class" if k == "traffic_class" else k): enc(v) for k, v in vars(f).items()}
                  for f in sc.flows]
    d["events"] = [dict(at=e.at, kind=e.kind, **enc(e.params)) for e in sc.events]
    d["redundant"] = [list(p) for p in sc.redundant]
    d["requirements"] = list(sc.requirements)
    return d


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)

