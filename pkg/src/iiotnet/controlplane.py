"""Hierarchically scoped SDN controllers.

Controllers form a tree (machine -> line -> facility).  A switch is homed on
the deepest controller whose scope contains it; requests that cannot be
resolved inside a controller's scope are escalated to its parent.  Flow setup
runs authorization, admission and path choice, then pushes rules over a
fixed-delay control channel, downstream switches first.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol

from .dataplane import (Drop, FlowRule, ForwardPort, Match, SetQueue, TrafficClass,
                        UnauthorizedController)
from .nfv import InstanceState, VnfKind
from .policy import Allow, Deny, SessionExpired, Vpn
from .qosrouting import Accepted, Rejected, Reservation, admit
from .topology import NodeKind, Path, Region
from .topology import NoFeasiblePath as NoRoute

if TYPE_CHECKING:
    from .network import Network

FLOW_PRIORITY = 100
DENY_PRIORITY = 2000


class ControlError(Exception):
    pass


class PolicyDenied(ControlError):
    pass


class NoFeasiblePath(ControlError):
    pass


class AdmissionRejected(ControlError):
    pass


class NoParent(ControlError):
    pass


class NoStandby(ControlError):
    pass


class DuplicateApp(ControlError):
    pass


class HierarchyError(ControlError):
    pass


class Level(enum.IntEnum):
    MACHINE = 0
    LINE = 1
    FACILITY = 2

    @classmethod
    def parse(cls, text: str) -> "Level":
        return cls[text.upper()]


@dataclass
class Controller:
    id: int
    level: Level
    scope: set[int]
    parent: int | None = None
    standby: int | None = None
    apps: list = field(default_factory=list)
    alive: bool = True
    active: bool = True  # False for an idle standby or a replaced controller


@dataclass(frozen=True)
class FlowIntent:
    src: int
    dst: int
    traffic_class: TrafficClass
    demand: int = 0
    latency_bound: int | None = None
    jitter_bound: int | None = None
    requester: str = ""
    packet_size: int = 0

    def __post_init__(self):
        if self.traffic_class is TrafficClass.TIME_CRITICAL and self.latency_bound is None:
            raise ValueError("TimeCritical intents must carry a latency bound")
        if self.demand < 0:
            raise ValueError("demand must be >= 0")


@dataclass(frozen=True)
class NetworkView:
    revision: int
    nodes: dict[int, str]
    links: dict[int, tuple]  # id -> (a, b, latency, bandwidth, jitter, up)
    residual: dict[int, int]
    rule_counts: dict[int, int]
    segments: dict[tuple[int, int], int]


class NorthboundApp(Protocol):
    name: str

    def propose_path(self, view: NetworkView, intent: FlowIntent, default: Path,
                     net: "Network") -> Path | None: ...


@dataclass
class DetourApp:
    """Steers flows between the given hosts through a chosen switch."""

    via: int
    hosts: tuple[int, ...] = ()
    name: str = "detour"

    def propose_path(self, view, intent, default, net):
        if self.hosts and not {intent.src, intent.dst} <= set(self.hosts):
            return None
        if self.via in default.nodes:
            return None
        topo = net.topo
        try:
            a = topo.shortest_feasible_path(intent.src, self.via, intent.demand, net.ledger.residual)
            b = topo.shortest_feasible_path(self.via, intent.dst, intent.demand, net.ledger.residual)
        except NoRoute:
            return None
        path = a.concat(b)
        return path if len(set(path.nodes)) == len(path.nodes) else None


@dataclass
class WidestPathApp:
    """Among the k lowest-latency paths, prefers the largest bottleneck residual."""

    k: int = 4
    name: str = "widest-path"

    def propose_path(self, view, intent, default, net):
        best, best_key = None, None
        for i, p in enumerate(net.topo.simple_paths(intent.src, intent.dst, intent.demand,
                                                   net.ledger.residual)):
            if i >= self.k:
                break
            bottleneck = min(view.residual.get(l, 0) for l in p.links)
            key = (-bottleneck, p.key())
            if best_key is None or key < best_key:
                best, best_key = p, key
        return best


APP_FACTORIES = {"detour": DetourApp, "widest-path": WidestPathApp}


@dataclass
class FlowRecord:
    flow_id: int
    intent: FlowIntent
    ingress_class: TrafficClass
    owner: int | None = None
    path: Path | None = None
    reservation: Reservation | None = None
    rules: dict[int, list[FlowRule]] = field(default_factory=dict)
    generation: int = 0
    status: str = "new"  # new|installing|active|held|suspended|denied|torn-down
    deny_rule: tuple[int, int] | None = None  # (switch, rule_id)
    proactive: bool = False


@dataclass
class RerouteReport:
    link: int
    rerouted: list[int] = field(default_factory=list)
    suspended: list[int] = field(default_factory=list)


class ControlPlane:
    def __init__(self, net: "Network", controllers: list[Controller]):
        self.net = net
        self.controllers = {c.id: c for c in controllers}
        self.flows: dict[int, FlowRecord] = {}
        self._rule_ids = itertools.count(1)
        self._app_ids = itertools.count(1)
        standbys = {c.standby for c in controllers if c.standby is not None}
        for cid in standbys:
            self.controllers[cid].active = False
            self.controllers[cid].scope = set()
        self.check_hierarchy()
        self.assign_switches()

    # --- hierarchy -------------------------------------------------------

    def active(self) -> list[Controller]:
        return [c for _, c in sorted(self.controllers.items()) if c.active]

    def check_hierarchy(self) -> None:
        problems = hierarchy_problems(self.active(), self.net.topo.switches(NodeKind.SDN_SWITCH))
        if problems:
            raise HierarchyError("; ".join(problems))

    def facility(self) -> Controller:
        return next(c for c in self.active() if c.parent is None)

    def ancestors(self, cid: int) -> list[int]:
        chain = []
        c = self.controllers[cid]
        while c.parent is not None:
            chain.append(c.parent)
            c = self.controllers[c.parent]
        return chain

    def deepest_for(self, switch: int) -> Controller:
        owners = [c for c in self.active() if switch in c.scope]
        return min(owners, key=lambda c: (c.level, len(c.scope), c.id))

    def assign_switches(self) -> None:
        for sw in self.net.topo.switches(NodeKind.SDN_SWITCH):
            self.net.topo.controller_assignment[sw] = self.deepest_for(sw).id

    def assigned(self, switch: int) -> Controller:
        return self.controllers[self.net.topo.controller_assignment[switch]]

    def authorized(self, switch: int, cid: int) -> bool:
        home = self.net.topo.controller_assignment.get(switch)
        return home is not None and (cid == home or cid in self.ancestors(home))

    def serving(self, cid: int) -> Controller | None:
        """The live controller that acts for ``cid`` (itself or the nearest live ancestor)."""
        c = self.controllers[cid]
        while c is not None and not (c.alive and c.active):
            c = self.controllers[c.parent] if c.parent is not None else None
        return c

    # --- northbound ----------------------------------------------------------

    def register_app(self, cid: int, app) -> int:
        ctrl = self.controllers[cid]
        if any(a.name == app.name for _, a in ctrl.apps):
            raise DuplicateApp(app.name)
        app_id = next(self._app_ids)
        ctrl.apps.append((app_id, app))
        self.net.emit(f"ctrl{cid}", "app-registered", controller=cid, app=app.name, app_id=app_id)
        return app_id

    def deregister_app(self, cid: int, name: str) -> None:
        ctrl = self.controllers[cid]
        ctrl.apps = [(i, a) for i, a in ctrl.apps if a.name != name]
        self.net.emit(f"ctrl{cid}", "app-deregistered", controller=cid, app=name)

    def view(self, ctrl: Controller) -> NetworkView:
        topo = self.net.topo
        nodes = {n: topo.nodes[n].kind.value for n in sorted(topo.nodes)}
        links = {l.id: (l.a, l.b, l.latency, l.bandwidth, l.jitter_bound, l.up)
                 for _, l in sorted(topo.links.items())}
        return NetworkView(
            revision=topo.revision,
            nodes=nodes,
            links=links,
            residual={lid: self.net.ledger.residual(lid) for lid in links},
            rule_counts={sw: len(self.net.tables[sw]) for sw in sorted(ctrl.scope) if sw in self.net.tables},
            segments={p: topo.segment_of_port(*p) for p in sorted(topo._port_segment)},
        )

    def request_flow(self, flow_id: int, intent: FlowIntent) -> FlowRecord:
        """Proactive set-up before traffic; raises on denial or rejection."""
        rec = self._record(flow_id, intent, self.net.ingress_class(intent))
        rec.proactive = True
        ingress = self.net.ingress_switch(intent.src)
        if ingress is None:
            raise NoFeasiblePath(f"flow {flow_id}: source {intent.src} not attached")
        ctrl = self.serving(self.assigned(ingress).id)
        if ctrl is None:
            raise NoParent(f"no live controller for switch {ingress}")
        outcome = self._decide(ctrl, rec, origin=None)
        if outcome == "denied":
            raise PolicyDenied(f"flow {flow_id}")
        if outcome.startswith("rejected"):
            raise AdmissionRejected(f"flow {flow_id}: {outcome}")
        if outcome == "no-path":
            raise NoFeasiblePath(f"flow {flow_id}")
        return rec

    def teardown(self, flow_id: int) -> None:
        rec = self.flows.get(flow_id)
        if rec is None or rec.status == "torn-down":
            return
        self._remove_rules(rec, list(rec.rules), delay_slots=1)
        if rec.deny_rule:
            self._remove_deny(rec)
        if rec.reservation is not None:
            self._release(rec)
        rec.status = "torn-down"
        self.net.emit("ctrl", "flow-torn-down", flow=flow_id)

    def _record(self, flow_id: int, intent: FlowIntent, ingress_class: TrafficClass | None = None) -> FlowRecord:
        rec = self.flows.get(flow_id)
        if rec is None or rec.status == "torn-down":
            rec = FlowRecord(flow_id, intent, ingress_class or intent.traffic_class)
            self.flows[flow_id] = rec
        return rec

    # --- southbound: packet-in -------------------------------------------------

    def on_packet_in(self, ctrl: Controller, switch: int, pkt) -> str:
        if switch not in ctrl.scope:
            raise UnauthorizedController(f"switch {switch} not in scope of {ctrl.id}")
        intent, ingress_class = self.net.intent_for_packet(pkt)
        rec = self.flows.get(pkt.flow_id)
        if rec is not None and rec.status == "held":
            return "held"
        if rec is not None and rec.status in ("installing", "active"):
            if switch in rec.rules:
                if rec.status == "active":
                    self.net.send_reprocess(switch)
                return rec.status
            # a straggler on a switch the flow no longer uses
            self.net.send_drop_buffered(switch, (pkt.src, pkt.dst, pkt.traffic_class), "off-path")
            return "off-path"
        rec = self._record(pkt.flow_id, intent, ingress_class)
        rec.ingress_class = ingress_class
        return self._decide(ctrl, rec, origin=switch)

    # --- decision pipeline -------------------------------------------------------

    def _in_scope(self, ctrl: Controller, node: int | None) -> bool:
        return node is not None and node in ctrl.scope

    def escalate(self, child: Controller, rec: FlowRecord, origin: int | None) -> str:
        if child.parent is None:
            raise NoParent(f"controller {child.id} has no parent")
        parent = self.serving(child.parent)
        if parent is None:
            raise NoParent(f"no live ancestor above {child.id}")
        self.net.emit(f"ctrl{child.id}", "escalated", flow=rec.flow_id, to=parent.id)
        return self._decide(parent, rec, origin, escalated=True)

    def _fail(self, ctrl: Controller, rec: FlowRecord, origin: int | None, reason: str, status: str) -> None:
        net = self.net
        rec.status = status
        ingress = net.ingress_switch(rec.intent.src)
        if origin is not None:
            net.send_drop_buffered(origin, pkt_key(rec), reason)
        if ingress is not None and self.authorized(ingress, ctrl.id):
            rule = FlowRule(next(self._rule_ids),
                            Match(src=rec.intent.src, dst=rec.intent.dst, traffic_class=rec.ingress_class),
                            DENY_PRIORITY, (Drop(reason),), ctrl.id,
                            hard_timeout=net.settings.negative_cache_us, cookie=rec.flow_id)
            net.send_install(ingress, rule, net.engine.now + net.settings.install_us)
            rec.deny_rule = (ingress, rule.rule_id)

    def _decide(self, ctrl: Controller, rec: FlowRecord, origin: int | None, escalated: bool = False) -> str:
        net = self.net
        intent = rec.intent
        src_in = net.ingress_switch(intent.src)
        dst_in = net.ingress_switch(intent.dst)
        if not (self._in_scope(ctrl, src_in) and self._in_scope(ctrl, dst_in)):
            if ctrl.parent is not None and self.serving(ctrl.parent) is not None:
                return self.escalate(ctrl, rec, origin)
            self._fail(ctrl, rec, origin, "no-path", "denied")
            net.emit(f"ctrl{ctrl.id}", "flow-failed", flow=rec.flow_id, reason="no-path")
            return "no-path"

        # authorization
        principal = net.policy.principals.get(intent.requester)
        session = net.policy.session_of(intent.requester) if principal else None
        src_seg = net.topo.host_segment(intent.src)
        dst_seg = net.topo.host_segment(intent.dst)
        decision: Allow | Deny
        if session is None or not session.valid(net.engine.now):
            decision = Deny("unauthenticated")
        elif src_seg is None or dst_seg is None:
            decision = Deny("unattached")
        else:
            try:
                decision = net.policy.authorize_flow(session, intent, src_seg, dst_seg, net.engine.now)
            except SessionExpired:
                decision = Deny("session-expired")
        if isinstance(decision, Deny):
            net.emit(f"ctrl{ctrl.id}", "auth-denied", stage="flow", flow=rec.flow_id,
                     principal=intent.requester, reason=decision.reason, src=intent.src, dst=intent.dst)
            self._fail(ctrl, rec, origin, f"denied-{decision.reason}", "denied")
            return "denied"
        net.emit(f"ctrl{ctrl.id}", "flow-authorized", flow=rec.flow_id, principal=intent.requester,
                 src=intent.src, dst=intent.dst, src_segment=src_seg, dst_segment=dst_seg,
                 firewall=decision.required_firewall)

        # service chain
        chain = []
        if isinstance(session.entry, Vpn):
            chain.append((VnfKind.VPN_GATEWAY, "vpn"))
        if decision.required_firewall:
            chain.append((VnfKind.FIREWALL, (src_seg, dst_seg)))
        waypoints, extra = [], 0
        for kind, att in chain:
            inst = net.orch.find(kind, att)
            if inst is None or inst.host is None:
                reason = "no-firewall" if kind is VnfKind.FIREWALL else "no-vpn-gateway"
                net.emit(f"ctrl{ctrl.id}", "flow-failed", flow=rec.flow_id, reason=reason)
                self._fail(ctrl, rec, origin, reason, "denied")
                return reason
            if inst.state is not InstanceState.RUNNING:
                rec.status = "held"
                rec.owner = ctrl.id
                net.emit(f"ctrl{ctrl.id}", "flow-held", flow=rec.flow_id, instance=inst.id)
                return "held"
            if not waypoints or waypoints[-1] != inst.host:
                waypoints.append(inst.host)
            extra += inst.descriptor.processing_delay
        for w in waypoints:
            if not self._in_scope(ctrl, net.ingress_switch(w)):
                if ctrl.parent is not None and self.serving(ctrl.parent) is not None:
                    return self.escalate(ctrl, rec, origin)

        # admission and path
        allowed = set(ctrl.scope) | set(net.topo.switches(NodeKind.LEGACY_SWITCH))
        result = admit(intent, net.topo, net.ledger, max_frame=net.settings.max_frame_bytes,
                       allowed=allowed, waypoints=tuple(waypoints), extra_delay=extra,
                       replacing=rec.reservation)
        if isinstance(result, Rejected):
            if ctrl.parent is not None and self.serving(ctrl.parent) is not None:
                return self.escalate(ctrl, rec, origin)
            net.emit(f"ctrl{ctrl.id}", "flow-rejected", flow=rec.flow_id, reason=result.reason)
            reason = "no-path" if result.reason == "no-path" else f"admission-{result.reason}"
            self._fail(ctrl, rec, origin, reason, "denied")
            return "no-path" if result.reason == "no-path" else f"rejected-{result.reason}"

        source = "default"
        default_path = result.path
        for cid in [ctrl.id, *self.ancestors(ctrl.id)]:
            for app_id, app in self.controllers[cid].apps:
                proposal = app.propose_path(self.view(ctrl), intent, default_path, net)
                if proposal is None or proposal.nodes == default_path.nodes:
                    continue
                if not set(proposal.nodes[1:-1]) <= allowed | set(waypoints):
                    continue
                if not _visits_in_order(proposal.nodes, waypoints):
                    continue
                alt = admit(intent, net.topo, net.ledger, max_frame=net.settings.max_frame_bytes,
                            extra_delay=extra, replacing=rec.reservation, candidate=proposal)
                if isinstance(alt, Accepted):
                    result, source = alt, f"app:{app.name}"
                    break
            if source != "default":
                break

        self._install_path(ctrl, rec, result, source, default_path)
        return "installing"

    def _release(self, rec: FlowRecord) -> None:
        self.net.ledger.release(rec.reservation)
        self.net.emit("ctrl", "reservation-released", flow=rec.flow_id, handle=rec.reservation.handle,
                      links=list(rec.reservation.links), demand=rec.reservation.demand)
        rec.reservation = None

    def _install_path(self, ctrl: Controller, rec: FlowRecord, result: Accepted, source: str,
                      default_path: Path) -> None:
        net = self.net
        rerouting = rec.path is not None and rec.status in ("active", "installing", "suspended")
        old_rules = rec.rules
        old_deny = rec.deny_rule
        # reservation accounting, moved atomically on reroute
        new_res = result.reservation
        if rec.reservation is not None and new_res is not None:
            net.ledger.move(rec.reservation, new_res)
            net.emit(f"ctrl{ctrl.id}", "reservation-moved", flow=rec.flow_id, old=rec.reservation.handle,
                     handle=new_res.handle, links=list(new_res.links), demand=new_res.demand)
        else:
            if rec.reservation is not None:
                self._release(rec)
            if new_res is not None:
                net.ledger.reserve(new_res)
                net.emit(f"ctrl{ctrl.id}", "reservation-made", flow=rec.flow_id, handle=new_res.handle,
                         links=list(new_res.links), demand=new_res.demand)
        rec.reservation = new_res
        rec.generation += 1
        rec.owner = ctrl.id
        rec.path = result.path
        net.emit(f"ctrl{ctrl.id}", "flow-admitted", flow=rec.flow_id, cls=rec.intent.traffic_class.label,
                 demand=rec.intent.demand, latency_bound=rec.intent.latency_bound,
                 jitter_bound=rec.intent.jitter_bound, worst_case=result.worst_case_us)
        net.emit(f"ctrl{ctrl.id}", "flow-path", flow=rec.flow_id, nodes=list(result.path.nodes),
                 links=list(result.path.links), latency=result.path.latency, source=source,
                 default_nodes=list(default_path.nodes), generation=rec.generation)

        wanted = self._rules_for_path(ctrl, rec, result.path)
        keep: dict[int, list[FlowRule]] = {}
        todo: dict[int, list[tuple[Match, tuple]]] = {}
        for sw, specs in wanted.items():
            have = {(r.match, r.actions): r for r in old_rules.get(sw, [])}
            for m, acts in specs:
                if (m, acts) in have:
                    keep.setdefault(sw, []).append(have[(m, acts)])
                else:
                    todo.setdefault(sw, []).append((m, acts))
        rec.status = "installing"
        order = [sw for sw in reversed(_unique(n for n in result.path.nodes if n in wanted)) if sw in todo]
        new_rules: dict[int, list[FlowRule]] = {sw: list(rs) for sw, rs in keep.items()}
        now = net.engine.now
        slot = net.settings.install_us
        prio = min(FLOW_PRIORITY + rec.generation, DENY_PRIORITY - 1)
        for k, sw in enumerate(order, 1):
            for m, acts in todo[sw]:
                rule = FlowRule(next(self._rule_ids), m, prio, acts, ctrl.id, cookie=rec.flow_id)
                new_rules.setdefault(sw, []).append(rule)
                net.send_install(sw, rule, now + k * slot)
        done_at = now + len(order) * slot
        rec.rules = new_rules
        stale = {sw: [r for r in rules if r not in new_rules.get(sw, [])] for sw, rules in old_rules.items()}
        if rerouting:
            net.emit(f"ctrl{ctrl.id}", "reroute-started", flow=rec.flow_id, installs=len(order))
        gen = rec.generation

        def complete():
            if rec.generation != gen or rec.status != "installing":
                return
            rec.status = "active"
            for sw, rules in stale.items():
                for r in rules:
                    net.send_remove(sw, r.rule_id, net.engine.now + slot)
            if old_deny:
                net.send_remove(old_deny[0], old_deny[1], net.engine.now + slot)
                if rec.deny_rule == old_deny:
                    rec.deny_rule = None
            net.emit(f"ctrl{ctrl.id}", "reroute-completed" if rerouting else "flow-established",
                     flow=rec.flow_id, installs=len(order), path_switches=len(wanted))

        net.at(done_at, complete)

    def _rules_for_path(self, ctrl: Controller, rec: FlowRecord, path: Path) -> dict[int, list[tuple]]:
        topo = self.net.topo
        intent = rec.intent
        counts: dict[int, int] = {}
        for n in path.nodes[1:-1]:
            counts[n] = counts.get(n, 0) + 1
        out: dict[int, list[tuple]] = {}
        cls_here = rec.ingress_class
        for i in range(1, len(path.nodes) - 1):
            sw = path.nodes[i]
            node = topo.nodes[sw]
            if node.kind is not NodeKind.SDN_SWITCH:
                continue
            in_port = topo.links[path.links[i - 1]].port_of(sw)
            out_port = topo.links[path.links[i]].port_of(sw)
            pin = in_port if (counts[sw] > 1 or in_port in node.gateway_ports) else None
            acts: tuple = (ForwardPort(out_port),)
            if cls_here != intent.traffic_class:
                acts = (SetQueue(intent.traffic_class), ForwardPort(out_port))
            out.setdefault(sw, []).append(
                (Match(in_port=pin, src=intent.src, dst=intent.dst, traffic_class=cls_here), acts))
            cls_here = intent.traffic_class
        return out

    def _remove_rules(self, rec: FlowRecord, switches: list[int], delay_slots: int = 1) -> None:
        net = self.net
        at = net.engine.now + delay_slots * net.settings.install_us
        for sw in switches:
            for r in rec.rules.get(sw, []):
                net.send_remove(sw, r.rule_id, at)
        for sw in switches:
            rec.rules.pop(sw, None)

    def _remove_deny(self, rec: FlowRecord) -> None:
        sw, rid = rec.deny_rule
        self.net.send_remove(sw, rid, self.net.engine.now + self.net.settings.install_us)
        rec.deny_rule = None

    def _suspend(self, ctrl: Controller, rec: FlowRecord) -> None:
        net = self.net
        self._remove_rules(rec, list(rec.rules))
        if rec.reservation is not None:
            self._release(rec)
        rec.status = "suspended"
        ingress = net.ingress_switch(rec.intent.src)
        if ingress is not None and self.authorized(ingress, ctrl.id):
            rule = FlowRule(next(self._rule_ids),
                            Match(src=rec.intent.src, dst=rec.intent.dst, traffic_class=rec.ingress_class),
                            DENY_PRIORITY, (Drop("suspended"),), ctrl.id, cookie=rec.flow_id)
            net.send_install(ingress, rule, net.engine.now + net.settings.install_us)
            rec.deny_rule = (ingress, rule.rule_id)
        net.emit(f"ctrl{ctrl.id}", "flow-suspended", flow=rec.flow_id)

    # --- failures ---------------------------------------------------------------

    def on_link_failure(self, link_id: int) -> RerouteReport:
        """Recompute every admitted flow crossing the failed link."""
        report = RerouteReport(link_id)
        for fid in sorted(self.flows):
            rec = self.flows[fid]
            if rec.path is None or link_id not in rec.path.links:
                continue
            if rec.status not in ("active", "installing"):
                continue
            ctrl = self.serving(rec.owner)
            if ctrl is None:
                continue
            outcome = self._reroute(ctrl, rec)
            (report.rerouted if outcome == "installing" else report.suspended).append(fid)
        self.net.emit("ctrl", "reroute-report", link=link_id, rerouted=report.rerouted,
                      suspended=report.suspended)
        return report

    def _reroute(self, ctrl: Controller, rec: FlowRecord) -> str:
        while True:
            outcome = self._decide_reroute(ctrl, rec)
            if outcome == "installing":
                return outcome
            parent = self.serving(ctrl.parent) if ctrl.parent is not None else None
            if parent is None:
                self._suspend(ctrl, rec)
                return "suspended"
            self.net.emit(f"ctrl{ctrl.id}", "escalated", flow=rec.flow_id, to=parent.id)
            ctrl = parent

    def _decide_reroute(self, ctrl: Controller, rec: FlowRecord) -> str:
        net = self.net
        src_in = net.ingress_switch(rec.intent.src)
        dst_in = net.ingress_switch(rec.intent.dst)
        if not (self._in_scope(ctrl, src_in) and self._in_scope(ctrl, dst_in)):
            return "out-of-scope"
        waypoints, extra = [], 0
        for n in rec.path.nodes[1:-1]:
            if net.topo.nodes[n].kind is NodeKind.NFV_HOST:
                waypoints.append(n)
                extra += sum(i.descriptor.processing_delay for i in net.orch.on_host(n) if i.running)
        allowed = set(ctrl.scope) | set(net.topo.switches(NodeKind.LEGACY_SWITCH))
        handle = rec.reservation.handle if rec.reservation else None
        result = admit(rec.intent, net.topo, net.ledger, max_frame=net.settings.max_frame_bytes,
                       allowed=allowed, waypoints=tuple(waypoints), extra_delay=extra,
                       replacing=rec.reservation,
                       handle=None if handle is None else net.ledger.new_handle())
        if isinstance(result, Rejected):
            return result.reason
        self._install_path(ctrl, rec, result, "reroute", result.path)
        return "installing"

    def on_link_repair(self, link_id: int) -> list[int]:
        resumed = []
        for fid in sorted(self.flows):
            rec = self.flows[fid]
            if rec.status != "suspended":
                continue
            if self.resume(rec) == "installing":
                resumed.append(fid)
        return resumed

    def resume(self, rec: FlowRecord) -> str:
        ingress = self.net.ingress_switch(rec.intent.src)
        if ingress is None:
            return "unattached"
        ctrl = self.serving(self.assigned(ingress).id)
        if ctrl is None:
            return "no-controller"
        rec.path = None
        return self._decide(ctrl, rec, origin=None)

    def retry_held(self) -> None:
        for fid in sorted(self.flows):
            rec = self.flows[fid]
            if rec.status == "held":
                self.resume(rec)

    def on_waypoint_lost(self, node: int) -> None:
        """A service-chain host went away: drop its flows back to held."""
        for fid in sorted(self.flows):
            rec = self.flows[fid]
            if rec.path is None or node not in rec.path.nodes or rec.status in ("torn-down", "denied"):
                continue
            self._remove_rules(rec, list(rec.rules))
            if rec.reservation is not None:
                self._release(rec)
            rec.path = None
            rec.status = "held"
            self.net.emit("ctrl", "flow-held", flow=fid, instance=None)

    def failover(self, cid: int) -> int | None:
        """Standby takes over a dead controller; without one, its parent serves."""
        net = self.net
        dead = self.controllers[cid]
        if dead.alive or not dead.active:
            return None
        switches = [sw for sw, c in sorted(net.topo.controller_assignment.items()) if c == cid]
        if dead.standby is not None and self.controllers[dead.standby].alive:
            sb = self.controllers[dead.standby]
            sb.level, sb.scope, sb.parent, sb.active = dead.level, set(dead.scope), dead.parent, True
            dead.active = False
            for c in self.controllers.values():
                if c.parent == cid and c is not sb:
                    c.parent = sb.id
            for rec in self.flows.values():
                if rec.owner == cid:
                    rec.owner = sb.id
            sb.apps = list(dead.apps)
            net.emit(f"ctrl{sb.id}", "controller-failover", failed=cid, standby=sb.id)
            target = sb.id
        else:
            if dead.parent is None or self.serving(dead.parent) is None:
                net.emit(f"ctrl{cid}", "control-plane-lost", controller=cid)
                return None
            target = self.serving(dead.parent).id
            for rec in self.flows.values():
                if rec.owner == cid:
                    rec.owner = target
            net.emit(f"ctrl{cid}", "degraded-mode", failed=cid, serving=target)
        net.at(net.engine.now + net.settings.install_us, lambda: net.rehome(switches, target))
        return target


def pkt_key(rec: FlowRecord) -> tuple[int, int, TrafficClass]:
    return (rec.intent.src, rec.intent.dst, rec.ingress_class)


def _visits_in_order(nodes, waypoints) -> bool:
    it = iter(nodes)
    return all(w in it for w in waypoints)


def _unique(seq):
    seen, out = set(), []
    for x in seq:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def hierarchy_problems(controllers: list[Controller], sdn_switches: list[int]) -> list[str]:
    """Static checks on the controller tree; an empty list means it is valid."""
    problems = []
    by_id = {c.id: c for c in controllers}
    roots = [c for c in controllers if c.parent is None]
    facilities = [c for c in controllers if c.level is Level.FACILITY]
    if len(facilities) != 1:
        problems.append(f"exactly one facility controller required, found {len(facilities)}")
    if len(roots) != 1 or (facilities and roots and roots[0] is not facilities[0]):
        problems.append("hierarchy must have a single root, the facility controller")
    for c in controllers:
        seen = {c.id}
        p = c.parent
        while p is not None:
            if p not in by_id:
                problems.append(f"controller {c.id}: unknown parent {p}")
                break
            if p in seen:
                problems.append(f"controller {c.id}: parent cycle")
                break
            seen.add(p)
            p = by_id[p].parent
        if c.parent in by_id:
            parent = by_id[c.parent]
            if parent.level <= c.level:
                problems.append(f"controller {c.id}: parent {parent.id} is not a higher level")
            if not c.scope <= parent.scope:
                problems.append(f"controller {c.id}: scope not contained in parent {parent.id}")
    children: dict[int | None, list[Controller]] = {}
    for c in controllers:
        children.setdefault(c.parent, []).append(c)
    for sibs in children.values():
        for a, b in itertools.combinations(sibs, 2):
            if a.scope & b.scope:
                problems.append(f"controllers {a.id} and {b.id}: sibling scopes overlap")
    covered = set().union(*(c.scope for c in controllers)) if controllers else set()
    for sw in sdn_switches:
        if sw not in covered:
            problems.append(f"SDN switch {sw} has no controller")
    return problems
