"""Composed simulator: switches, hosts, NFV nodes and controllers on one event engine.

Every observable step is written to the engine trace; :mod:`iiotnet.harness.verify`
evaluates the requirement checks from that trace alone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .controlplane import (APP_FACTORIES, ControlError, ControlPlane, Controller, DuplicateApp,
                           FlowIntent)
from .dataplane import (Drop, Egress, FlowTable, ForwardPort, LegacyTable, Packet, PortQueues,
                        Receiver, SetQueue, ToController, TrafficClass, UnauthorizedController,
                        UnknownSwitch, Verdict, arrival_time, describe_actions, tamper)
from .harness.scenario import Scenario
from .nfv import DropPacket, NfvHost, NoCapacity, Orchestrator, VnfDescriptor, VnfKind
from .policy import (BadCredential, DeviceProfile, InternalPort, PolicyEngine, Principal,
                     PrincipalKind, Vpn)
from .qosrouting import ReservationLedger
from .simkernel import Engine, EventKind, ScenarioTrace
from .topology import QUARANTINE_VLAN, Link, LinkState, Node, NodeKind, NoFeasiblePath

SETUP_LEAD_US = 2_000


@dataclass
class FlowRun:
    """Traffic generator state for one declared flow."""

    active: bool = False
    next_seq: int = 0
    tick: object = None
    force_tamper: int = 0
    force_seq: int | None = None  # pin forced tampering to one packet and its retries
    pin_next: bool = False
    started_at: int | None = None


class Network:
    def __init__(self, scenario: Scenario, seed: int | None = None):
        self.scenario = sc = scenario
        self.settings = sc.settings
        self.engine = Engine(sc.seed if seed is None else seed)
        self.engine.trace.meta.update(scenario=sc.name, duration=sc.duration_us)
        self.topo = sc.build_topology()
        self.ledger = ReservationLedger(self.topo)

        principals = {}
        for p in sc.policy.principals:
            profile = None
            if p.segment is not None:
                profile = DeviceProfile(p.id, p.segment, p.traffic_class)
            principals[p.id] = Principal(p.id, PrincipalKind(p.kind), set(p.roles), p.credential,
                                         profile, p.host)
        self.principal_specs = {p.id: p for p in sc.policy.principals}
        self.policy = PolicyEngine(sc.policy.segment_policy(), {s.vlan for s in sc.segments},
                                   {k: set(v) for k, v in sc.policy.roles.items()}, principals,
                                   sc.settings.session_expiry_us)
        self.orch = Orchestrator([NfvHost(n.id, n.cpu, n.mem) for n in sc.nodes
                                  if n.kind is NodeKind.NFV_HOST and n.present])
        self.tables = {sw: FlowTable() for sw in self.topo.switches(NodeKind.SDN_SWITCH)}
        self.buffers: dict[int, list[tuple[Packet, int]]] = {sw: [] for sw in self.tables}
        self.pending: dict[int, set] = {sw: set() for sw in self.tables}
        self.egress: dict[tuple[int, int], Egress] = {}
        self.receivers: dict[int, Receiver] = {}
        self.link_epoch: dict[int, int] = {}
        self.failed_nodes: set[int] = set()
        self.flows = {f.id: f for f in sc.flows}
        self.runs = {f.id: FlowRun() for f in sc.flows}
        self.live: dict[tuple[int, int, int], Packet] = {}
        self.legacy = self._legacy_tables()
        self.controlplane = ControlPlane(self, [
            Controller(c.id, c.level, set(c.scope), c.parent, c.standby) for c in sc.controllers])
        self._started = False

    # --- plumbing ---------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.engine.now

    def emit(self, emitter: str, fact: str, **fields) -> int:
        return self.engine.emit(emitter, fact, **fields)

    def at(self, t: int, fn, kind: EventKind = EventKind.CONTROL):
        return self.engine.at(max(t, self.engine.now), kind, fn)

    def _legacy_tables(self) -> dict[int, LegacyTable]:
        out = {}
        hosts = self.topo.hosts()
        for sw in self.topo.switches(NodeKind.LEGACY_SWITCH):
            entries = {}
            for h in hosts:
                try:
                    path = self.topo.shortest_feasible_path(sw, h)
                except NoFeasiblePath:
                    continue
                entries[h] = self.topo.links[path.links[0]].port_of(sw)
            out[sw] = LegacyTable(entries)
        return out

    def ingress_switch(self, host: int) -> int | None:
        """First SDN switch a host's traffic meets (the gateway switch for legacy hosts)."""
        att = self.topo.attachment(host)
        if att is None:
            return None
        sw = att[0]
        if self.topo.nodes[sw].kind is NodeKind.SDN_SWITCH:
            return sw
        seen, frontier = {sw}, [sw]
        while frontier:
            nxt = []
            for u in sorted(frontier):
                for link, v in self.topo.neighbours(u):
                    node = self.topo.nodes[v]
                    if node.kind is NodeKind.SDN_SWITCH and link.port_of(v) in node.gateway_ports:
                        return v
                    if node.kind is NodeKind.LEGACY_SWITCH and v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        return None

    def _is_legacy_host(self, host: int) -> bool:
        att = self.topo.attachment(host)
        return att is not None and self.topo.nodes[att[0]].kind is NodeKind.LEGACY_SWITCH

    def requester_of(self, fid: int) -> str:
        spec = self.flows[fid]
        if spec.requester:
            return spec.requester
        p = self.policy.principal_for_host(spec.src)
        return p.id if p else ""

    def intent_of(self, fid: int) -> FlowIntent:
        spec = self.flows[fid]
        tc = spec.traffic_class is TrafficClass.TIME_CRITICAL
        return FlowIntent(spec.src, spec.dst, spec.traffic_class, spec.demand_kbps,
                          spec.latency_bound_us, spec.jitter_bound_us, self.requester_of(fid),
                          packet_size=spec.size if tc else 0)

    def ingress_class(self, intent: FlowIntent) -> TrafficClass:
        """Class a flow's packets carry at its ingress switch (gateways reclassify to BE)."""
        return TrafficClass.BEST_EFFORT if self._is_legacy_host(intent.src) else intent.traffic_class

    def intent_for_packet(self, pkt: Packet) -> tuple[FlowIntent, TrafficClass]:
        intent = self.intent_of(pkt.flow_id)
        return intent, self.ingress_class(intent)

    # --- southbound -------------------------------------------------------------

    def install_rule(self, sw: int, rule, controller: int) -> int:
        if sw not in self.tables:
            raise UnknownSwitch(f"no SDN switch {sw}")
        if not self.controlplane.authorized(sw, controller):
            self.emit(f"sw{sw}", "rule-rejected", switch=sw, rule=rule.rule_id, installed_by=controller)
            raise UnauthorizedController(f"controller {controller} may not program switch {sw}")
        self.tables[sw].install(rule, self.now)
        self.emit(f"sw{sw}", "rule-installed", switch=sw, rule=rule.rule_id, flow=rule.cookie,
                  installed_by=controller, priority=rule.priority, match=rule.match.describe(),
                  actions=describe_actions(rule.actions), hard_timeout=rule.hard_timeout)
        self._rescan(sw)
        return rule.rule_id

    def remove_rule(self, sw: int, rule_id: int) -> None:
        if sw not in self.tables:
            raise UnknownSwitch(f"no SDN switch {sw}")
        rule = self.tables[sw].remove(rule_id)
        if rule is not None:
            self.emit(f"sw{sw}", "rule-removed", switch=sw, rule=rule_id, flow=rule.cookie)

    def send_install(self, sw: int, rule, at: int) -> None:
        def go():
            try:
                self.install_rule(sw, rule, rule.installed_by)
            except UnauthorizedController:
                pass
        self.at(at, go)

    def send_remove(self, sw: int, rule_id: int, at: int) -> None:
        self.at(at, lambda: self.remove_rule(sw, rule_id))

    def send_drop_buffered(self, sw: int, key: tuple, reason: str) -> None:
        def go():
            keep = []
            for pkt, port in self.buffers[sw]:
                if (pkt.src, pkt.dst, pkt.traffic_class) == key:
                    self._drop(pkt, reason, f"sw{sw}")
                else:
                    keep.append((pkt, port))
            self.buffers[sw] = keep
            self.pending[sw].discard(key)
        self.at(self.now + self.settings.channel_us, go)

    def send_reprocess(self, sw: int) -> None:
        def go():
            self._rescan(sw)
            for pkt, _ in self.buffers[sw]:
                self._drop(pkt, "no-rule", f"sw{sw}")
            self.buffers[sw] = []
            self.pending[sw].clear()
        self.at(self.now + self.settings.channel_us, go)

    def rehome(self, switches: list[int], controller: int) -> None:
        for sw in switches:
            self.topo.controller_assignment[sw] = controller
            self.emit(f"sw{sw}", "switch-rehomed", switch=sw, controller=controller)
        for sw in switches:
            for key in sorted(self.pending[sw]):
                first = next((p for p, port in self.buffers[sw]
                              if (p.src, p.dst, p.traffic_class) == key), None)
                if first is not None:
                    self._packet_in(sw, first)

    def _rescan(self, sw: int) -> None:
        buf, self.buffers[sw] = self.buffers[sw], []
        table = self.tables[sw]
        for pkt, port in buf:
            rule = table.lookup(pkt, port, self.now)
            if rule is None or any(isinstance(a, ToController) for a in rule.actions):
                self.buffers[sw].append((pkt, port))
            else:
                self._apply(sw, port, pkt, rule)
        keys = {(p.src, p.dst, p.traffic_class) for p, _ in self.buffers[sw]}
        self.pending[sw] &= keys

    # --- transmission -------------------------------------------------------------

    def _drop(self, pkt: Packet, reason: str, where: str) -> None:
        fields = dict(flow=pkt.flow_id, seq=pkt.seq, attempt=pkt.attempt, reason=reason)
        if pkt.copy:
            fields["copy"] = True
        self.emit(where, "packet-dropped", **fields)
        if not pkt.copy:
            self.live.pop(pkt.ident, None)

    def _egress(self, node: int, port: int) -> Egress:
        eg = self.egress.get((node, port))
        if eg is None:
            strict = self.topo.nodes[node].kind is not NodeKind.LEGACY_SWITCH
            eg = Egress(node, port, PortQueues(self.settings.queue_capacity, strict))
            self.egress[(node, port)] = eg
        return eg

    def _enqueue(self, node: int, port: int, pkt: Packet) -> None:
        where = f"n{node}"
        if node in self.failed_nodes:
            self._drop(pkt, "node-failed", where)
            return
        link = self.topo.link_at(node, port)
        if link is None or not link.up:
            self._drop(pkt, "link-down", where)
            return
        eg = self._egress(node, port)
        if not eg.queues.offer(pkt):
            self._drop(pkt, "queue-full", where)
            return
        if eg.in_flight is None:
            self._start_tx(eg)

    def transmit(self, eg: Egress, link: Link, pkt: Packet) -> int:
        """Put one frame on the wire; returns its arrival time at the far end."""
        jitter = self.engine.rand_uniform(0, link.jitter_bound)
        arr = arrival_time(self.now, link, pkt, jitter, eg.last_arrival)
        eg.last_arrival = arr
        ser = link.serialization_us(pkt.size)
        eg.in_flight = pkt
        eg.busy_until = self.now + ser
        pkt.links.append(link.id)
        epoch = self.link_epoch.get(link.id, 0)
        peer = link.other(eg.node)
        self.engine.at(self.now + ser, EventKind.PACKET_DEPARTURE, lambda: self._tx_done(eg))
        self.engine.at(arr, EventKind.PACKET_ARRIVAL, lambda: self._arrive(link.id, epoch, peer, pkt))
        return arr

    def _start_tx(self, eg: Egress) -> None:
        while True:
            pkt = eg.queues.pop()
            if pkt is None:
                return
            link = self.topo.link_at(eg.node, eg.port)
            if link is None or not link.up:
                self._drop(pkt, "link-down", f"n{eg.node}")
                continue
            self.transmit(eg, link, pkt)
            return

    def _tx_done(self, eg: Egress) -> None:
        eg.in_flight = None
        self._start_tx(eg)

    def _arrive(self, link_id: int, epoch: int, end: tuple[int, int], pkt: Packet) -> None:
        node, port = end
        if self.link_epoch.get(link_id, 0) != epoch:
            self._drop(pkt, "link-down", f"n{node}")
            return
        if node in self.failed_nodes:
            self._drop(pkt, "node-failed", f"n{node}")
            return
        kind = self.topo.nodes[node].kind
        if kind is NodeKind.SDN_SWITCH:
            self.handle_packet(node, port, pkt)
        elif kind is NodeKind.LEGACY_SWITCH:
            self.legacy_forward(node, port, pkt)
        elif kind is NodeKind.NFV_HOST:
            self._nfv_receive(node, port, pkt)
        else:
            self._host_receive(node, pkt)

    def _access_peer(self, sw: int, port: int) -> bool:
        link = self.topo.link_at(sw, port)
        return link is not None and self.topo.nodes[link.other(sw)[0]].kind is NodeKind.HOST

    def _out(self, sw: int, port: int, pkt: Packet) -> None:
        if self._access_peer(sw, port) and self.topo.segment_of_port(sw, port) != pkt.vlan:
            self._drop(pkt, "vlan-mismatch", f"sw{sw}")
            return
        self._enqueue(sw, port, pkt)

    # --- switches ---------------------------------------------------------------------

    def _stamp_access(self, sw: int, in_port: int, pkt: Packet) -> bool:
        if not self._access_peer(sw, in_port):
            return True
        seg = self.topo.segment_of_port(sw, in_port)
        if seg == QUARANTINE_VLAN:
            self._drop(pkt, "quarantine", f"sw{sw}")
            return False
        if seg is None:
            self._drop(pkt, "no-segment", f"sw{sw}")
            return False
        pkt.vlan = seg
        pkt.origin_vlan = seg
        return True

    def handle_packet(self, sw: int, in_port: int, pkt: Packet) -> None:
        if not self._stamp_access(sw, in_port, pkt):
            return
        if in_port in self.topo.nodes[sw].gateway_ports:
            pkt.traffic_class = TrafficClass.BEST_EFFORT
        table = self.tables[sw]
        for r in table.expire(self.now):
            self.emit(f"sw{sw}", "rule-expired", switch=sw, rule=r.rule_id, flow=r.cookie)
        rule = table.lookup(pkt, in_port, self.now)
        if rule is None or any(isinstance(a, ToController) for a in rule.actions):
            self._miss(sw, in_port, pkt)
            return
        self._apply(sw, in_port, pkt, rule)

    def _apply(self, sw: int, in_port: int, pkt: Packet, rule) -> None:
        for action in rule.actions:
            if isinstance(action, SetQueue):
                pkt.traffic_class = action.traffic_class
            elif isinstance(action, Drop):
                self._drop(pkt, action.reason, f"sw{sw}")
                return
            elif isinstance(action, ForwardPort):
                self._out(sw, action.port, pkt)
                return
        self._drop(pkt, "no-action", f"sw{sw}")

    def _miss(self, sw: int, in_port: int, pkt: Packet) -> None:
        buf = self.buffers[sw]
        if len(buf) >= self.settings.miss_buffer:
            self._drop(pkt, "miss-buffer-full", f"sw{sw}")
            return
        buf.append((pkt, in_port))
        key = (pkt.src, pkt.dst, pkt.traffic_class)
        if key in self.pending[sw]:
            return
        self.pending[sw].add(key)
        self._packet_in(sw, pkt)

    def _packet_in(self, sw: int, pkt: Packet) -> None:
        cid = self.topo.controller_assignment[sw]
        self.emit(f"sw{sw}", "packet-in", switch=sw, controller=cid, flow=pkt.flow_id,
                  src=pkt.src, dst=pkt.dst, cls=pkt.traffic_class.label)
        snapshot = pkt.clone()

        def deliver():
            ctrl = self.controlplane.controllers[cid]
            if not (ctrl.alive and ctrl.active):
                self.emit(f"ctrl{cid}", "packet-in-lost", switch=sw, flow=snapshot.flow_id)
                return
            try:
                self.controlplane.on_packet_in(ctrl, sw, snapshot)
            except ControlError as exc:
                self.emit(f"ctrl{cid}", "control-error", flow=snapshot.flow_id, error=type(exc).__name__)
                self.send_drop_buffered(sw, (snapshot.src, snapshot.dst, snapshot.traffic_class), "no-path")

        self.at(self.now + self.settings.channel_us, deliver)

    def legacy_forward(self, sw: int, in_port: int, pkt: Packet) -> None:
        if len(pkt.links) > 32:
            self._drop(pkt, "ttl", f"sw{sw}")
            return
        if not self._stamp_access(sw, in_port, pkt):
            return
        node = self.topo.nodes[sw]
        flood = []
        for p in node.ports:
            link = self.topo.link_at(sw, p)
            if link is None or not link.up:
                continue
            if self._access_peer(sw, p) and self.topo.segment_of_port(sw, p) != pkt.vlan:
                continue
            flood.append(p)
        ports = self.legacy[sw].forward(pkt, in_port, flood)
        if not ports:
            self._drop(pkt, "no-route", f"sw{sw}")
            return
        if len(ports) > 1:
            self.emit(f"sw{sw}", "flooded", flow=pkt.flow_id, seq=pkt.seq, ports=ports)
        for i, p in enumerate(ports):
            q = pkt
            if i:
                q = pkt.clone()
                q.copy = True
            self._out(sw, p, q)

    # --- NFV and hosts -------------------------------------------------------------------

    def _nfv_receive(self, node: int, in_port: int, pkt: Packet) -> None:
        delay = 0
        insts = sorted(self.orch.on_host(node), key=lambda i: i.id)
        for inst in insts:
            if inst.running and inst.kind is VnfKind.VPN_GATEWAY and pkt.encapsulated:
                self.orch.traverse(inst, pkt)
                delay += inst.descriptor.processing_delay
                pkt.vnfs.append(inst.kind.label)
                self.emit(f"nfv{node}", "vnf-traversed", instance=inst.id, kind=inst.kind.label,
                          verdict="allow", flow=pkt.flow_id, seq=pkt.seq, attempt=pkt.attempt)
        dst_seg = self.topo.host_segment(pkt.dst)
        if dst_seg is not None and pkt.vlan != dst_seg:
            fw = next((i for i in insts if i.running and i.kind is VnfKind.FIREWALL
                       and i.attached_to((pkt.vlan, dst_seg))), None)
            if fw is None:
                self._drop(pkt, "no-firewall", f"nfv{node}")
                return
            before = pkt.vlan
            result = self.orch.traverse(fw, pkt, self.policy.compiled, dst_seg)
            verdict = "deny" if isinstance(result, DropPacket) else "allow"
            self.emit(f"nfv{node}", "vnf-traversed", instance=fw.id, kind=fw.kind.label,
                      verdict=verdict, flow=pkt.flow_id, seq=pkt.seq, attempt=pkt.attempt,
                      from_segment=before, to_segment=dst_seg)
            if isinstance(result, DropPacket):
                self._drop(pkt, result.reason, f"nfv{node}")
                return
            pkt.vnfs.append(fw.kind.label)
            delay += fw.descriptor.processing_delay
        for inst in insts:
            if inst.running and inst.kind is VnfKind.TRAFFIC_MONITOR:
                self.orch.traverse(inst, pkt)
                delay += inst.descriptor.processing_delay
                self.emit(f"nfv{node}", "vnf-stats", instance=inst.id, flow=pkt.flow_id,
                          packets=inst.stats[pkt.flow_id])
        self.at(self.now + delay, lambda: self._enqueue(node, in_port, pkt), EventKind.PACKET_DEPARTURE)

    def _host_receive(self, host: int, pkt: Packet) -> None:
        where = f"host{host}"
        if pkt.dst != host:
            self._drop(pkt, "not-addressed", where)
            return
        if pkt.encapsulated:
            self._drop(pkt, "encapsulated", where)
            return
        rx = self.receivers.setdefault(host, Receiver(self.settings.retransmit_limit))
        verdict = rx.verify_and_ack(pkt)
        base = dict(flow=pkt.flow_id, seq=pkt.seq, attempt=pkt.attempt)
        if pkt.copy:
            base["copy"] = True
        if verdict is Verdict.ACCEPT:
            att = self.topo.attachment(host)
            self.emit(where, "packet-delivered", **base, src=pkt.src, dst=pkt.dst,
                      cls=pkt.traffic_class.label, size=pkt.size, created=pkt.created_at,
                      latency=self.now - pkt.created_at, src_segment=pkt.origin_vlan,
                      dst_segment=self.topo.segment_of_port(*att) if att else None, vlan=pkt.vlan,
                      links=list(pkt.links), vnfs=list(pkt.vnfs))
        elif verdict is Verdict.NACK:
            self.emit(where, "integrity-nack", **base)
            fid, seq, attempt = pkt.flow_id, pkt.seq, pkt.attempt + 1
            back = self.now - pkt.created_at
            self.at(self.now + back, lambda: self._inject(fid, seq, attempt), EventKind.TIMER)
        elif verdict is Verdict.EXHAUSTED:
            self.emit(where, "integrity-failure", **base, attempts=pkt.attempt + 1)
        else:
            self.emit(where, "duplicate-discarded", **base)
        if not pkt.copy:
            self.live.pop(pkt.ident, None)

    def _inject(self, fid: int, seq: int, attempt: int) -> None:
        spec = self.flows[fid]
        run = self.runs[fid]
        seg = self.topo.host_segment(spec.src)
        pkt = Packet(fid, seq, spec.src, spec.dst, seg or 0, spec.traffic_class, spec.size,
                     self.now, attempt=attempt, origin_vlan=seg or 0,
                     encapsulated=self._external(spec.src))
        self.emit(f"host{spec.src}", "packet-injected" if attempt == 0 else "retransmit",
                  flow=fid, seq=seq, attempt=attempt, src=spec.src, dst=spec.dst,
                  cls=spec.traffic_class.label, size=spec.size)
        self.live[pkt.ident] = pkt
        hit = False
        if run.pin_next and attempt == 0 and run.force_seq is None:
            run.force_seq = seq
        pinned = run.force_seq is not None
        if run.force_tamper > 0 and (not pinned or seq == run.force_seq):
            run.force_tamper -= 1
            hit = True
            if not run.force_tamper:
                run.force_seq, run.pin_next = None, False
        elif spec.tamper_probability > 0:
            hit = self.engine.rand_uniform(0, 9999) < round(spec.tamper_probability * 10000)
        if hit:
            tamper(pkt)
            self.emit("adversary", "tamper-injected", flow=fid, seq=seq, attempt=attempt)
        att = self._host_port(spec.src)
        if att is None:
            self._drop(pkt, "unattached", f"host{spec.src}")
            return
        self._enqueue(spec.src, att, pkt)

    def _host_port(self, host: int) -> int | None:
        for link in self.topo.incident(host):
            if link.up:
                return link.port_of(host)
        return None

    def _external(self, host: int) -> bool:
        seg = self.topo.host_segment(host)
        return seg is not None and seg in self.topo.segments and self.topo.segments[seg].external

    # --- traffic generators ----------------------------------------------------------------

    def start_flow(self, fid: int) -> None:
        spec = self.flows[fid]
        run = self.runs[fid]
        if run.active:
            return
        run.active = True
        run.started_at = self.now
        self.emit("scenario", "flow-started", flow=fid, src=spec.src, dst=spec.dst,
                  cls=spec.traffic_class.label, mode=spec.mode)
        first = max(self.now, spec.start_us)
        if spec.mode == "proactive":
            try:
                self.controlplane.request_flow(fid, self.intent_of(fid))
            except (ControlError, NoFeasiblePath) as exc:
                self.emit("scenario", "flow-request-failed", flow=fid, error=type(exc).__name__)
            first = max(first, self.now + SETUP_LEAD_US)
        run.tick = self.at(first, lambda: self._tick(fid), EventKind.TIMER)

    def stop_flow(self, fid: int) -> None:
        run = self.runs[fid]
        if not run.active:
            return
        run.active = False
        if run.tick is not None:
            self.engine.cancel(run.tick)
        self.emit("scenario", "flow-stopped", flow=fid)
        self.controlplane.teardown(fid)

    def _tick(self, fid: int) -> None:
        spec = self.flows[fid]
        run = self.runs[fid]
        if not run.active:
            return
        if spec.stop_us is not None and self.now >= spec.stop_us:
            self.stop_flow(fid)
            return
        if self._host_port(spec.src) is not None:
            self._inject(fid, run.next_seq, 0)
            run.next_seq += 1
        run.tick = self.at(self.now + spec.period_us, lambda: self._tick(fid), EventKind.TIMER)

    # --- authentication -----------------------------------------------------------------

    def _auth_via_port(self, host: int, pid: str, credential: str) -> None:
        att = self.topo.attachment(host)
        if att is None:
            return
        self.emit(f"sw{att[0]}", "auth-started", principal=pid, host=host, switch=att[0], port=att[1])
        self.at(self.now + self.settings.channel_us,
                lambda: self._auth_attempt(pid, credential, InternalPort(*att), host))

    def _auth_attempt(self, pid: str, credential: str, entry, host: int | None) -> None:
        auths = self.orch.running(VnfKind.AUTHENTICATOR)
        if isinstance(entry, Vpn) or entry == "vpn":
            gw = self.orch.running(VnfKind.VPN_GATEWAY)
            if not gw:
                self.emit("policy", "auth-denied", principal=pid, stage="credential",
                          reason="no-vpn-gateway")
                return
            entry = Vpn(gw[0].id)
        if not auths:
            self.emit("policy", "auth-retry", principal=pid, reason="no-authenticator")
            self.at(self.now + self.settings.auth_retry_us,
                    lambda: self._auth_attempt(pid, credential, entry, host), EventKind.TIMER)
            return
        inst = auths[0]

        def finish():
            try:
                session = self.policy.authenticate(pid, credential, entry, self.now, inst.running)
            except BadCredential:
                self.emit("policy", "auth-denied", principal=pid, stage="credential",
                          reason="bad-credential", host=host)
                return
            self._granted(session, host, inst.id)

        self.at(self.now + inst.descriptor.processing_delay, finish)

    def _granted(self, session, host: int | None, instance: int | None) -> None:
        pid = session.principal
        spec = self.principal_specs[pid]
        entry = "vpn" if isinstance(session.entry, Vpn) else ("static" if instance is None else "port")
        self.emit("policy", "auth-granted", principal=pid, session=session.id, host=host,
                  entry=entry, instance=instance, expiry=session.expiry)
        if isinstance(session.entry, InternalPort) and spec.auth == "port" and spec.segment is not None:
            e = session.entry
            self.topo.assign_port_segment(e.node, e.port, spec.segment)
            self.emit(f"sw{e.node}", "port-resegmented", switch=e.node, port=e.port, vlan=spec.segment)
        if session.expiry <= self.scenario.duration_us:
            sid = session.id
            self.at(session.expiry, lambda: self._expire(pid, sid), EventKind.TIMER)
        for fid in sorted(self.flows):
            f = self.flows[fid]
            if f.start_on == "auth" and not self.runs[fid].active and self.runs[fid].started_at is None \
                    and self.requester_of(fid) == pid:
                self.start_flow(fid)
        if host is not None:
            for fid in sorted(self.controlplane.flows):
                rec = self.controlplane.flows[fid]
                if rec.status == "suspended" and host in (rec.intent.src, rec.intent.dst):
                    self.controlplane.resume(rec)

    def _expire(self, pid: str, sid: int) -> None:
        s = self.policy.session_of(pid)
        if s is None or s.id != sid:
            return
        self.policy.end_session(pid)
        self.emit("policy", "session-expired", principal=pid, session=sid)
        for fid in sorted(self.controlplane.flows):
            if self.controlplane.flows[fid].intent.requester == pid:
                self.controlplane.teardown(fid)

    def _end_session(self, pid: str, reason: str) -> None:
        s = self.policy.end_session(pid)
        if s is not None:
            self.emit("policy", "session-ended", principal=pid, session=s.id, reason=reason)

    # --- injected events ----------------------------------------------------------------

    def fail_link(self, lid: int, cause: str = "failure") -> None:
        link = self.topo.link(lid)
        if self.topo.set_link_state(lid, LinkState.DOWN) is LinkState.DOWN:
            return
        self.link_epoch[lid] = self.link_epoch.get(lid, 0) + 1
        self.emit("link", "link-failure", link=lid, cause=cause)
        for end in (link.a, link.b):
            eg = self.egress.get(end)
            if eg is not None:
                for pkt in eg.queues.drain():
                    self._drop(pkt, "link-down", f"n{end[0]}")
        delay = self.settings.detect_heartbeats * self.settings.heartbeat_us
        self.at(self.now + delay, lambda: self._notify_link(lid, down=True))

    def repair_link(self, lid: int) -> None:
        if lid not in self.topo.links:
            return
        if self.topo.set_link_state(lid, LinkState.UP) is LinkState.UP:
            return
        self.emit("link", "link-repair", link=lid)
        delay = self.settings.detect_heartbeats * self.settings.heartbeat_us
        self.at(self.now + delay, lambda: self._notify_link(lid, down=False))

    def _notify_link(self, lid: int, down: bool) -> None:
        self.emit("ctrl", "link-down-detected" if down else "link-up-detected", link=lid)
        if down:
            self.controlplane.on_link_failure(lid)
        else:
            self.controlplane.on_link_repair(lid)

    def kill_controller(self, cid: int) -> None:
        ctrl = self.controlplane.controllers[cid]
        if not ctrl.alive:
            return
        ctrl.alive = False
        self.emit(f"ctrl{cid}", "controller-killed", controller=cid)
        delay = self.settings.failover_misses * self.settings.heartbeat_us

        def timeout():
            self.emit(f"ctrl{cid}", "controller-timeout", controller=cid)
            self.controlplane.failover(cid)
        self.at(self.now + delay, timeout, EventKind.CONTROLLER_TIMEOUT)

    def fail_nfv_host(self, node: int) -> None:
        if node in self.failed_nodes:
            return
        self.failed_nodes.add(node)
        self.emit(f"nfv{node}", "host-failed", node=node)
        for (n, port), eg in self.egress.items():
            if n == node:
                for pkt in eg.queues.drain():
                    self._drop(pkt, "node-failed", f"nfv{node}")
        report = self.orch.migrate_on_failure(node)
        self.controlplane.on_waypoint_lost(node)
        for iid, target in report.moved:
            inst = self.orch.instances[iid]
            self.emit("nfv", "vnf-migrating", instance=iid, kind=inst.kind.label, source=node, target=target)
            self.at(self.now + self.settings.nfv_migration_us, lambda iid=iid: self._vnf_up(iid))
        for iid in report.stranded:
            inst = self.orch.instances[iid]
            self.emit("nfv", "vnf-stranded", instance=iid, kind=inst.kind.label, source=node)
            if inst.kind is VnfKind.VPN_GATEWAY:
                for s in list(self.policy.sessions.values()):
                    if isinstance(s.entry, Vpn) and s.entry.gateway_instance == iid and not s.ended:
                        self._end_session(s.principal, "vpn-gateway-lost")
        if report.stranded:
            self.controlplane.retry_held()

    def _vnf_up(self, iid: int) -> None:
        self.orch.mark_running(iid)
        inst = self.orch.instances[iid]
        self.emit("nfv", "vnf-running", instance=iid, kind=inst.kind.label, host=inst.host)
        self.controlplane.retry_held()

    def plug_in(self, host: int, lid: int) -> None:
        if host not in self.topo.nodes:
            spec = self.scenario.node(host)
            self.topo.add_node(Node(spec.id, spec.kind, list(spec.ports), spec.region, spec.name))
        ls = self.scenario.link(lid)
        link = Link(ls.id, tuple(ls.a), tuple(ls.b), ls.latency, ls.bandwidth, ls.jitter)
        self.topo.add_link(link)
        self.link_epoch[lid] = self.link_epoch.get(lid, 0) + 1
        sw, port = link.other(host)
        self.emit(f"sw{sw}", "device-plug-in", host=host, switch=sw, port=port, link=lid)
        p = self.policy.principal_for_host(host)
        if p is not None and self.principal_specs[p.id].auth == "port":
            self.topo.assign_port_segment(sw, port, QUARANTINE_VLAN)
            self.emit(f"sw{sw}", "port-quarantined", switch=sw, port=port)
            self._auth_via_port(host, p.id, self._device_credential(host, p))

    def unplug(self, host: int, planned: bool = False) -> None:
        links = list(self.topo.incident(host))
        for link in links:
            sw, port = link.other(host)
            self.fail_link(link.id, cause="unplug")
            self.topo.remove_link(link.id)
            self.topo.assign_port_segment(sw, port, QUARANTINE_VLAN)
            self.emit(f"sw{sw}", "device-unplugged", host=host, switch=sw, port=port, link=link.id,
                      planned=planned)
        p = self.policy.principal_for_host(host)
        if p is not None:
            self._end_session(p.id, "unplugged")

    def _device_credential(self, host: int, principal: Principal) -> str:
        node = next((n for n in self.scenario.nodes if n.id == host), None)
        return node.credential if node is not None and node.credential else principal.credential

    def _scenario_event(self, ev) -> None:
        p = ev.params
        kind = ev.kind
        self.emit("scenario", "scenario-event", kind=kind, **{k: p[k] for k in sorted(p)})
        if kind == "link-failure":
            self.fail_link(p["link"])
        elif kind == "link-repair":
            self.repair_link(p["link"])
        elif kind == "controller-kill":
            self.kill_controller(p["controller"])
        elif kind == "host-failure":
            self.fail_nfv_host(p["node"])
        elif kind == "plug-in":
            self.plug_in(p["host"], p["link"])
        elif kind == "unplug":
            self.unplug(p["host"], bool(p.get("planned", False)))
        elif kind == "tamper":
            run = self.runs[p["flow"]]
            run.force_tamper += int(p.get("count", 1))
            run.pin_next = bool(p.get("same_packet", False))
        elif kind == "register-app":
            params = dict(p.get("params") or {})
            if "hosts" in params:
                params["hosts"] = tuple(params["hosts"])
            try:
                self.controlplane.register_app(p["controller"], APP_FACTORIES[p["app"]](**params))
            except DuplicateApp:
                self.emit("scenario", "app-rejected", app=p["app"], reason="duplicate")
        elif kind == "deregister-app":
            self.controlplane.deregister_app(p["controller"], p["app"])
        elif kind == "start-flow":
            self.start_flow(p["flow"])
        elif kind == "stop-flow":
            self.stop_flow(p["flow"])
        elif kind == "retarget":
            self.emit("scenario", "flow-retargeted", old=p["stop"], new=p["start"])
            self.stop_flow(p["stop"])
            self.start_flow(p["start"])
        elif kind == "authenticate":
            entry = p.get("entry", "vpn")
            host = p.get("host")
            if entry == "vpn":
                self._auth_attempt(p["principal"], p["credential"], "vpn", host)
            else:
                self._auth_via_port(host, p["principal"], p["credential"])
        elif kind == "manual":
            self.emit("operator", "manual-action", note=p.get("note", ""))

    # --- run ----------------------------------------------------------------------

    def _bootstrap(self) -> None:
        cp = self.controlplane
        for c in sorted(cp.controllers.values(), key=lambda c: c.id):
            if c.active:
                self.emit(f"ctrl{c.id}", "controller-up", controller=c.id, level=c.level.name.lower(),
                          parent=c.parent, scope=sorted(c.scope), standby=c.standby)
        for sw, cid in sorted(self.topo.controller_assignment.items()):
            self.emit(f"sw{sw}", "switch-homed", switch=sw, controller=cid)
        facility = cp.facility()
        for v in self.scenario.vnfs:
            d = VnfDescriptor(v.kind, v.cpu, v.mem, v.processing_us)
            try:
                inst = self.orch.instantiate(d, caller_is_facility=facility.alive, constraint=v.host,
                                             attachments=[a if isinstance(a, str) else tuple(a) for a in v.attach],
                                             name=v.name)
            except NoCapacity:
                self.emit("nfv", "vnf-placement-failed", name=v.name, kind=v.kind.value)
                continue
            self.emit("nfv", "vnf-instantiated", instance=inst.id, name=inst.name, kind=inst.kind.label,
                      host=inst.host, by=facility.id)
            self.at(self.settings.nfv_boot_us, lambda iid=inst.id: self._vnf_up(iid))
        for pid in sorted(self.principal_specs):
            spec = self.principal_specs[pid]
            host = spec.host
            if spec.auth == "static":
                att = self.topo.attachment(host) if host is not None else None
                entry = InternalPort(*att) if att else None
                if att and spec.segment is not None and self.topo.segment_of_port(*att) is None:
                    self.topo.assign_port_segment(att[0], att[1], spec.segment)
                session = self.policy.open_session(self.policy.principal(pid), 0, entry)
                self._granted(session, host, None)
            elif spec.auth == "port" and host is not None and host in self.topo.nodes:
                att = self.topo.attachment(host)
                if att is None:
                    continue
                self.topo.assign_port_segment(att[0], att[1], QUARANTINE_VLAN)
                self.emit(f"sw{att[0]}", "port-quarantined", switch=att[0], port=att[1])
                self._auth_via_port(host, pid, self._device_credential(host, self.policy.principal(pid)))
        for fid in sorted(self.flows):
            spec = self.flows[fid]
            if spec.start_on == "time":
                lead = SETUP_LEAD_US if spec.mode == "proactive" else 0
                self.at(max(0, spec.start_us - lead), lambda fid=fid: self.start_flow(fid),
                        EventKind.SCENARIO_ACTION)
        kinds = {"link-failure": EventKind.LINK_FAILURE, "link-repair": EventKind.LINK_REPAIR,
                 "plug-in": EventKind.DEVICE_PLUG_IN, "tamper": EventKind.TAMPER_INJECTION}
        for ev in self.scenario.events:
            self.at(ev.at, lambda ev=ev: self._scenario_event(ev),
                    kinds.get(ev.kind, EventKind.SCENARIO_ACTION))

    def run(self, until: int | None = None) -> ScenarioTrace:
        if self._started:
            raise RuntimeError("a Network runs once")
        self._started = True
        end = self.scenario.duration_us if until is None else until
        self._bootstrap()
        trace = self.engine.run_until(end)
        for ident in sorted(self.live):
            fid, seq, attempt = ident
            self.emit("kernel", "packet-in-flight", flow=fid, seq=seq, attempt=attempt)
        self.emit("kernel", "run-end", in_flight=len(self.live), until=end,
                  reserved={str(k): v for k, v in self.ledger.snapshot().items()})
        return trace


def simulate(scenario: Scenario, seed: int | None = None, until: int | None = None) -> ScenarioTrace:
    return Network(scenario, seed).run(until)
