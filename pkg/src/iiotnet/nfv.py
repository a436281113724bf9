"""NFV infrastructure: hosts, VNF catalog, first-fit placement, traversal, migration."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

from .dataplane import Packet
from .policy import CompiledPolicy, Verdict

BOOT_US = 1_000
MIGRATION_US = 5_000


class NfvError(Exception):
    pass


class NoCapacity(NfvError):
    pass


class InstanceNotRunning(NfvError):
    pass


class NotOrchestrator(NfvError):
    pass


class VnfKind(enum.Enum):
    FIREWALL = "firewall"
    VPN_GATEWAY = "vpn_gateway"
    AUTHENTICATOR = "authenticator"
    TRAFFIC_MONITOR = "traffic_monitor"

    @property
    def label(self) -> str:
        return {"firewall": "Firewall", "vpn_gateway": "VpnGateway",
                "authenticator": "Authenticator", "traffic_monitor": "TrafficMonitor"}[self.value]


class InstanceState(enum.Enum):
    STARTING = "starting"
    RUNNING = "running"
    MIGRATING = "migrating"
    FAILED = "failed"


@dataclass(frozen=True)
class VnfDescriptor:
    kind: VnfKind
    cpu_demand: int
    mem_demand: int
    processing_delay: int = 0

    def __post_init__(self):
        if self.cpu_demand <= 0 or self.mem_demand <= 0:
            raise ValueError("VNF demands must be positive")
        if self.processing_delay < 0:
            raise ValueError("processing delay must be >= 0")


@dataclass
class NfvHost:
    node: int
    cpu_capacity: int
    mem_capacity: int
    cpu_residual: int = -1
    mem_residual: int = -1
    failed: bool = False

    def __post_init__(self):
        if self.cpu_residual < 0:
            self.cpu_residual = self.cpu_capacity
        if self.mem_residual < 0:
            self.mem_residual = self.mem_capacity

    def fits(self, d: VnfDescriptor) -> bool:
        return not self.failed and self.cpu_residual >= d.cpu_demand and self.mem_residual >= d.mem_demand

    def take(self, d: VnfDescriptor) -> None:
        self.cpu_residual -= d.cpu_demand
        self.mem_residual -= d.mem_demand

    def give(self, d: VnfDescriptor) -> None:
        self.cpu_residual += d.cpu_demand
        self.mem_residual += d.mem_demand


Attachment = tuple[int, int] | str  # segment transition, or access-point tag / "any"


@dataclass
class VnfInstance:
    id: int
    descriptor: VnfDescriptor
    host: int | None
    attachments: frozenset = frozenset()
    state: InstanceState = InstanceState.STARTING
    name: str = ""
    stats: dict[int, int] = field(default_factory=dict)

    @property
    def kind(self) -> VnfKind:
        return self.descriptor.kind

    @property
    def running(self) -> bool:
        return self.state is InstanceState.RUNNING

    def attached_to(self, transition: tuple[int, int]) -> bool:
        return transition in self.attachments or "any" in self.attachments


@dataclass(frozen=True)
class Forward:
    pkt: Packet


@dataclass(frozen=True)
class Transform:
    pkt: Packet


@dataclass(frozen=True)
class DropPacket:
    reason: str


TraverseResult = Forward | Transform | DropPacket


@dataclass
class MigrationReport:
    host: int
    moved: list[tuple[int, int]] = field(default_factory=list)  # (instance, new host)
    stranded: list[int] = field(default_factory=list)


class Orchestrator:
    def __init__(self, hosts: list[NfvHost]):
        self.hosts = {h.node: h for h in sorted(hosts, key=lambda h: h.node)}
        self.instances: dict[int, VnfInstance] = {}
        self._ids = itertools.count(1)

    def _first_fit(self, d: VnfDescriptor, constraint: int | None = None,
                   exclude: int | None = None) -> NfvHost | None:
        for hid in sorted(self.hosts):
            h = self.hosts[hid]
            if constraint is not None and hid != constraint:
                continue
            if hid == exclude:
                continue
            if h.fits(d):
                return h
        return None

    def instantiate(self, descriptor: VnfDescriptor, *, caller_is_facility: bool = True,
                    constraint: int | None = None, attachments=(), name: str = "") -> VnfInstance:
        """Place on the first host (by id) with room; the instance starts in STARTING."""
        if not caller_is_facility:
            raise NotOrchestrator("only the facility controller orchestrates NFV")
        host = self._first_fit(descriptor, constraint)
        if host is None:
            raise NoCapacity(f"no host fits {descriptor.kind.value}")
        host.take(descriptor)
        inst = VnfInstance(next(self._ids), descriptor, host.node, frozenset(attachments), name=name)
        inst.name = inst.name or f"{descriptor.kind.value}-{inst.id}"
        self.instances[inst.id] = inst
        return inst

    def mark_running(self, inst_id: int) -> None:
        inst = self.instances[inst_id]
        if inst.state in (InstanceState.STARTING, InstanceState.MIGRATING):
            inst.state = InstanceState.RUNNING

    def on_host(self, host: int) -> list[VnfInstance]:
        return [i for i in self.instances.values() if i.host == host]

    def find(self, kind: VnfKind, attachment: Attachment) -> VnfInstance | None:
        """Lowest-id non-failed instance of ``kind`` serving the attachment."""
        for iid in sorted(self.instances):
            inst = self.instances[iid]
            if inst.kind is not kind or inst.state is InstanceState.FAILED:
                continue
            if (isinstance(attachment, tuple) and inst.attached_to(attachment)) or attachment in inst.attachments:
                return inst
        return None

    def running(self, kind: VnfKind) -> list[VnfInstance]:
        return [i for _, i in sorted(self.instances.items()) if i.kind is kind and i.running]

    def traverse(self, inst: VnfInstance, pkt: Packet, compiled: CompiledPolicy | None = None,
                 dst_segment: int | None = None) -> TraverseResult:
        if not inst.running:
            raise InstanceNotRunning(inst.name)
        kind = inst.kind
        if kind is VnfKind.FIREWALL:
            verdict = compiled.firewall_verdict(pkt.vlan, dst_segment, pkt.traffic_class)
            if verdict is Verdict.ALLOW:
                pkt.vlan = dst_segment
                return Forward(pkt)
            return DropPacket("policy")
        if kind is VnfKind.VPN_GATEWAY:
            if pkt.encapsulated:
                pkt.encapsulated = False
                return Transform(pkt)
            return Forward(pkt)
        if kind is VnfKind.TRAFFIC_MONITOR:
            inst.stats[pkt.flow_id] = inst.stats.get(pkt.flow_id, 0) + 1
        return Forward(pkt)

    def fail_host(self, host: int) -> list[VnfInstance]:
        h = self.hosts[host]
        h.failed = True
        affected = self.on_host(host)
        for inst in affected:
            inst.state = InstanceState.FAILED
        return affected

    def migrate_on_failure(self, host: int) -> MigrationReport:
        """Re-place every instance of a failed host first-fit on the survivors.

        Moved instances are MIGRATING until :meth:`mark_running`; the ones that
        do not fit stay FAILED.
        """
        h = self.hosts[host]
        if not h.failed:
            self.fail_host(host)
        report = MigrationReport(host)
        for inst in sorted(self.on_host(host), key=lambda i: i.id):
            h.give(inst.descriptor)
            target = self._first_fit(inst.descriptor, exclude=host)
            if target is None:
                inst.host = None
                inst.state = InstanceState.FAILED
                report.stranded.append(inst.id)
                continue
            target.take(inst.descriptor)
            inst.host = target.node
            inst.state = InstanceState.MIGRATING
            report.moved.append((inst.id, target.node))
        return report

    def committed(self, host: int) -> tuple[int, int]:
        cpu = mem = 0
        for inst in self.instances.values():
            if inst.host == host and inst.state is not InstanceState.FAILED:
                cpu += inst.descriptor.cpu_demand
                mem += inst.descriptor.mem_demand
        return cpu, mem
