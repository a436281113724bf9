"""Switch-level data plane: packets, match-action tables, egress queues.

The classes here hold state and make forwarding decisions; event scheduling
and trace emission are driven by :mod:`iiotnet.network`.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from .simkernel import SimTime
from .topology import Link

MISS_BUFFER = 64
RETRANSMIT_LIMIT = 3


class DataplaneError(Exception):
    pass


class UnknownSwitch(DataplaneError):
    pass


class UnauthorizedController(DataplaneError):
    pass


class DuplicateRuleId(DataplaneError):
    pass


class LinkDown(DataplaneError):
    pass


class RetransmitExhausted(DataplaneError):
    pass


class TrafficClass(enum.IntEnum):
    """Lower value is served first."""

    TIME_CRITICAL = 0
    GUARANTEED = 1
    BEST_EFFORT = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "TrafficClass":
        return cls[text.upper()]


@dataclass
class Packet:
    flow_id: int
    seq: int
    src: int
    dst: int
    vlan: int
    traffic_class: TrafficClass
    size: int
    created_at: SimTime
    attempt: int = 0
    payload_tag: int | None = None
    checksum: int | None = None
    tampered: bool = False
    origin_vlan: int = 0
    encapsulated: bool = False
    links: list[int] = field(default_factory=list)
    vnfs: list[str] = field(default_factory=list)
    copy: bool = False

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("packet size must be positive")
        if self.payload_tag is None:
            self.payload_tag = (self.flow_id * 7919 + self.seq * 104729) & 0xFFFF
        if self.checksum is None:
            self.checksum = compute_checksum(self)

    @property
    def ident(self) -> tuple[int, int, int]:
        return (self.flow_id, self.seq, self.attempt)

    def clone(self) -> "Packet":
        p = Packet(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        p.links = list(self.links)
        p.vnfs = list(self.vnfs)
        return p


def compute_checksum(pkt: Packet) -> int:
    """Additive 16-bit checksum over the header fields and payload tag."""
    total = pkt.flow_id + pkt.seq + pkt.src + pkt.dst + pkt.size + pkt.payload_tag
    return total & 0xFFFF


def tamper(pkt: Packet) -> None:
    pkt.payload_tag = (pkt.payload_tag + 1) & 0xFFFF
    pkt.tampered = True


# --- rules -----------------------------------------------------------------


@dataclass(frozen=True)
class Match:
    in_port: int | None = None
    src: int | None = None
    dst: int | None = None
    vlan: int | None = None
    traffic_class: TrafficClass | None = None

    def specificity(self) -> int:
        return sum(v is not None for v in (self.in_port, self.src, self.dst,
                                           self.vlan, self.traffic_class))

    def matches(self, pkt: Packet, in_port: int) -> bool:
        return ((self.in_port is None or self.in_port == in_port)
                and (self.src is None or self.src == pkt.src)
                and (self.dst is None or self.dst == pkt.dst)
                and (self.vlan is None or self.vlan == pkt.vlan)
                and (self.traffic_class is None or self.traffic_class == pkt.traffic_class))

    def describe(self) -> str:
        parts = []
        for name in ("in_port", "src", "dst", "vlan", "traffic_class"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v.label if name == 'traffic_class' else v}")
        return ",".join(parts) or "*"


@dataclass(frozen=True)
class ForwardPort:
    port: int


@dataclass(frozen=True)
class SetQueue:
    traffic_class: TrafficClass


@dataclass(frozen=True)
class Drop:
    reason: str = "rule"


@dataclass(frozen=True)
class ToController:
    pass


Action = ForwardPort | SetQueue | Drop | ToController


def describe_actions(actions: Iterable[Action]) -> str:
    out = []
    for a in actions:
        if isinstance(a, ForwardPort):
            out.append(f"output:{a.port}")
        elif isinstance(a, SetQueue):
            out.append(f"queue:{a.traffic_class.label}")
        elif isinstance(a, Drop):
            out.append(f"drop:{a.reason}")
        else:
            out.append("controller")
    return ",".join(out)


@dataclass
class FlowRule:
    rule_id: int
    match: Match
    priority: int
    actions: tuple[Action, ...]
    installed_by: int
    idle_timeout: SimTime | None = None
    hard_timeout: SimTime | None = None
    installed_at: SimTime = 0
    last_hit: SimTime = 0
    cookie: int | None = None

    def __post_init__(self):
        if not 0 <= self.priority <= 65535:
            raise ValueError(f"priority {self.priority} outside 0..65535")
        self.actions = tuple(self.actions)
        fwd = sum(isinstance(a, ForwardPort) for a in self.actions)
        if fwd > 1:
            raise ValueError("at most one ForwardPort action")
        if fwd and any(isinstance(a, ToController) for a in self.actions):
            raise ValueError("ForwardPort and ToController are mutually exclusive")

    def expired(self, now: SimTime) -> bool:
        if self.hard_timeout is not None and now > self.installed_at + self.hard_timeout:
            return True
        if self.idle_timeout is not None and now > self.last_hit + self.idle_timeout:
            return True
        return False

    def sort_key(self):
        return (-self.priority, -self.match.specificity(), self.rule_id)


class FlowTable:
    def __init__(self):
        self.rules: dict[int, FlowRule] = {}

    def __len__(self):
        return len(self.rules)

    def install(self, rule: FlowRule, now: SimTime) -> int:
        if rule.rule_id in self.rules:
            raise DuplicateRuleId(f"rule {rule.rule_id} already installed")
        rule.installed_at = now
        rule.last_hit = now
        self.rules[rule.rule_id] = rule
        return rule.rule_id

    def remove(self, rule_id: int) -> FlowRule | None:
        return self.rules.pop(rule_id, None)

    def expire(self, now: SimTime) -> list[FlowRule]:
        gone = [r for r in self.rules.values() if r.expired(now)]
        for r in gone:
            del self.rules[r.rule_id]
        return gone

    def lookup(self, pkt: Packet, in_port: int, now: SimTime) -> FlowRule | None:
        """Highest priority match; ties by specificity then lowest rule id."""
        best = None
        for rule in self.rules.values():
            if rule.match.matches(pkt, in_port) and (best is None or rule.sort_key() < best.sort_key()):
                best = rule
        if best is not None:
            best.last_hit = now
        return best

    def snapshot(self) -> list[dict]:
        return [
            {"rule_id": r.rule_id, "priority": r.priority, "match": r.match.describe(),
             "actions": describe_actions(r.actions), "installed_by": r.installed_by,
             "idle_timeout": r.idle_timeout, "hard_timeout": r.hard_timeout}
            for r in sorted(self.rules.values(), key=FlowRule.sort_key)
        ]


# --- queues and transmission ----------------------------------------------


class PortQueues:
    """Per-port egress queues.

    ``strict=True`` keeps one bounded FIFO per traffic class served in strict
    priority; ``strict=False`` is a single FIFO (legacy switches).
    """

    def __init__(self, capacity: int = 64, strict: bool = True):
        self.capacity = capacity
        self.strict = strict
        self.queues = [deque() for _ in TrafficClass] if strict else [deque()]

    def _queue(self, pkt: Packet) -> deque:
        return self.queues[pkt.traffic_class] if self.strict else self.queues[0]

    def offer(self, pkt: Packet) -> bool:
        q = self._queue(pkt)
        if len(q) >= self.capacity:
            return False
        q.append(pkt)
        return True

    def pop(self) -> Packet | None:
        for q in self.queues:
            if q:
                return q.popleft()
        return None

    def drain(self) -> list[Packet]:
        out = []
        for q in self.queues:
            out.extend(q)
            q.clear()
        return out

    def __len__(self):
        return sum(len(q) for q in self.queues)


@dataclass
class Egress:
    """Transmitter for one (node, port)."""

    node: int
    port: int
    queues: PortQueues
    busy_until: SimTime = 0
    in_flight: Packet | None = None
    last_arrival: SimTime = 0


def arrival_time(now: SimTime, link: Link, pkt: Packet, jitter: int, last_arrival: SimTime = 0) -> SimTime:
    """now + serialization + propagation + jitter, never before the previous arrival."""
    if not link.up:
        raise LinkDown(f"link {link.id} is down")
    t = now + link.serialization_us(pkt.size) + link.latency + jitter
    return max(t, last_arrival)


# --- legacy switching -----------------------------------------------------


class LegacyTable:
    """Static destination -> port table of a non-SDN switch."""

    def __init__(self, entries: dict[int, int] | None = None):
        self.entries = dict(entries or {})

    def forward(self, pkt: Packet, in_port: int, flood_ports: Iterable[int]) -> list[int]:
        port = self.entries.get(pkt.dst)
        if port is not None:
            return [port]
        return [p for p in flood_ports if p != in_port]


# --- receiver integrity check ------------------------------------------------


class Verdict(enum.Enum):
    ACCEPT = "accept"
    NACK = "nack"
    EXHAUSTED = "exhausted"
    DUPLICATE = "duplicate"


class Receiver:
    """Per-host sink: checksum verification and per-flow duplicate tracking."""

    def __init__(self, retransmit_limit: int = RETRANSMIT_LIMIT):
        self.retransmit_limit = retransmit_limit
        self.accepted: set[tuple[int, int]] = set()

    def verify_and_ack(self, pkt: Packet) -> Verdict:
        key = (pkt.flow_id, pkt.seq)
        if key in self.accepted:
            return Verdict.DUPLICATE
        if compute_checksum(pkt) != pkt.checksum:
            if pkt.attempt >= self.retransmit_limit:
                return Verdict.EXHAUSTED
            return Verdict.NACK
        self.accepted.add(key)
        return Verdict.ACCEPT
