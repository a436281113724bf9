"""Principals, roles, sessions, segment transition policy and its compilation."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .dataplane import TrafficClass
from .simkernel import SimTime
from .topology import QUARANTINE_VLAN

if TYPE_CHECKING:
    from .controlplane import FlowIntent

DEFAULT_SESSION_EXPIRY_US = 60_000_000


class PolicyError(Exception):
    pass


class BadCredential(PolicyError):
    pass


class NoAuthenticator(PolicyError):
    pass


class SessionExpired(PolicyError):
    pass


class UnknownSegment(PolicyError):
    pass


class UnknownPrincipal(PolicyError):
    pass


class PrincipalKind(enum.Enum):
    HUMAN_USER = "human_user"
    SERVICE = "service"
    DEVICE = "device"


class Verdict(enum.Enum):
    ALLOW = "allow"
    DENY = "deny"


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    expected_segment: int
    default_class: TrafficClass = TrafficClass.BEST_EFFORT


@dataclass
class Principal:
    id: str
    kind: PrincipalKind
    roles: set[str]
    credential: str
    device_profile: DeviceProfile | None = None
    host: int | None = None

    def __post_init__(self):
        if not self.credential:
            raise PolicyError(f"principal {self.id}: empty credential")
        if self.kind is PrincipalKind.DEVICE and self.device_profile is None:
            raise PolicyError(f"device {self.id} needs a device profile")


@dataclass(frozen=True)
class PolicyRule:
    from_segment: int
    to_segment: int
    traffic_class: TrafficClass | None  # None = any
    verdict: Verdict
    require_firewall: bool = True

    def applies(self, src: int, dst: int, cls: TrafficClass) -> bool:
        return (self.from_segment == src and self.to_segment == dst
                and (self.traffic_class is None or self.traffic_class == cls))


@dataclass
class SegmentPolicy:
    """Ordered first-match-wins rules; anything unmatched is denied."""

    rules: list[PolicyRule] = field(default_factory=list)

    def evaluate(self, src: int, dst: int, cls: TrafficClass) -> tuple[Verdict, bool]:
        if src == dst:
            return Verdict.ALLOW, False
        for rule in self.rules:
            if rule.applies(src, dst, cls):
                return rule.verdict, rule.verdict is Verdict.ALLOW and rule.require_firewall
        return Verdict.DENY, False


@dataclass(frozen=True)
class FirewallRule:
    traffic_class: TrafficClass | None
    verdict: Verdict


@dataclass(frozen=True)
class CompiledPolicy:
    """Per-transition firewall rule lists plus the controller's admission table."""

    firewall_rules: dict[tuple[int, int], tuple[FirewallRule, ...]]
    admission: dict[tuple[int, int, TrafficClass], tuple[Verdict, bool]]

    def predicate(self, src: int, dst: int, cls: TrafficClass) -> tuple[Verdict, bool]:
        if src == dst:
            return Verdict.ALLOW, False
        return self.admission.get((src, dst, cls), (Verdict.DENY, False))

    def firewall_verdict(self, src: int, dst: int, cls: TrafficClass) -> Verdict:
        if src == dst:
            return Verdict.ALLOW
        for rule in self.firewall_rules.get((src, dst), ()):
            if rule.traffic_class is None or rule.traffic_class == cls:
                return rule.verdict
        return Verdict.DENY


def compile_policy(policy: SegmentPolicy, segments: set[int] | frozenset[int]) -> CompiledPolicy:
    """Pure translation of a segment policy; raises UnknownSegment."""
    for i, rule in enumerate(policy.rules):
        for seg in (rule.from_segment, rule.to_segment):
            if seg not in segments:
                raise UnknownSegment(f"rules[{i}] references unknown segment {seg}")
    fw: dict[tuple[int, int], list[FirewallRule]] = {}
    for rule in policy.rules:
        if rule.from_segment == rule.to_segment:
            continue
        fw.setdefault((rule.from_segment, rule.to_segment), []).append(
            FirewallRule(rule.traffic_class, rule.verdict))
    admission = {}
    for src, dst in itertools.permutations(sorted(segments), 2):
        for cls in TrafficClass:
            verdict, need_fw = policy.evaluate(src, dst, cls)
            if verdict is Verdict.ALLOW:
                admission[(src, dst, cls)] = (verdict, need_fw)
    return CompiledPolicy({k: tuple(v) for k, v in sorted(fw.items())}, admission)


# --- sessions ---------------------------------------------------------------


@dataclass(frozen=True)
class InternalPort:
    node: int
    port: int


@dataclass(frozen=True)
class Vpn:
    gateway_instance: int


@dataclass
class Session:
    id: int
    principal: str
    roles: frozenset[str]
    established_at: SimTime
    expiry: SimTime
    entry: InternalPort | Vpn | None = None
    ended: bool = False

    def __post_init__(self):
        if self.expiry <= self.established_at:
            raise PolicyError("session expiry must follow establishment")

    def valid(self, now: SimTime) -> bool:
        return not self.ended and now < self.expiry


@dataclass(frozen=True)
class Allow:
    required_firewall: bool


@dataclass(frozen=True)
class Deny:
    reason: str

    def __bool__(self):
        return False


class PolicyEngine:
    def __init__(self, policy: SegmentPolicy, segments: set[int],
                 role_permissions: dict[str, set[int]] | None = None,
                 principals: dict[str, Principal] | None = None,
                 session_expiry: SimTime = DEFAULT_SESSION_EXPIRY_US):
        self.policy = policy
        self.segments = set(segments)
        self.role_permissions = {k: set(v) for k, v in (role_permissions or {}).items()}
        self.principals = dict(principals or {})
        self.session_expiry = session_expiry
        self.compiled = compile_policy(policy, self.segments | {QUARANTINE_VLAN})
        self.sessions: dict[int, Session] = {}
        self._by_principal: dict[str, int] = {}
        self._ids = itertools.count(1)

    def principal(self, pid: str) -> Principal:
        try:
            return self.principals[pid]
        except KeyError:
            raise UnknownPrincipal(pid) from None

    def principal_for_host(self, host: int) -> Principal | None:
        for p in self.principals.values():
            if p.host == host:
                return p
        return None

    def check_credential(self, principal_id: str, credential: str) -> Principal:
        p = self.principals.get(principal_id)
        if p is None or p.credential != credential:
            raise BadCredential(principal_id)
        return p

    def open_session(self, principal: Principal, now: SimTime,
                     entry: InternalPort | Vpn | None) -> Session:
        old = self._by_principal.get(principal.id)
        if old is not None:
            self.sessions[old].ended = True
        s = Session(next(self._ids), principal.id, frozenset(principal.roles), now,
                    now + self.session_expiry, entry)
        self.sessions[s.id] = s
        self._by_principal[principal.id] = s.id
        return s

    def authenticate(self, principal_id: str, credential: str, entry, now: SimTime,
                     authenticator_running: bool = True) -> Session:
        """Check the credential through a running Authenticator and open a session."""
        if not authenticator_running:
            raise NoAuthenticator("no running authenticator instance")
        p = self.check_credential(principal_id, credential)
        return self.open_session(p, now, entry)

    def end_session(self, principal_id: str) -> Session | None:
        sid = self._by_principal.pop(principal_id, None)
        if sid is None:
            return None
        self.sessions[sid].ended = True
        return self.sessions[sid]

    def session_of(self, principal_id: str) -> Session | None:
        sid = self._by_principal.get(principal_id)
        return None if sid is None else self.sessions[sid]

    def authorize_flow(self, session: Session, intent: "FlowIntent", src_segment: int,
                       dst_segment: int, now: SimTime) -> Allow | Deny:
        if not session.valid(now):
            raise SessionExpired(f"session {session.id} of {session.principal}")
        permitted = any(dst_segment in self.role_permissions.get(r, ()) for r in session.roles)
        if not permitted:
            return Deny("role")
        verdict, need_fw = self.compiled.predicate(src_segment, dst_segment, intent.traffic_class)
        if verdict is Verdict.DENY:
            return Deny("segment-policy")
        return Allow(need_fw)
