"""Network model: nodes, ports, links, segments and graph queries."""

from __future__ import annotations

import enum
import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

QUARANTINE_VLAN = 4094


class TopologyError(Exception):
    pass


class DuplicateId(TopologyError):
    pass


class PortOccupied(TopologyError):
    pass


class UnknownEndpoint(TopologyError):
    pass


class UnknownLink(TopologyError):
    pass


class NoFeasiblePath(TopologyError):
    pass


class NodeKind(enum.Enum):
    SDN_SWITCH = "sdn_switch"
    LEGACY_SWITCH = "legacy_switch"
    HOST = "host"
    NFV_HOST = "nfv_host"


class Region(enum.Enum):
    SDN = "sdn"
    LEGACY = "legacy"


class LinkState(enum.Enum):
    UP = "up"
    DOWN = "down"


@dataclass
class Node:
    id: int
    kind: NodeKind
    ports: list[int]
    region: Region = Region.SDN
    name: str = ""
    gateway_ports: set[int] = field(default_factory=set)

    def __post_init__(self):
        if len(set(self.ports)) != len(self.ports):
            raise TopologyError(f"node {self.id}: duplicate port numbers")
        if self.kind is NodeKind.SDN_SWITCH and self.region is not Region.SDN:
            raise TopologyError(f"SDN switch {self.id} must be in the SDN region")
        if self.kind is NodeKind.LEGACY_SWITCH and self.region is not Region.LEGACY:
            raise TopologyError(f"legacy switch {self.id} must be in the legacy region")
        if not self.name:
            self.name = f"n{self.id}"

    @property
    def is_switch(self) -> bool:
        return self.kind in (NodeKind.SDN_SWITCH, NodeKind.LEGACY_SWITCH)


@dataclass
class Link:
    id: int
    a: tuple[int, int]
    b: tuple[int, int]
    latency: int
    bandwidth: int
    jitter_bound: int = 0
    state: LinkState = LinkState.UP

    def __post_init__(self):
        if self.latency <= 0:
            raise TopologyError(f"link {self.id}: latency must be > 0")
        if self.bandwidth <= 0:
            raise TopologyError(f"link {self.id}: bandwidth must be > 0")
        if self.jitter_bound < 0:
            raise TopologyError(f"link {self.id}: jitter_bound must be >= 0")

    @property
    def up(self) -> bool:
        return self.state is LinkState.UP

    def other(self, node: int) -> tuple[int, int]:
        if self.a[0] == node:
            return self.b
        if self.b[0] == node:
            return self.a
        raise UnknownEndpoint(f"node {node} is not an endpoint of link {self.id}")

    def port_of(self, node: int) -> int:
        if self.a[0] == node:
            return self.a[1]
        if self.b[0] == node:
            return self.b[1]
        raise UnknownEndpoint(f"node {node} is not an endpoint of link {self.id}")

    def serialization_us(self, size_bytes: int) -> int:
        # bytes * 8 bits / (kbit/s * 1000) s, expressed in whole microseconds
        return -(-size_bytes * 8000 // self.bandwidth)


@dataclass
class Segment:
    vlan_id: int
    name: str
    security_level: int = 0
    member_ports: set[tuple[int, int]] = field(default_factory=set)
    external: bool = False

    def __post_init__(self):
        if not 1 <= self.vlan_id <= 4094:
            raise TopologyError(f"vlan id {self.vlan_id} outside 1..4094")
        if not 0 <= self.security_level <= 3:
            raise TopologyError(f"segment {self.vlan_id}: security level outside 0..3")


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    links: tuple[int, ...]
    latency: int

    def __len__(self):
        return len(self.links)

    def key(self):
        return (self.latency, self.nodes, self.links)

    def concat(self, other: "Path") -> "Path":
        if self.nodes[-1] != other.nodes[0]:
            raise ValueError("paths do not join")
        return Path(self.nodes + other.nodes[1:], self.links + other.links,
                    self.latency + other.latency)


class Topology:
    def __init__(self):
        self.nodes: dict[int, Node] = {}
        self.links: dict[int, Link] = {}
        self.segments: dict[int, Segment] = {}
        self.controller_assignment: dict[int, int] = {}
        self.revision = 0
        self._port_link: dict[tuple[int, int], int] = {}
        self._port_segment: dict[tuple[int, int], int] = {}

    # --- mutation -------------------------------------------------------

    def add_node(self, node: Node) -> int:
        if node.id in self.nodes:
            raise DuplicateId(f"node {node.id} already exists")
        self.nodes[node.id] = node
        self.revision += 1
        return node.id

    def add_link(self, link: Link) -> int:
        if link.id in self.links:
            raise DuplicateId(f"link {link.id} already exists")
        for node_id, port in (link.a, link.b):
            node = self.nodes.get(node_id)
            if node is None or port not in node.ports:
                raise UnknownEndpoint(f"link {link.id}: no port {port} on node {node_id}")
            if (node_id, port) in self._port_link:
                raise PortOccupied(f"link {link.id}: port {port} on node {node_id} is occupied")
        if link.a[0] == link.b[0]:
            raise UnknownEndpoint(f"link {link.id}: self-loop")
        self.links[link.id] = link
        self._port_link[link.a] = link.id
        self._port_link[link.b] = link.id
        self.revision += 1
        return link.id

    def remove_link(self, link_id: int) -> Link:
        link = self.link(link_id)
        del self.links[link_id]
        del self._port_link[link.a]
        del self._port_link[link.b]
        self.revision += 1
        return link

    def set_link_state(self, link_id: int, state: LinkState) -> LinkState:
        link = self.link(link_id)
        prev = link.state
        if prev is not state:
            link.state = state
            self.revision += 1
        return prev

    def add_segment(self, seg: Segment) -> None:
        if seg.vlan_id in self.segments:
            raise DuplicateId(f"vlan {seg.vlan_id} already exists")
        self.segments[seg.vlan_id] = seg
        for p in seg.member_ports:
            self._assign(p, seg.vlan_id)
        self.revision += 1

    def _assign(self, port: tuple[int, int], vlan: int) -> None:
        old = self._port_segment.get(port)
        if old is not None and old != vlan:
            self.segments[old].member_ports.discard(port)
        self._port_segment[port] = vlan
        self.segments[vlan].member_ports.add(port)

    def assign_port_segment(self, node: int, port: int, vlan: int) -> int | None:
        if vlan not in self.segments:
            raise UnknownEndpoint(f"unknown vlan {vlan}")
        prev = self._port_segment.get((node, port))
        self._assign((node, port), vlan)
        self.revision += 1
        return prev

    # --- queries --------------------------------------------------------

    def node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownEndpoint(f"unknown node {node_id}") from None

    def link(self, link_id: int) -> Link:
        try:
            return self.links[link_id]
        except KeyError:
            raise UnknownLink(f"unknown link {link_id}") from None

    def link_at(self, node: int, port: int) -> Link | None:
        lid = self._port_link.get((node, port))
        return None if lid is None else self.links[lid]

    def segment_of_port(self, node: int, port: int) -> int | None:
        return self._port_segment.get((node, port))

    def incident(self, node: int) -> Iterator[Link]:
        if node not in self.nodes:  # not plugged in (yet)
            return
        for port in self.nodes[node].ports:
            lid = self._port_link.get((node, port))
            if lid is not None:
                yield self.links[lid]

    def attachment(self, host: int) -> tuple[int, int] | None:
        """(switch, port) the host's Up link plugs into, if any."""
        for link in self.incident(host):
            if link.up:
                return link.other(host)
        return None

    def host_segment(self, host: int) -> int | None:
        att = self.attachment(host)
        return None if att is None else self.segment_of_port(*att)

    def switches(self, kind: NodeKind | None = None) -> list[int]:
        return sorted(n.id for n in self.nodes.values()
                      if n.is_switch and (kind is None or n.kind is kind))

    def hosts(self) -> list[int]:
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.HOST)

    def _transit_ok(self, node_id: int, allowed: set[int] | None) -> bool:
        node = self.nodes[node_id]
        if not node.is_switch:
            return False
        return allowed is None or node_id in allowed

    def neighbours(self, node: int) -> Iterator[tuple[Link, int]]:
        for link in self.incident(node):
            if link.up:
                yield link, link.other(node)[0]

    def shortest_feasible_path(
        self,
        src: int,
        dst: int,
        demand: int = 0,
        residual: Callable[[int], int] | None = None,
        allowed: set[int] | None = None,
    ) -> Path:
        """Minimum-latency path over Up links with residual bandwidth >= demand.

        Ties go to the lexicographically smallest node-id sequence, then link ids.
        Only switches (restricted to ``allowed`` when given) may be transit nodes.
        """
        if src == dst:
            raise ValueError("src and dst must differ")
        self.node(src)
        self.node(dst)
        resid = residual or (lambda lid: self.links[lid].bandwidth)
        best: dict[int, tuple] = {}
        heap = [(0, (src,), ())]
        while heap:
            dist, nodes, links = heapq.heappop(heap)
            u = nodes[-1]
            if u in best:
                continue
            best[u] = (dist, nodes, links)
            if u == dst:
                return Path(nodes, links, dist)
            if u != src and not self._transit_ok(u, allowed):
                continue
            for link, v in self.neighbours(u):
                if v in best or v in nodes:
                    continue
                if resid(link.id) < demand:
                    continue
                heapq.heappush(heap, (dist + link.latency, nodes + (v,), links + (link.id,)))
        raise NoFeasiblePath(f"no path {src}->{dst} with {demand} kbit/s")

    def simple_paths(
        self,
        src: int,
        dst: int,
        demand: int = 0,
        residual: Callable[[int], int] | None = None,
        allowed: set[int] | None = None,
    ) -> Iterator[Path]:
        """Feasible simple paths in nondecreasing (latency, nodes, links) order."""
        resid = residual or (lambda lid: self.links[lid].bandwidth)
        heap = [(0, (src,), ())]
        while heap:
            dist, nodes, links = heapq.heappop(heap)
            u = nodes[-1]
            if u == dst:
                yield Path(nodes, links, dist)
                continue
            if u != src and not self._transit_ok(u, allowed):
                continue
            for link, v in self.neighbours(u):
                if v in nodes or resid(link.id) < demand:
                    continue
                heapq.heappush(heap, (dist + link.latency, nodes + (v,), links + (link.id,)))

    def disjoint_path_count(self, a: int, b: int) -> int:
        """Number of pairwise link-disjoint paths between a and b over Up links."""
        if a == b:
            raise ValueError("endpoints must differ")
        # undirected unit-capacity max flow; residual capacity per (link, direction)
        flow: dict[tuple[int, int], int] = {}
        count = 0
        while True:
            parent: dict[int, tuple[int, int]] = {a: (a, -1)}
            q = deque([a])
            while q and b not in parent:
                u = q.popleft()
                for link, v in self.neighbours(u):
                    if v in parent:
                        continue
                    # capacity 1 each way; pushing u->v uses up (link, u) or cancels (link, v)
                    if flow.get((link.id, u), 0) - flow.get((link.id, v), 0) < 1:
                        parent[v] = (u, link.id)
                        q.append(v)
            if b not in parent:
                return count
            v = b
            while v != a:
                u, lid = parent[v]
                if flow.get((lid, v), 0) > 0:
                    flow[(lid, v)] -= 1
                else:
                    flow[(lid, u)] = flow.get((lid, u), 0) + 1
                v = u
            count += 1

    def connected_within(self, node_ids: Iterable[int]) -> bool:
        ids = set(node_ids)
        if not ids:
            return True
        start = min(ids)
        seen = {start}
        q = deque([start])
        while q:
            u = q.popleft()
            for link in self.incident(u):
                v = link.other(u)[0]
                if v in ids and v not in seen:
                    seen.add(v)
                    q.append(v)
        return seen == ids
