"""Bandwidth reservation ledger, admission control and constrained path choice."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Iterable

from .dataplane import TrafficClass
from .topology import NoFeasiblePath, Path, Topology

if TYPE_CHECKING:
    from .controlplane import FlowIntent

MAX_FRAME_BYTES = 1500


class UnknownReservation(Exception):
    pass


class OverSubscribed(Exception):
    pass


@dataclass(frozen=True)
class Reservation:
    handle: int
    links: tuple[int, ...]
    demand: int
    traffic_class: TrafficClass
    latency_budget: int | None = None


@dataclass(frozen=True)
class Accepted:
    path: Path
    reservation: Reservation | None
    worst_case_us: int | None = None


@dataclass(frozen=True)
class Rejected:
    reason: str  # no-bandwidth | latency-bound | no-path

    def __bool__(self):
        return False


class ReservationLedger:
    """Per-link reserved bandwidth (undirected, fluid model)."""

    def __init__(self, topo: Topology):
        self.topo = topo
        self.reserved: dict[int, int] = {}
        self.active: dict[int, Reservation] = {}
        self._handles = itertools.count(1)

    def new_handle(self) -> int:
        return next(self._handles)

    def residual(self, link_id: int) -> int:
        return self.topo.links[link_id].bandwidth - self.reserved.get(link_id, 0)

    def _usage(self, res: Reservation) -> dict[int, int]:
        use: dict[int, int] = {}
        for lid in res.links:
            use[lid] = use.get(lid, 0) + res.demand
        return use

    def fits(self, links: Iterable[int], demand: int, freeing: Reservation | None = None) -> bool:
        use: dict[int, int] = {}
        for lid in links:
            use[lid] = use.get(lid, 0) + demand
        back = self._usage(freeing) if freeing else {}
        return all(self.residual(l) + back.get(l, 0) >= u for l, u in use.items())

    def reserve(self, res: Reservation) -> None:
        if res.handle in self.active:
            raise ValueError(f"reservation {res.handle} already active")
        if not self.fits(res.links, res.demand):
            raise OverSubscribed(f"reservation {res.handle} exceeds residual bandwidth")
        for lid, u in self._usage(res).items():
            self.reserved[lid] = self.reserved.get(lid, 0) + u
        self.active[res.handle] = res

    def release(self, res: Reservation) -> None:
        if self.active.get(res.handle) != res:
            raise UnknownReservation(f"reservation {res.handle} is not active")
        for lid, u in self._usage(res).items():
            self.reserved[lid] -= u
            if not self.reserved[lid]:
                del self.reserved[lid]
        del self.active[res.handle]

    def move(self, old: Reservation, new: Reservation) -> None:
        """Swap one reservation for another without a transient over-subscription."""
        if not self.fits(new.links, new.demand, freeing=old):
            raise OverSubscribed(f"reservation {new.handle} does not fit after move")
        self.release(old)
        self.reserve(new)

    def snapshot(self) -> dict[int, int]:
        return dict(sorted(self.reserved.items()))


def worst_case_latency(topo: Topology, links: Iterable[int], max_frame: int = MAX_FRAME_BYTES,
                       packet_size: int = 0) -> int:
    """Propagation + one max-frame blocking + jitter bound (+ own frame) per hop."""
    total = 0
    for lid in links:
        link = topo.links[lid]
        total += link.latency + link.serialization_us(max_frame) + link.jitter_bound
        if packet_size:
            total += link.serialization_us(packet_size)
    return total


def _bounded_search(topo: Topology, src: int, dst: int, demand: int,
                    residual: Callable[[int], int], allowed: set[int] | None,
                    hop_cost: Callable[[int], int], budget: int) -> Path | None:
    """Min-latency simple path whose summed hop cost stays within budget."""
    heap = [(0, (src,), (), 0)]
    while heap:
        dist, nodes, links, cost = heapq.heappop(heap)
        u = nodes[-1]
        if u == dst:
            return Path(nodes, links, dist)
        if u != src and not topo._transit_ok(u, allowed):
            continue
        for link, v in topo.neighbours(u):
            if v in nodes or residual(link.id) < demand:
                continue
            c = cost + hop_cost(link.id)
            if c > budget:
                continue
            heapq.heappush(heap, (dist + link.latency, nodes + (v,), links + (link.id,), c))
    return None


def admit(
    intent: "FlowIntent",
    topo: Topology,
    ledger: ReservationLedger,
    *,
    max_frame: int = MAX_FRAME_BYTES,
    allowed: set[int] | None = None,
    waypoints: tuple[int, ...] = (),
    extra_delay: int = 0,
    replacing: Reservation | None = None,
    candidate: Path | None = None,
    handle: int | None = None,
) -> Accepted | Rejected:
    """Admission decision for an authorized intent.

    BestEffort is always accepted on the current shortest path without a
    reservation.  Guaranteed needs residual bandwidth on every hop.
    TimeCritical additionally needs the worst-case latency (see
    :func:`worst_case_latency`) plus ``extra_delay`` within its bound.
    ``replacing`` is an existing reservation of the same flow whose bandwidth
    counts as available (reroutes).  ``candidate`` checks one given path
    instead of searching.
    """
    cls = intent.traffic_class
    demand = 0 if cls is TrafficClass.BEST_EFFORT else intent.demand
    back: dict[int, int] = {}
    if replacing is not None:
        for lid in replacing.links:
            back[lid] = back.get(lid, 0) + replacing.demand

    def residual(lid: int) -> int:
        return ledger.residual(lid) + back.get(lid, 0)

    size = getattr(intent, "packet_size", 0) or 0
    tc = cls is TrafficClass.TIME_CRITICAL
    hop_cost = lambda lid: worst_case_latency(topo, (lid,), max_frame, size)  # noqa: E731
    budget = (intent.latency_bound - extra_delay) if tc else None

    legs_ends = (intent.src, *waypoints, intent.dst)
    if candidate is not None:
        path = candidate
        if any(not topo.links[l].up for l in path.links):
            return Rejected("no-path")
    else:
        path = None
        legs = []
        for a, b in zip(legs_ends, legs_ends[1:]):
            leg = None
            if tc and not waypoints:
                leg = _bounded_search(topo, a, b, demand, residual, allowed, hop_cost, budget)
            else:
                try:
                    leg = topo.shortest_feasible_path(a, b, demand, residual, allowed)
                except NoFeasiblePath:
                    leg = None
            if leg is None:
                return _diagnose(topo, intent, legs_ends, demand, residual, allowed, tc)
            legs.append(leg)
        path = legs[0]
        for leg in legs[1:]:
            path = path.concat(leg)

    if demand:
        use: dict[int, int] = {}
        for lid in path.links:
            use[lid] = use.get(lid, 0) + demand
        if any(residual(l) < u for l, u in use.items()):
            return Rejected("no-bandwidth")
    worst = None
    if tc:
        worst = worst_case_latency(topo, path.links, max_frame, size) + extra_delay
        if worst > intent.latency_bound:
            return Rejected("latency-bound")
    res = None
    if demand:
        res = Reservation(handle if handle is not None else ledger.new_handle(),
                          path.links, demand, cls, intent.latency_bound if tc else None)
    return Accepted(path, res, worst)


def _diagnose(topo, intent, ends, demand, residual, allowed, tc) -> Rejected:
    def reachable(d):
        for a, b in zip(ends, ends[1:]):
            try:
                topo.shortest_feasible_path(a, b, d, residual, allowed)
            except NoFeasiblePath:
                return False
        return True

    if reachable(demand):
        # only a latency budget can reject a path that exists at this demand
        return Rejected("latency-bound" if tc else "no-path")
    if demand and reachable(0):
        return Rejected("no-bandwidth")
    return Rejected("no-path")


def release(ledger: ReservationLedger, reservation: Reservation) -> None:
    ledger.release(reservation)
