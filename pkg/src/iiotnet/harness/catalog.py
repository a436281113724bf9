"""Machine-readable IIoT requirements list and its mapping onto the DR checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

LITERATURE = "Literature"
PRACTICE = "Practice"


@dataclass(frozen=True)
class RequirementEntry:
    number: int
    text: str
    source: str
    design_requirements: frozenset[int]

    def __post_init__(self):
        if not 1 <= self.number <= 44:
            raise ValueError(f"requirement number out of range: {self.number}")
        if self.source not in (LITERATURE, PRACTICE):
            raise ValueError(f"unknown source {self.source!r}")
        if not self.design_requirements or not all(1 <= d <= 11 for d in self.design_requirements):
            raise ValueError(f"requirement {self.number}: bad DR set")


_ROWS = (
    (1, 'The system should provide functions that ensure system integrity', 'Literature', (6,)),
    (2, 'The system should provide functions that ensure the integrity of information', 'Literature', (6,)),
    (3, 'The system should be able to detect security breaches', 'Literature', (5,)),
    (4, 'The system should be able to guarantee data confidentiality', 'Literature', (3, 5)),
    (5, 'The system should be able to restrict the data flow', 'Literature', (3,)),
    (6, 'The system should be able to support flexible data provision', 'Literature', (10,)),
    (7, 'The system should be able to compensate for failures of network components', 'Literature', (4,)),
    (8, 'The system should be able to perform network segmentation', 'Literature', (3,)),
    (9, 'The system should support functions for event recording', 'Literature', (11,)),
    (10, 'The system should be able to implement role-based access controls', 'Literature', (5,)),
    (11, 'The system should be able to implement role-based usage controls', 'Literature', (5,)),
    (12, 'The system should support functions for perimeter protection', 'Literature', (10,)),
    (13, 'The system should support remote access (e.g., via VPN) functions', 'Literature', (10,)),
    (14, 'The system should be able to implement different security policies for different network areas', 'Literature', (3, 5)),
    (15, 'The system should be able to implement network protection measures', 'Literature', (3, 4, 5)),
    (16, 'The system should provide high availability for operational technology (OT)', 'Literature', (1, 7)),
    (17, 'The system should provide real-time communication for operational technology (OT) devices', 'Literature', (1,)),
    (18, 'The system should be able to scale and support as many devices as possible', 'Literature', (1, 4, 9)),
    (19, 'The system should be able to implement QoS (quality of service) guidelines', 'Literature', (1,)),
    (20, 'The system should be able to increase network visibility', 'Literature', (10, 11)),
    (21, 'The system should be able to identify and block data flows', 'Literature', (3, 5)),
    (22, 'The system should offer the possibility of providing time-guaranteed communication with a defined pattern', 'Literature', (1,)),
    (23, 'The system should support edge computing for local process processing', 'Literature', (8, 9)),
    (24, 'The system should be able to support deterministic cyclic data communication', 'Literature', (1,)),
    (25, 'The system should be able to separate time-critical from non-time-critical communication', 'Literature', (1, 2)),
    (26, 'The system should be able to support different communication standards', 'Literature', (11,)),
    (27, 'The system should support functions that connect new field devices to the network without human intervention', 'Practice', (8, 9)),
    (28, 'The system should be able to connect to an edge device', 'Practice', (9,)),
    (29, 'The system should be able to establish communication between an edge device and services outside the same zone', 'Practice', (3, 5, 10)),
    (30, 'The system should be able to dynamically provide different users (humans, machines, services) with direct access to the camera', 'Practice', (1, 5)),
    (31, 'The system should be able to transmit camera data in real time', 'Practice', (1,)),
    (32, 'The system should be able to forward image data without hindering time-critical communication', 'Practice', (1, 2)),
    (33, 'The system should be able to allow a dynamic configuration of the camera', 'Practice', (9,)),
    (34, 'The system should be able to provide sufficient data throughput for processing large amounts of data', 'Practice', (1,)),
    (35, 'The system should be able to provide direct access to machine components', 'Practice', (1, 5)),
    (36, 'The system should be able to provide role-based access to different network areas', 'Practice', (5,)),
    (37, 'The system should be able to maintain a communication link between the two end points', 'Practice', (1, 7)),
    (38, 'The system should be able to implement safety relevant guidelines', 'Practice', (3,)),
    (39, 'The system should provide sufficient data throughput for processing large amounts of data', 'Practice', (1,)),
    (40, 'The system should be able to dynamically adapt the communication link', 'Practice', (9,)),
    (41, 'The system should be able to support M2M communication', 'Practice', (9, 11)),
    (42, 'The system should provide functions that allow the location of devices in different network areas', 'Practice', (3, 9)),
    (43, 'The system should be able to allow communication over different network transitions', 'Practice', (3,)),
    (44, 'The system should be able to establish an ad-hoc communication link between production machine and autonomous transport system', 'Practice', (9,)),
)

# What each DR check actually asserts over a trace.
CHECKS: dict[int, str] = {
    1: "per-flow latency, jitter, offered load and loss within declared bounds",
    2: "time-critical p99 stays within the per-hop one-frame blocking bound",
    3: "cross-segment deliveries are firewall-allowed and land in the right segment",
    4: "in-order complete delivery, bounded reroute gap, make-before-break, conservation",
    5: "deliveries only for authorized principals, rules only from the scope owner",
    6: "tampered packets are never delivered and are nacked or reported",
    7: "availability ratio above threshold, no drops across controller failover",
    8: "legacy-region flows delivered across the gateway",
    9: "plug-in to first delivery within the onboarding bound, no manual actions",
    10: "remote-access session reaches only permitted segments via the VPN gateway",
    11: "a runtime-registered app changes the installed path",
}

OUT_OF_SCOPE: dict[int, str] = {
    3: "partially out of scope: only unauthorized flows and tampering are detectable, not general intrusions",
    9: "partially out of scope: event recording is the trace itself; no separate audit store",
    18: "partially out of scope: scaling is exercised at desk scale only (at most 20 nodes)",
    23: "partially out of scope: edge devices are modeled as hosts only, no compute offloading",
    26: "partially out of scope: protocol diversity is reduced to the legacy L2 region and app plug-ins",
    28: "partially out of scope: an edge device is an ordinary host attachment",
    34: "partially out of scope: throughput is checked as offered load within reservation, not bulk capacity",
    39: "partially out of scope: throughput is checked as offered load within reservation, not bulk capacity",
}


def catalog() -> list[RequirementEntry]:
    return [RequirementEntry(n, text, src, frozenset(drs)) for n, text, src, drs in _ROWS]


def _status_of(verdict) -> str:
    status = getattr(verdict, "status", verdict)
    return getattr(status, "value", str(status))


def coverage_report(verdicts: Iterable = ()) -> dict[int, dict]:
    """Map every requirement number to its DR checks and, if given, their verdicts."""
    by_dr = {getattr(v, "dr"): _status_of(v) for v in verdicts}
    report = {}
    for entry in catalog():
        drs = sorted(entry.design_requirements)
        item = {
            "covered_by": [f"DR{d}: {CHECKS[d]}" for d in drs],
            "source": entry.source,
            "note": OUT_OF_SCOPE.get(entry.number),
        }
        if by_dr:
            item["verdicts"] = {f"DR{d}": by_dr.get(d, "missing") for d in drs}
        report[entry.number] = item
    return report
