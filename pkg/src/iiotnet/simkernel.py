"""Deterministic discrete-event engine.

Simulated time is an integer count of microseconds.  Events are processed
strictly by due time and then by insertion order, and every component writes
its observations to a single append-only trace.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import io
import json
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

SimTime = int

TRACE_FORMAT_VERSION = 1


class SimError(Exception):
    pass


class PastDue(SimError):
    pass


class InvalidRange(SimError):
    pass


class EventKind(enum.Enum):
    PACKET_ARRIVAL = "packet-arrival"
    PACKET_DEPARTURE = "packet-departure"
    LINK_FAILURE = "link-failure"
    LINK_REPAIR = "link-repair"
    DEVICE_PLUG_IN = "device-plug-in"
    CONTROLLER_TIMEOUT = "controller-timeout"
    TAMPER_INJECTION = "tamper-injection"
    SCENARIO_ACTION = "scenario-action"
    # control-channel messages and timers
    CONTROL = "control"
    TIMER = "timer"


@dataclass
class Event:
    due: SimTime
    kind: EventKind
    action: Callable[[], Any] | None = None
    payload: dict = field(default_factory=dict)
    id: int = 0
    cancelled: bool = False


@dataclass(frozen=True)
class TraceRecord:
    at: SimTime
    emitter: str
    fact: str
    fields: dict

    def get(self, key, default=None):
        return self.fields.get(key, default)

    def __getitem__(self, key):
        return self.fields[key]

    def to_line(self) -> str:
        parts = [str(self.at), self.emitter, self.fact]
        for k, v in self.fields.items():
            parts.append(f"{k}={json.dumps(v, separators=(',', ':'))}")
        return "\t".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "TraceRecord":
        cols = line.rstrip("\n").split("\t")
        if len(cols) < 3:
            raise ValueError(f"malformed trace line: {line!r}")
        fields = {}
        for col in cols[3:]:
            k, _, v = col.partition("=")
            fields[k] = json.loads(v)
        return cls(int(cols[0]), cols[1], cols[2], fields)


class ScenarioTrace:
    """Append-only, time-ordered list of trace records."""

    def __init__(self, records: Iterable[TraceRecord] = (), meta: dict | None = None):
        self.records: list[TraceRecord] = list(records)
        self.meta = dict(meta or {})
        self.final_time: SimTime = self.meta.get("final_time", 0)

    def append(self, rec: TraceRecord) -> int:
        if self.records and rec.at < self.records[-1].at:
            raise SimError(f"trace record at {rec.at} precedes {self.records[-1].at}")
        self.records.append(rec)
        return len(self.records) - 1

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def of(self, *facts: str) -> list[tuple[int, TraceRecord]]:
        wanted = set(facts)
        return [(i, r) for i, r in enumerate(self.records) if r.fact in wanted]

    def dumps(self) -> str:
        buf = io.StringIO()
        meta = dict(self.meta, final_time=self.final_time)
        header = " ".join(f"{k}={json.dumps(meta[k])}" for k in sorted(meta))
        buf.write(f"# iiotnet-trace format_version={TRACE_FORMAT_VERSION} {header}\n")
        for rec in self.records:
            buf.write(rec.to_line())
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "ScenarioTrace":
        meta: dict = {}
        records = []
        for line in text.splitlines():
            if not line:
                continue
            if line.startswith("#"):
                for k, v in re.findall(r"(\w+)=(\S+)", line):
                    if k != "format_version":
                        meta[k] = json.loads(v)
                continue
            records.append(TraceRecord.from_line(line))
        return cls(records, meta)


class Engine:
    """Event queue, clock, seeded counter-based randomness and the trace."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now: SimTime = 0
        self._queue: list[tuple[int, int, Event]] = []
        self._next_id = 1
        self._draws = 0
        self.trace = ScenarioTrace(meta={"seed": seed})

    def schedule(self, event: Event) -> int:
        if event.due < self.now:
            raise PastDue(f"event due at {event.due} but now is {self.now}")
        event.id = self._next_id
        self._next_id += 1
        heapq.heappush(self._queue, (event.due, event.id, event))
        return event.id

    def at(self, due: SimTime, kind: EventKind, action: Callable[[], Any], **payload) -> Event:
        ev = Event(due, kind, action, payload)
        self.schedule(ev)
        return ev

    def after(self, delay: SimTime, kind: EventKind, action: Callable[[], Any], **payload) -> Event:
        return self.at(self.now + delay, kind, action, **payload)

    def cancel(self, event: Event) -> None:
        event.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, e in self._queue if not e.cancelled)

    def run_until(self, end: SimTime) -> ScenarioTrace:
        while self._queue and self._queue[0][0] <= end:
            due, _, ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = due
            if ev.action is not None:
                ev.action()
        self.now = max(self.now, end)
        self.trace.final_time = self.now
        return self.trace

    def rand_uniform(self, lo: int, hi: int) -> int:
        """Draw an integer in ``[lo, hi]`` from (seed, draw counter).

        A degenerate range returns ``lo`` without consuming a draw, so runs that
        differ only in zero-width draws keep identical random streams.
        """
        if lo > hi:
            raise InvalidRange(f"lo={lo} > hi={hi}")
        if lo == hi:
            return lo
        self._draws += 1
        digest = hashlib.blake2b(
            f"{self.seed}:{self._draws}".encode(), digest_size=8
        ).digest()
        return lo + int.from_bytes(digest, "big") % (hi - lo + 1)

    def emit(self, emitter: str, fact: str, **fields) -> int:
        return self.trace.append(TraceRecord(self.now, emitter, fact, fields))
