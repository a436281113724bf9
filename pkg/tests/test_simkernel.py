from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from iiotnet.simkernel import Engine, EventKind, InvalidRange, PastDue, ScenarioTrace, TraceRecord


def test_schedule_returns_increasing_ids_and_fires_at_due():
    eng = Engine()
    seen = []
    ev = eng.at(5000, EventKind.LINK_FAILURE, lambda: seen.append(eng.now))
    assert ev.id == 1
    eng.run_until(10_000)
    assert seen == [5000]


def test_past_due_rejected():
    eng = Engine()
    eng.at(200, EventKind.TIMER, lambda: eng.at(100, EventKind.TIMER, lambda: None))
    with pytest.raises(PastDue):
        eng.run_until(300)


def test_simultaneous_events_run_in_insertion_order():
    eng = Engine()
    order = []
    eng.at(300, EventKind.TIMER, lambda: order.append("A"))
    eng.at(300, EventKind.TIMER, lambda: order.append("B"))
    eng.at(100, EventKind.TIMER, lambda: order.append("first"))
    eng.run_until(1000)
    assert order == ["first", "A", "B"]


@given(st.lists(st.integers(0, 50), min_size=1, max_size=40))
def test_processing_order_is_due_then_insertion(dues):
    eng = Engine()
    fired = []
    for i, d in enumerate(dues):
        eng.at(d, EventKind.TIMER, lambda i=i, d=d: fired.append((d, i)))
    eng.run_until(100)
    assert fired == sorted(fired)


def test_empty_run_fast_forwards():
    eng = Engine()
    trace = eng.run_until(1000)
    assert len(trace) == 0 and trace.final_time == 1000


def test_handler_records_carry_event_time():
    eng = Engine()
    eng.at(10, EventKind.PACKET_ARRIVAL, lambda: eng.emit("h", "packet-delivered", flow=1))
    trace = eng.run_until(100)
    assert [(r.at, r.fact) for r in trace] == [(10, "packet-delivered")]


def test_cancelled_event_does_not_fire():
    eng = Engine()
    fired = []
    ev = eng.at(10, EventKind.TIMER, lambda: fired.append(1))
    eng.cancel(ev)
    assert eng.pending() == 0
    eng.run_until(100)
    assert fired == []


def test_rand_uniform_degenerate_range_does_not_draw():
    a, b = Engine(seed=1), Engine(seed=1)
    assert a.rand_uniform(7, 7) == 7
    assert a.rand_uniform(0, 9) == b.rand_uniform(0, 9)


def test_rand_uniform_invalid_range():
    with pytest.raises(InvalidRange):
        Engine().rand_uniform(3, 2)


def test_rand_uniform_is_reproducible_per_seed():
    assert [Engine(seed=1).rand_uniform(0, 9) for _ in range(2)] == [Engine(seed=1).rand_uniform(0, 9)] * 2


def test_rand_uniform_frequencies_within_three_sigma():
    eng = Engine(seed=42)
    counts = Counter(eng.rand_uniform(0, 9) for _ in range(10_000))
    sigma = (10_000 * 0.1 * 0.9) ** 0.5
    assert set(counts) == set(range(10))
    assert all(abs(c - 1000) <= 3 * sigma for c in counts.values())


def test_trace_rejects_out_of_order_append():
    trace = ScenarioTrace()
    trace.append(TraceRecord(5, "x", "f", {}))
    with pytest.raises(Exception):
        trace.append(TraceRecord(4, "x", "f", {}))


@given(st.dictionaries(st.text(alphabet="abcdefgh_", min_size=1, max_size=6),
                       st.one_of(st.integers(), st.text(max_size=8), st.lists(st.integers(), max_size=3),
                                 st.none(), st.booleans()),
                       max_size=5))
def test_trace_line_round_trip(fields):
    rec = TraceRecord(12, "sw1", "rule-installed", fields)
    assert TraceRecord.from_line(rec.to_line()) == rec


def test_trace_file_round_trip():
    eng = Engine(seed=9)
    eng.at(3, EventKind.TIMER, lambda: eng.emit("a", "fact", x=1, y="two"))
    trace = eng.run_until(50)
    text = trace.dumps()
    assert text.startswith("# iiotnet-trace format_version=1 ")
    back = ScenarioTrace.loads(text)
    assert back.records == trace.records
    assert back.meta["seed"] == 9 and back.final_time == 50
    assert back.dumps() == text
