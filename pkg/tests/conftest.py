from __future__ import annotations

import functools
import textwrap

import pytest
from hypothesis import settings

from iiotnet.harness.builtins import load_bundled
from iiotnet.harness.scenario import parse_scenario, validate_scenario
from iiotnet.harness.verify import verify
from iiotnet.network import simulate

# simulation-backed properties have uneven run times; no per-example deadline
settings.register_profile("repo", deadline=None)
settings.load_profile("repo")


@functools.lru_cache(maxsize=None)
def bundled_run(name: str):
    """(scenario, trace, verdicts) for a bundled scenario at its own seed; cached per session."""
    sc = load_bundled(name)
    trace = simulate(sc)
    return sc, trace, verify(trace, sc)


def scenario_from(text: str):
    sc = parse_scenario(textwrap.dedent(text))
    problems = validate_scenario(sc)
    assert not problems, problems
    return sc


def verdict(verdicts, dr: int):
    return next(v for v in verdicts if v.dr == dr)


# Two switches, one segment, two statically authenticated hosts.
PAIR = """
format_version: 1
name: pair
duration_us: {duration}
seed: 3
nodes:
  - {{id: 1, kind: sdn_switch, ports: [1, 2, 3]}}
  - {{id: 2, kind: sdn_switch, ports: [1, 2, 3]}}
  - {{id: 10, kind: host, ports: [1]}}
  - {{id: 11, kind: host, ports: [1]}}
links:
  - {{id: 1, a: [1, 1], b: [2, 1], latency: 10, bandwidth: 100000}}
  - {{id: 2, a: [10, 1], b: [1, 2], latency: 2, bandwidth: 100000}}
  - {{id: 3, a: [11, 1], b: [2, 2], latency: 2, bandwidth: 100000}}
segments:
  - {{vlan: 20, name: cell, ports: [[1, 2], [2, 2]]}}
controllers:
  - {{id: 1, level: facility, scope: [1, 2]}}
policy:
  roles: {{cell: [20]}}
  principals:
    - {{id: a, kind: service, roles: [cell], credential: ka, host: 10, segment: 20, auth: static}}
    - {{id: b, kind: service, roles: [cell], credential: kb, host: 11, segment: 20, auth: static}}
flows:
  - {{id: 1, src: 10, dst: 11, class: guaranteed, size: 500, period_us: 1000, start_us: 1000,
     demand_kbps: 4000, latency_bound_us: 500}}
"""


@pytest.fixture
def pair_scenario():
    return scenario_from(PAIR.format(duration=50_000))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
