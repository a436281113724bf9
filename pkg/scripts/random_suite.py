"""Run generated scenarios over a seed range and tally verdicts per DR.

    python scripts/random_suite.py --start 0 --count 500

Seeds with any failing verdict are listed so they can be replayed with
``iiotnet generate --seed N > s.yaml && iiotnet run s.yaml``.
"""

from __future__ import annotations

import argparse
from collections import Counter

from iiotnet.harness.generate import random_scenario
from iiotnet.harness.verify import Status, verify
from iiotnet.network import simulate


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--count", type=int, default=100)
    args = ap.parse_args(argv)

    tally: dict[int, Counter] = {d: Counter() for d in range(1, 12)}
    failing: list[tuple[int, list[int]]] = []
    for seed in range(args.start, args.start + args.count):
        sc = random_scenario(seed)
        verdicts = verify(simulate(sc), sc)
        for v in verdicts:
            tally[v.dr][v.status] += 1
        bad = [v.dr for v in verdicts if v.status is Status.FAIL]
        if bad:
            failing.append((seed, bad))

    for d, c in tally.items():
        print(f"DR{d:<3} pass {c[Status.PASS]:>5}  fail {c[Status.FAIL]:>5}  n/a {c[Status.NOT_APPLICABLE]:>5}")
    for seed, drs in failing:
        print(f"seed {seed}: fails DR{', DR'.join(map(str, drs))}")
    return 1 if failing else 0


if __name__ == "__main__":
    raise SystemExit(main())
