"""Print a DR-by-scenario verdict table for every bundled scenario.

    python scripts/verdict_table.py
"""

from __future__ import annotations

import time

from iiotnet.harness.builtins import bundled_names, load_bundled
from iiotnet.harness.verify import Status, verify
from iiotnet.network import simulate

MARK = {Status.PASS: "ok", Status.FAIL: "FAIL", Status.NOT_APPLICABLE: "-"}


def main() -> None:
    names = bundled_names()
    width = max(map(len, names))
    print(" " * width + "".join(f"{'DR' + str(d):>6}" for d in range(1, 12)) + "   wall")
    for name in names:
        sc = load_bundled(name)
        t0 = time.perf_counter()
        verdicts = verify(simulate(sc), sc)
        wall = time.perf_counter() - t0
        cells = "".join(f"{MARK[v.status]:>6}" for v in verdicts)
        print(f"{name:<{width}}{cells}  {wall:5.2f}s")


if __name__ == "__main__":
    main()
