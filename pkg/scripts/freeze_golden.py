"""Record trace/report digests and verdict statuses of the bundled scenarios.

Run after auditing the verdicts by hand; the test suite then guards them:

    python scripts/freeze_golden.py            # rewrite tests/fixtures/golden.json
    python scripts/freeze_golden.py --check    # exit 1 on any drift
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from iiotnet.harness.builtins import bundled_names, load_bundled
from iiotnet.harness.verify import build_report, dumps_report, verify
from iiotnet.network import simulate

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "golden.json"


def digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def snapshot(name: str) -> dict:
    sc = load_bundled(name)
    trace = simulate(sc)
    verdicts = verify(trace, sc)
    return {
        "seed": sc.seed,
        "records": len(trace),
        "trace_sha256": digest(trace.dumps()),
        "report_sha256": digest(dumps_report(build_report(sc, verdicts, sc.seed))),
        "verdicts": {f"DR{v.dr}": v.status.value for v in verdicts},
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="compare instead of writing")
    args = ap.parse_args(argv)
    current = {name: snapshot(name) for name in bundled_names()}
    if args.check:
        frozen = json.loads(GOLDEN.read_text())
        drift = sorted(n for n in current if frozen.get(n) != current[n])
        for n in drift:
            print(f"drift: {n}")
        return 1 if drift else 0
    GOLDEN.write_text(json.dumps(current, indent=2, sort_keys=True) + "\n")
    print(f"wrote {GOLDEN} ({len(current)} scenarios)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
