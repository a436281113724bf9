"""Command-line entry point: run, validate and list scenarios."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .harness.builtins import bundled_names, list_builtins, load_bundled, scenario_text
from .harness.generate import random_scenario
from .harness.scenario import (Diagnostic, ScenarioError, dump_scenario, load_scenario, parse_scenario,
                               validate_scenario)
from .harness.verify import Status, all_pass, build_report, dumps_report, verify
from .network import simulate

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


@dataclasses.dataclass
class RunConfig:
    scenario_path: str | None = None
    builtin: str | None = None
    seed: int | None = None
    until: int | None = None
    trace_out: str | None = None
    report_out: str | None = None
    quiet: bool = False

    def __post_init__(self):
        if (self.scenario_path is None) == (self.builtin is None):
            raise ValueError("give exactly one of a scenario path or a built-in name")


def _resolve(target: str) -> RunConfig:
    if Path(target).is_file():
        return RunConfig(scenario_path=target)
    if target in bundled_names():
        return RunConfig(builtin=target)
    raise FileNotFoundError(f"{target}: no such file or bundled scenario")


def _load(cfg: RunConfig):
    if cfg.builtin is not None:
        sc = load_bundled(cfg.builtin)
        problems = validate_scenario(sc)
        if problems:
            raise ScenarioError(problems)
        return sc
    return load_scenario(cfg.scenario_path)


def run(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    try:
        sc = _load(cfg)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_ERROR
    if cfg.until is not None:
        sc = dataclasses.replace(sc, duration_us=cfg.until)
    seed = sc.seed if cfg.seed is None else cfg.seed
    trace = simulate(sc, seed=seed)
    verdicts = verify(trace, sc)
    report = build_report(sc, verdicts, seed)
    trace_out = Path(cfg.trace_out or f"{sc.name}.trace")
    report_out = Path(cfg.report_out or f"{sc.name}.report.json")
    for p in (trace_out, report_out):
        p.parent.mkdir(parents=True, exist_ok=True)
    trace_out.write_text(trace.dumps())
    report_out.write_text(dumps_report(report))
    if not cfg.quiet:
        print(f"{sc.name} seed={seed} records={len(trace)}", file=out)
        for v in verdicts:
            print(f"  DR{v.dr:<3} {v.status.value:<15} {v.detail}", file=out)
            if v.status is Status.FAIL:
                for i in v.evidence[:5]:
                    print(f"        #{i} {trace[i].to_line()}", file=out)
        print(f"  trace  -> {trace_out}\n  report -> {report_out}", file=out)
    return EXIT_OK if all_pass(verdicts) else EXIT_FAIL


def _run_named(args: tuple) -> tuple[str, int]:
    name, seed, until, out_dir, quiet = args
    cfg = RunConfig(builtin=name, seed=seed, until=until, quiet=quiet,
                    trace_out=str(Path(out_dir) / f"{name}.trace"),
                    report_out=str(Path(out_dir) / f"{name}.report.json"))
    return name, run(cfg)


def validate(path: str) -> list[Diagnostic]:
    """Full static check of a scenario file; parse failures come back as diagnostics too."""
    try:
        sc = parse_scenario(Path(path).read_text(), path)
    except ScenarioError as exc:
        return list(exc.diagnostics)
    return validate_scenario(sc)


def _cmd_run(ns) -> int:
    if ns.all:
        jobs = [(n, ns.seed, ns.until, ns.out_dir, ns.quiet) for n in bundled_names()]
        if ns.jobs > 1:
            with ProcessPoolExecutor(ns.jobs) as pool:
                results = list(pool.map(_run_named, jobs))
        else:
            results = [_run_named(j) for j in jobs]
        worst = max(code for _, code in results)
        for name, code in results:
            print(f"{name}: {('pass', 'error', 'FAIL')[code]}")
        return worst
    if ns.scenario is None:
        print("error: give a scenario file or bundled name, or --all", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = _resolve(ns.scenario)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    cfg = dataclasses.replace(cfg, seed=ns.seed, until=ns.until, trace_out=ns.trace_out,
                              report_out=ns.report_out, quiet=ns.quiet)
    return run(cfg)


def _cmd_validate(ns) -> int:
    code = EXIT_OK
    for path in ns.files:
        if not Path(path).is_file():
            print(f"{path}: no such file", file=sys.stderr)
            code = EXIT_ERROR
            continue
        diags = validate(path)
        for d in diags:
            print(f"{path}: {d}")
        if diags:
            code = EXIT_ERROR
        elif not ns.quiet:
            print(f"{path}: ok")
    return code


def _cmd_list(ns) -> int:
    for name in (bundled_names() if ns.all else list_builtins()):
        print(name)
    return EXIT_OK


def _cmd_show(ns) -> int:
    try:
        sys.stdout.write(scenario_text(ns.name))
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def _cmd_generate(ns) -> int:
    sys.stdout.write(dump_scenario(random_scenario(ns.seed)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iiotnet", description="Simulate and verify segmented SDN/NFV plant networks.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and verify the trace")
    r.add_argument("scenario", nargs="?", help="scenario file or bundled scenario name")
    r.add_argument("--all", action="store_true", help="run every bundled scenario")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--until", type=int, help="override the scenario duration (microseconds)")
    r.add_argument("--trace-out", help="trace file (default <name>.trace)")
    r.add_argument("--report-out", help="report file (default <name>.report.json)")
    r.add_argument("--out-dir", default="runs", help="output directory for --all")
    r.add_argument("--jobs", type=int, default=1, help="parallel runs for --all")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="static checks without running")
    v.add_argument("files", nargs="+")
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=_cmd_validate)

    ls = sub.add_parser("list", help="list the built-in use-case scenarios")
    ls.add_argument("--all", action="store_true", help="include every bundled scenario")
    ls.set_defaults(func=_cmd_list)

    sh = sub.add_parser("show", help="print a bundled scenario file")
    sh.add_argument("name")
    sh.set_defaults(func=_cmd_show)

    g = sub.add_parser("generate", help="print a random isolation scenario")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_generate)
    return p


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
