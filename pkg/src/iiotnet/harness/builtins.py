"""Scenario files shipped with the package."""

from __future__ import annotations

from importlib import resources

from .scenario import Scenario, parse_scenario

# The three industrial use cases; the remaining bundled files exercise single mechanisms.
BUILTINS = ("inspection-camera", "external-access", "autonomous-transport")


def _dir():
    return resources.files(__package__).joinpath("scenarios")


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".yaml"))


def list_builtins() -> list[str]:
    return list(BUILTINS)


def scenario_text(name: str) -> str:
    if name not in bundled_names():
        raise KeyError(f"no bundled scenario named {name!r}")
    return _dir().joinpath(f"{name}.yaml").read_text()


def load_bundled(name: str) -> Scenario:
    return parse_scenario(scenario_text(name), f"{name}.yaml")


def builtin_scenarios() -> list[Scenario]:
    return [load_bundled(n) for n in BUILTINS]
