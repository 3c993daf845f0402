"""Scenario loading, simulation runs, traces and the command line."""

from .runner import MODES, RunResult, run_scenario
from .scenario import CONFIG_ENV, Scenario, ScenarioError, find_scenario, load, validate

__all__ = [
    "MODES",
    "RunResult",
    "run_scenario",
    "CONFIG_ENV",
    "Scenario",
    "ScenarioError",
    "find_scenario",
    "load",
    "validate",
]
