"""Scenarios, the simulation loop, sweeps and the command line."""

from .experiments import sweep, validate_decision_files, validate_runs
from .run import ALGORITHMS, CycleRecord, RunReport, mixed_channels, replay, rt_refine, run, run_many
from .scenario import Scenario, World, build_world, list_configs, load_scenario, scenario_from_dict

__all__ = [
    "ALGORITHMS", "CycleRecord", "RunReport", "Scenario", "World", "build_world", "list_configs",
    "load_scenario", "mixed_channels", "replay", "rt_refine", "run", "run_many", "scenario_from_dict",
    "sweep", "validate_decision_files", "validate_runs",
]
