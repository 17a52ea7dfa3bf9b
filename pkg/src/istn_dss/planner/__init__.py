"""Cycle planners: joint SCA, per-subframe refinement and benchmarks."""

from .benchmarks import HeuristicMemory, greedy, heuristic, reference
from .config import CycleDecision, PlannerConfig
from .evaluate import Evaluation, evaluate, steering_from_rates
from .joint import dt_joint_ra, fia, refine_subframe, run_sca
from .validator import ValidationReport, check_service, check_structure

__all__ = [
    "CycleDecision", "Evaluation", "HeuristicMemory", "PlannerConfig", "ValidationReport",
    "check_service", "check_structure", "dt_joint_ra", "evaluate", "fia", "greedy", "heuristic",
    "reference", "refine_subframe", "run_sca", "steering_from_rates",
]
