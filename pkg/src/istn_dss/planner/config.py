"""Planner configuration and per-cycle decision records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

from ..phy import AllocationState
from ..queueing import SteeringWeights
from ..grid import BwpPlan


@dataclass(frozen=True)
class PlannerConfig:
    """Tunables shared by all planners.

    ``sca_tol`` is the relative objective change that stops an SCA loop,
    ``kappa`` inflates cross-system interference during refinement and
    ``n_sc_d`` fixes the D subchannel count of the greedy-style benchmarks.
    """

    sca_tol: float = 1e-4
    max_sca_iters: int = 60
    max_refine_iters: int = 60
    kappa: float = 1.1
    n_sc_d: int = 1
    eps_pow: float = 1e-9
    epsilon: float = 1e-4
    solver_tol: float = 1e-7
    penalty: float = 1e3
    init_power_fraction: float = 0.1

    def __post_init__(self):
        if self.sca_tol <= 0:
            raise ValueError("sca_tol must be positive")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.max_sca_iters < 1 or self.max_refine_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.n_sc_d < 0:
            raise ValueError("n_sc_d must be nonnegative")


@dataclass
class CycleDecision:
    bwp: BwpPlan
    steering: SteeringWeights
    alloc: AllocationState
    algorithm: str = ""
    trace: List[float] = field(default_factory=list)
    statuses: List[str] = field(default_factory=list)
    iterations: int = 0
    info: Dict[str, object] = field(default_factory=dict)
