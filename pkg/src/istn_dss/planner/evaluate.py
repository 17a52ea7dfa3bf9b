"""Replay an allocation through the rate and queue models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..grid import GridConfig
from ..phy import AllocationState, PhyParams, ServiceRates, evaluate_rates
from ..queueing import (
    QueueHistory,
    QueueState,
    SteeringWeights,
    TrafficTrace,
    cap_violations,
    d_latency_check,
    objective,
    replay_queues,
    steer_arrivals,
)


@dataclass
class Evaluation:
    rates: ServiceRates
    history: QueueHistory
    objective: float          # mean system queue per RB-time, bits
    d_ok: np.ndarray          # (L, K_D, N_SF)
    d_unserved: float         # bits
    d_total: float            # bits
    d_sinr_ok: bool
    caps: Dict[str, int]

    @property
    def d_unserved_fraction(self) -> float:
        return self.d_unserved / self.d_total if self.d_total > 0 else 0.0


def evaluate(
    alloc: AllocationState,
    steering: SteeringWeights,
    chans,
    traffic: TrafficTrace,
    q0: QueueState,
    grid: GridConfig,
    phy: PhyParams,
    caps: Optional[Dict[str, float]] = None,
    isyi_scale: float = 1.0,
) -> Evaluation:
    rates = evaluate_rates(alloc, chans, grid, phy, isyi_scale)
    arr = steer_arrivals(traffic, steering)
    tn, sm, s = rates.served_bits(grid)
    hist = replay_queues(q0, arr, tn, sm, s, grid)
    ok, unserved, _ = d_latency_check(arr.d, rates.d, grid)
    viol = cap_violations(hist, caps) if caps else {}
    return Evaluation(
        rates, hist, objective(hist), ok, float(unserved.sum()), float(arr.d.sum()),
        bool(rates.d_sinr_ok.all()), viol,
    )


def steering_from_rates(rates: ServiceRates, floor: float = 1e-9) -> SteeringWeights:
    """Steering proportional to per-node cycle rates, floored to avoid 0/0."""
    d = np.maximum(rates.d.sum(axis=2), floor)            # (L, K_D)
    omega_d = d / d.sum(axis=0, keepdims=True) if d.size else d
    tn = np.maximum(rates.m_tn.sum(axis=2), floor)        # (L, K_M)
    sat = np.maximum(rates.m_sat.sum(axis=1), floor)      # (K_M,)
    tot = tn.sum(axis=0) + sat
    omega_m = tn / tot[None, :] if tn.size else tn
    return SteeringWeights(omega_d, omega_m)
