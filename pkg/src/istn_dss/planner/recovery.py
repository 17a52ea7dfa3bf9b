"""Turning relaxed SCA powers into a structurally valid allocation."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..grid import BwpPlan, GridConfig, SERVICES, check_bwp_feasible
from ..phy import AllocationState, PhyParams, d_rates, scale_to_budgets
from ..queueing import SteeringWeights, TrafficTrace, steer_arrivals
from ..sca import recover_binaries


def _keep_max(arr: np.ndarray, axis: int) -> np.ndarray:
    """Zero everything but the largest entry along ``axis`` (lowest index on ties)."""
    if arr.shape[axis] <= 1:
        return arr
    idx = np.expand_dims(np.argmax(arr, axis=axis), axis)
    mask = np.zeros(arr.shape, dtype=bool)
    np.put_along_axis(mask, idx, True, axis=axis)
    return np.where(mask, arr, 0.0)


def repair_conflicts(al: AllocationState) -> AllocationState:
    """Enforce one UE per server-RB and one server per UE-RB, keeping the stronger link."""
    out = al.copy()
    out.p_d = _keep_max(_keep_max(out.p_d, 1), 0)   # C5 then C6
    out.p_m = _keep_max(out.p_m, 1)                 # C5
    out.p0_m = _keep_max(out.p0_m, 0)               # C8
    out.p0_s = _keep_max(out.p0_s, 0)
    # C9: terrestrial vs satellite per (k, v, n)
    if out.p_m.size:
        tn_best = out.p_m.max(axis=0)
        out.p_m = _keep_max(out.p_m, 0)
        sat_wins = out.p0_m > tn_best
        out.p_m = np.where(sat_wins[None], 0.0, out.p_m)
        out.p0_m = np.where(sat_wins, out.p0_m, 0.0)
    _sync_assoc(out)
    return out


def _sync_assoc(al: AllocationState) -> None:
    al.a_d, al.a_m = al.p_d > 0, al.p_m > 0
    al.b_m, al.b_s = al.p0_m > 0, al.p0_s > 0


def support_bwp(al: AllocationState, grid: GridConfig) -> BwpPlan:
    """Subchannels that carry any power."""
    return BwpPlan({x: _subchannel_power(al, x) > 0 for x in SERVICES})


def _subchannel_power(al: AllocationState, x: str) -> np.ndarray:
    if x == "D":
        return al.p_d.sum(axis=(0, 1, 3))
    if x == "M":
        return al.p_m.sum(axis=(0, 1, 3)) + al.p0_m.sum(axis=(0, 2))
    return al.p0_s.sum(axis=(0, 2))


def repair_bwp(plan: BwpPlan, al: AllocationState, grid: GridConfig) -> BwpPlan:
    """Deactivate low-power subchannels until the plan passes C1-C3."""
    plan = plan.copy()
    ok, msgs = check_bwp_feasible(plan, grid)
    while not ok:
        best = None
        for x in SERVICES:
            pw = _subchannel_power(al, x)
            for v in np.flatnonzero(plan.active[x]):
                trial = plan.copy()
                trial.active[x][v] = False
                n = len(check_bwp_feasible(trial, grid)[1])
                if n < len(msgs):
                    key = (pw[v], x, v)
                    if best is None or key < best[0]:
                        best = (key, trial)
        if best is None:  # cannot happen: emptying the plan is always feasible
            raise RuntimeError("bandwidth-part repair made no progress")
        plan = best[1]
        ok, msgs = check_bwp_feasible(plan, grid)
    return plan


def gate_to_bwp(al: AllocationState, plan: BwpPlan) -> AllocationState:
    out = al.copy()
    out.bwp = plan.copy()
    out.p_d = out.p_d * plan.active["D"][None, None, :, None]
    out.p_m = out.p_m * plan.active["M"][None, None, :, None]
    out.p0_m = out.p0_m * plan.active["M"][None, :, None]
    out.p0_s = out.p0_s * plan.active["S"][None, :, None]
    _sync_assoc(out)
    return out


def gate_to_downlink(al: AllocationState, grid: GridConfig) -> AllocationState:
    out = al.copy()
    out.p_d = out.p_d * grid.tn_dl_mask("D")
    out.p_m = out.p_m * grid.tn_dl_mask("M")
    _sync_assoc(out)
    return out


def recover_allocation(
    relaxed: AllocationState,
    steering: SteeringWeights,
    traffic: TrafficTrace,
    chans,
    grid: GridConfig,
    phy: PhyParams,
    threshold: float,
    bwp: Optional[BwpPlan] = None,
) -> AllocationState:
    """Threshold, repair conflicts, settle the bandwidth parts and fit budgets.

    D links below the threshold are kept (lifted to the threshold) for any
    (AP, UE, subframe) whose requirement would fail without them.
    """
    al = relaxed.copy()
    for pf, af in (("p_d", "a_d"), ("p_m", "a_m"), ("p0_m", "b_m"), ("p0_s", "b_s")):
        assoc, p = recover_binaries(getattr(al, pf), threshold)
        setattr(al, pf, p)
        setattr(al, af, assoc)
    weak = (relaxed.p_d > 0) & (relaxed.p_d < threshold)
    if weak.any():
        lam = steer_arrivals(traffic, steering).d
        rate, _ = d_rates(al, chans, grid, phy)
        short = grid.rb_duration("D") * rate < lam * (1 - 1e-9)
        if short.any():
            nrb = grid.rbs_per_subframe("D")
            sf = np.arange(al.p_d.shape[3]) // nrb
            need = short[:, :, None, sf] & weak
            al.p_d = np.where(need, threshold, al.p_d)
            al.a_d = al.p_d > 0
    al = gate_to_downlink(al, grid)
    al = repair_conflicts(al)
    plan = bwp if bwp is not None else repair_bwp(support_bwp(al, grid), al, grid)
    al = gate_to_bwp(al, plan)
    al = scale_to_budgets(al, grid, phy)
    _sync_assoc(al)
    return al
