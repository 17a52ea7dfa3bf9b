"""Starting points for the joint SCA loop.

The tangent surrogate of the association indicator is flat for links that
already carry power and caps idle links sharing a row with them, so the SCA
mostly reshapes power over the support it starts with.  The starting support
is therefore chosen by a small search over ordered bandwidth-part layouts,
each scored with a full-power replay on the planning inputs.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from ..conic.assemble import ExpansionPoint, PlanningInputs, empty_eta
from ..grid import BwpPlan, check_bwp_feasible, max_layout_s
from ..phy import AllocationState, sinr_d, slot_powers
from ..sca import f_apx
from .evaluate import evaluate, steering_from_rates


def home_aps(gain: np.ndarray) -> np.ndarray:
    """Strongest AP per UE from mean gain over subchannels and frames."""
    return gain.mean(axis=(2, 3)).argmax(axis=0)


def layout_candidates(inp: PlanningInputs, n_d_options=None) -> List[Tuple[int, int, int]]:
    g, k = inp.grid, inp.k
    out = []
    if n_d_options is None:
        n_d_options = range(1, g.cap("D") + 1) if k["D"] else [0]
    for n_d in n_d_options:
        for n_m in (range(1, g.cap("M") + 1) if k["M"] else [0]):
            n_s = max_layout_s(g, n_d, n_m) if k["S"] else 0
            if k["S"] and n_s < 1:
                continue
            try:
                plan = BwpPlan.ordered_layout(g, n_d, n_m, n_s)
            except ValueError:
                continue
            if check_bwp_feasible(plan, g)[0]:
                out.append((n_d, n_m, n_s))
    return out


def assign_support(inp: PlanningInputs, bwp: BwpPlan) -> AllocationState:
    """Associations only (unit powers) for a bandwidth-part plan."""
    g, L, k, ch = inp.grid, inp.n_ap, inp.k, inp.chans
    al = AllocationState.zeros(g, L, k, bwp)
    # D: orthogonal round-robin over the home APs, no reuse across APs
    vd = np.flatnonzero(bwp.active["D"])
    if k["D"] and L and vd.size:
        home = home_aps(ch.tn["D"])
        i = 0
        for n in np.flatnonzero(g.tn_dl_mask("D")):
            for v in vd:
                kk = i % k["D"]
                al.a_d[home[kk], kk, v, n] = True
                i += 1
    # M: per RB, UEs in rotating order take their strongest free server
    vm = np.flatnonzero(bwp.active["M"])
    fm = g.frame_of("M")
    dl_m = g.tn_dl_mask("M")
    if k["M"] and vm.size:
        for n in range(g.n_rb_times("M")):
            f = fm[n]
            for v in vm:
                free_ap = np.ones(L, dtype=bool) if dl_m[n] else np.zeros(L, dtype=bool)
                sat_free = True
                start = (v + n) % k["M"]
                for j in range(k["M"]):
                    kk = (start + j) % k["M"]
                    cand = np.where(free_ap, ch.tn["M"][:, kk, v, f], -1.0) if L else np.zeros(0)
                    best_tn = int(np.argmax(cand)) if L and free_ap.any() else -1
                    g_tn = cand[best_tn] if best_tn >= 0 else -1.0
                    g_sat = ch.sat["M"][kk, v, f] if sat_free else -1.0
                    if g_tn < 0 and g_sat < 0:
                        break
                    if g_tn >= g_sat:
                        al.a_m[best_tn, kk, v, n] = True
                        free_ap[best_tn] = False
                    else:
                        al.b_m[kk, v, n] = True
                        sat_free = False
    vs = np.flatnonzero(bwp.active["S"])
    if k["S"] and vs.size:
        for n in range(g.n_rb_times("S")):
            for v in vs:
                al.b_s[(v + n) % k["S"], v, n] = True
    return al


def spread_power(al: AllocationState, inp: PlanningInputs, fraction: float) -> AllocationState:
    """Equal per-slot power split over each server's links, times ``fraction``."""
    g, phy = inp.grid, inp.phy
    unit = al.copy()
    unit.p_d = al.a_d.astype(float)
    unit.p_m = al.a_m.astype(float)
    unit.p0_m = al.b_m.astype(float)
    unit.p0_s = al.b_s.astype(float)
    ap, sat = slot_powers(unit, g)  # link counts per slot
    r_m = g.rbs_per_subframe("D") // g.rbs_per_subframe("M")
    r_s = g.rbs_per_subframe("D") // g.rbs_per_subframe("S")
    L = al.p_d.shape[0]
    with np.errstate(divide="ignore"):
        lvl_ap = np.where(ap > 0, fraction * phy.p_max_ap / np.maximum(ap, 1), 0.0)
        lvl_sat = np.where(sat > 0, fraction * phy.p_max_sat / np.maximum(sat, 1), 0.0)
    # M and S links span several D slots; take the tightest level among busy slots
    big = np.inf
    lvl_ap_m = np.where(ap.reshape(L, -1, r_m) > 0, lvl_ap.reshape(L, -1, r_m), big).min(axis=2)
    lvl_sat_m = np.where(sat.reshape(-1, r_m) > 0, lvl_sat.reshape(-1, r_m), big).min(axis=1)
    lvl_sat_s = np.where(sat.reshape(-1, r_s) > 0, lvl_sat.reshape(-1, r_s), big).min(axis=1)
    out = al.copy()
    out.p_d = np.where(al.a_d, lvl_ap[:, None, None, :], 0.0)
    out.p_m = np.where(al.a_m, np.where(np.isinf(lvl_ap_m), 0, lvl_ap_m)[:, None, None, :], 0.0)
    out.p0_m = np.where(al.b_m, np.where(np.isinf(lvl_sat_m), 0, lvl_sat_m)[None, None, :], 0.0)
    out.p0_s = np.where(al.b_s, np.where(np.isinf(lvl_sat_s), 0, lvl_sat_s)[None, None, :], 0.0)
    return out


def drop_weak_d(al: AllocationState, inp: PlanningInputs, margin: float = 1.05) -> AllocationState:
    """Remove D links whose SINR misses the floor at the given powers."""
    g = sinr_d(al, inp.chans)
    bad = al.a_d & (g < inp.phy.gamma0_d * margin)
    if not bad.any():
        return al
    out = al.copy()
    out.a_d = al.a_d & ~bad
    out.p_d = np.where(out.a_d, out.p_d, 0.0)
    return out


def score_layout(inp: PlanningInputs, bwp: BwpPlan, d_weight: float = 1e3) -> Tuple[float, AllocationState]:
    """Full-power replay objective (bits) plus a penalty on unserved D bits."""
    al = spread_power(assign_support(inp, bwp), inp, 1.0)
    al = drop_weak_d(al, inp)
    first = evaluate(al, _uniform_steer(inp), inp.chans, inp.traffic, inp.q0, inp.grid, inp.phy)
    st = steering_from_rates(first.rates)
    ev = evaluate(al, st, inp.chans, inp.traffic, inp.q0, inp.grid, inp.phy)
    return ev.objective + d_weight * ev.d_unserved, al


def _uniform_steer(inp: PlanningInputs):
    from ..queueing import SteeringWeights

    return SteeringWeights.uniform(inp.n_ap, inp.k["D"], inp.k["M"])


def choose_layout(inp: PlanningInputs, fixed: Optional[BwpPlan] = None) -> BwpPlan:
    if fixed is not None:
        return fixed
    best, best_plan = np.inf, None
    for n_d, n_m, n_s in layout_candidates(inp):
        plan = BwpPlan.ordered_layout(inp.grid, n_d, n_m, n_s)
        val, _ = score_layout(inp, plan)
        if best_plan is None or val < best:
            best, best_plan = val, plan
    if best_plan is None:
        raise ValueError("no feasible bandwidth-part layout for this topology")
    return best_plan


def initial_point(inp: PlanningInputs, fraction: float = 0.1, eps: float = 1e-4,
                  bwp: Optional[BwpPlan] = None) -> ExpansionPoint:
    """Expansion point at ``fraction`` of the budget on the chosen support.

    Interference logs are exact tangent points (computed by the caller once the
    link structure is known); ``zeta`` starts at the smoothed link counts.
    """
    plan = choose_layout(inp, bwp)
    # links that cannot reach the D floor even at full budget are left out
    full = drop_weak_d(spread_power(assign_support(inp, plan), inp, 1.0), inp)
    al = spread_power(full, inp, fraction)
    g = inp.grid
    L, K = al.p_d.shape[:2]
    nrb = g.rbs_per_subframe("D")
    zeta = f_apx(al.p_d, eps).sum(axis=2).reshape(L, K, -1, nrb).sum(axis=3)
    return ExpansionPoint(al, empty_eta(al), zeta)
