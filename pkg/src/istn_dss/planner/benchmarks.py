"""Benchmark planners: greedy matching, residual-driven heuristic and the
interference-free reference."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..conic.assemble import PlanningInputs
from ..grid import BwpPlan, GridConfig, max_layout_s
from ..kernels import greedy_match, waterfill
from ..phy import AllocationState, ServiceRates, dispersion_penalty
from ..queueing import SteeringWeights
from .config import CycleDecision, PlannerConfig
from .evaluate import steering_from_rates
from .initial import layout_candidates
from .joint import dt_joint_ra
from .recovery import gate_to_bwp


def split_layout(grid: GridConfig, n_d: int, share_m: float, k) -> BwpPlan:
    """Ordered layout with ``n_d`` D subchannels; M gets ``share_m`` of the M+S bandwidth."""
    best = None
    hi = grid.cap("M") if k["M"] else 0
    for n_m in range(1 if k["M"] else 0, hi + 1):
        n_s = max_layout_s(grid, n_d, n_m) if k["S"] else 0
        if k["S"] and n_s < 1:
            continue
        bw_m, bw_s = n_m * grid.spacing("M"), n_s * grid.spacing("S")
        tot = bw_m + bw_s
        err = abs(bw_m / tot - share_m) if tot > 0 else 0.0
        if best is None or err < best[0] - 1e-12:
            best = (err, n_m, n_s)
    if best is None:
        raise ValueError("no ordered layout leaves room for both M and S")
    return BwpPlan.ordered_layout(grid, n_d, best[1], best[2])


def greedy_associate(inp: PlanningInputs, bwp: BwpPlan) -> AllocationState:
    """Per frame, every UE in turn claims its strongest free (server, subchannel, RB-time)."""
    g, L, k, ch = inp.grid, inp.n_ap, inp.k, inp.chans
    al = AllocationState.zeros(g, L, k, bwp)
    for x in ("D", "M", "S"):
        if k[x] == 0:
            continue
        V = g.cap(x)
        act = bwp.active[x]
        dl = g.tn_dl_mask(x)
        servers = (L if x in ("D", "M") else 0) + (1 if x in ("M", "S") else 0)
        per_frame = 10 * g.rbs_per_subframe(x)
        for f in range(g.n_frames_per_cycle):
            n_sl = slice(f * per_frame, (f + 1) * per_frame)
            gains = np.zeros((servers, k[x], V, per_frame))
            if x in ("D", "M"):
                gains[:L] = ch.tn[x][:, :, :, f, None] / ch.noise[x] * dl[None, None, None, n_sl]
            if x in ("M", "S"):
                gains[-1] = ch.sat[x][:, :, f, None] / ch.noise[x]
            gains *= act[None, None, :, None]
            match = greedy_match(gains)
            if x == "D":
                al.a_d[..., n_sl] = match
            elif x == "M":
                al.a_m[..., n_sl] = match[:L]
                al.b_m[..., n_sl] = match[L]
            else:
                al.b_s[..., n_sl] = match[0]
    return al


def waterfill_powers(al: AllocationState, inp: PlanningInputs, tol: float) -> AllocationState:
    """Interference-free water-filling per server and D slot.

    M and S links span several D slots and take the smallest level they receive.
    """
    g, ch, phy = inp.grid, inp.chans, inp.phy
    L = al.p_d.shape[0]
    nd = g.n_rb_times("D")
    r_m = g.rbs_per_subframe("D") // g.rbs_per_subframe("M")
    r_s = g.rbs_per_subframe("D") // g.rbs_per_subframe("S")
    t = np.arange(nd)
    snr_d = np.where(al.a_d, ch.tn_rb("D") / ch.noise["D"], 0.0) if al.a_d.size else al.p_d
    snr_m = np.where(al.a_m, ch.tn_rb("M") / ch.noise["M"], 0.0) if al.a_m.size else al.p_m
    snr_0m = np.where(al.b_m, ch.sat_rb("M") / ch.noise["M"], 0.0) if al.b_m.size else al.p0_m
    snr_0s = np.where(al.b_s, ch.sat_rb("S") / ch.noise["S"], 0.0) if al.b_s.size else al.p0_s
    out = al.copy()
    # terrestrial rows: (L * N_D) x (D links at t, M links at t // r_m)
    if L:
        a_d = np.moveaxis(snr_d, 3, 1).reshape(L, nd, -1)
        a_m = np.moveaxis(snr_m[..., t // r_m], 3, 1).reshape(L, nd, -1)
        a = np.concatenate([a_d, a_m], axis=2).reshape(L * nd, -1)
        p = waterfill(a, np.full(L * nd, phy.p_max_ap), tol).reshape(L, nd, -1)
        nD = a_d.shape[2]
        pd = p[:, :, :nD].reshape(L, nd, *snr_d.shape[1:3])
        out.p_d = np.moveaxis(pd, 1, 3)
        pm = p[:, :, nD:].reshape(L, nd, *snr_m.shape[1:3])
        pm = np.moveaxis(pm, 1, 3)  # (L, K, V, N_D)
        out.p_m = pm.reshape(*pm.shape[:3], -1, r_m).min(axis=4)
    a0m = np.moveaxis(snr_0m[..., t // r_m], 2, 0).reshape(nd, -1)
    a0s = np.moveaxis(snr_0s[..., t // r_s], 2, 0).reshape(nd, -1)
    a = np.concatenate([a0m, a0s], axis=1)
    p = waterfill(a, np.full(nd, phy.p_max_sat), tol)
    n0m = a0m.shape[1]
    p0m = np.moveaxis(p[:, :n0m].reshape(nd, *snr_0m.shape[:2]), 0, 2)
    p0s = np.moveaxis(p[:, n0m:].reshape(nd, *snr_0s.shape[:2]), 0, 2)
    out.p0_m = p0m.reshape(*p0m.shape[:2], -1, r_m).min(axis=3)
    out.p0_s = p0s.reshape(*p0s.shape[:2], -1, r_s).min(axis=3)
    out.a_d, out.a_m, out.b_m, out.b_s = out.p_d > 0, out.p_m > 0, out.p0_m > 0, out.p0_s > 0
    return out


def interference_free_rates(al: AllocationState, inp: PlanningInputs) -> ServiceRates:
    """Rates a planner that ignores interference believes it gets."""
    g, ch, phy = inp.grid, inp.chans, inp.phy
    L, K, V, N = al.p_d.shape
    snr_d = al.effective("p_d") * ch.tn_rb("D") / ch.noise["D"]
    nrb = g.rbs_per_subframe("D")
    sh = g.spacing("D") * np.log2(1 + snr_d).sum(axis=2).reshape(L, K, -1, nrb).sum(axis=3)
    cnt = al.a_d.sum(axis=2).reshape(L, K, -1, nrb).sum(axis=3)
    d = np.maximum(0.0, sh - dispersion_penalty(g, phy.error_prob) * np.sqrt(cnt))
    m_tn = g.spacing("M") * np.log2(1 + al.effective("p_m") * ch.tn_rb("M") / ch.noise["M"]).sum(axis=2)
    m_sat = g.spacing("M") * np.log2(1 + al.effective("p0_m") * ch.sat_rb("M") / ch.noise["M"]).sum(axis=1)
    s = g.spacing("S") * np.log2(1 + al.effective("p0_s") * ch.sat_rb("S") / ch.noise["S"]).sum(axis=1)
    ok = ~al.a_d | (snr_d >= phy.gamma0_d)
    return ServiceRates(d, m_tn, m_sat, s, ok)


def _greedy_core(inp: PlanningInputs, cfg: PlannerConfig, bwp: BwpPlan, name: str) -> CycleDecision:
    al = greedy_associate(inp, bwp)
    al = waterfill_powers(al, inp, cfg.eps_pow)
    al = gate_to_bwp(al, bwp)
    rates = interference_free_rates(al, inp)
    st = steering_from_rates(rates)
    return CycleDecision(bwp=bwp, steering=st, alloc=al, algorithm=name, info={"believed_rates": rates})


def greedy(inp: PlanningInputs, cfg: PlannerConfig) -> CycleDecision:
    """Fixed D subchannels, equal M/S bandwidth, strongest-gain matching, water-filling."""
    n_d = cfg.n_sc_d if inp.k["D"] else 0
    return _greedy_core(inp, cfg, split_layout(inp.grid, n_d, 0.5, inp.k), "greedy")


@dataclass
class HeuristicMemory:
    """Residual queue bookkeeping (bits) carried between cycles."""

    m: float = 0.0
    s: float = 0.0
    started: bool = False


def heuristic(inp: PlanningInputs, cfg: PlannerConfig, memory: HeuristicMemory) -> CycleDecision:
    """Greedy with the M/S split following the previous cycle's residual queues."""
    share = 0.5
    if memory.started and memory.m + memory.s > 0:
        share = memory.m / (memory.m + memory.s)
    n_d = cfg.n_sc_d if inp.k["D"] else 0
    dec = _greedy_core(inp, cfg, split_layout(inp.grid, n_d, share, inp.k), "heuristic")
    # residual bookkeeping from believed rates and this cycle's traffic
    rates = dec.info["believed_rates"]
    g = inp.grid
    served_m = (rates.m_tn.sum() + rates.m_sat.sum()) * g.rb_duration("M")
    served_s = rates.s.sum() * g.rb_duration("S")
    memory.m = max(0.0, memory.m + float(inp.traffic.m.sum()) - served_m)
    memory.s = max(0.0, memory.s + float(inp.traffic.s.sum()) - served_s)
    memory.started = True
    return dec


def proportional_layout(inp: PlanningInputs) -> BwpPlan:
    """Ordered layout whose per-service bandwidth best matches the traffic shares."""
    g, tr = inp.grid, inp.traffic
    dem = np.array([tr.d.sum(), tr.m.sum(), tr.s.sum()], dtype=float)
    if dem.sum() <= 0:
        dem = np.array([float(inp.k[x] > 0) for x in "DMS"])
    share = dem / dem.sum()
    best = None
    for n_d, n_m, n_s in layout_candidates(inp):
        bw = np.array([n_d * g.spacing("D"), n_m * g.spacing("M"), n_s * g.spacing("S")])
        err = float(np.abs(bw / bw.sum() - share).sum())
        if best is None or err < best[0] - 1e-12:
            best = (err, (n_d, n_m, n_s))
    return BwpPlan.ordered_layout(g, *best[1])


def reference(inp: PlanningInputs, cfg: PlannerConfig, prev_rates: Optional[ServiceRates]) -> CycleDecision:
    """Interference-free joint power/RB optimization with proportional BWA and steering."""
    if prev_rates is None:
        L = inp.n_ap
        st = SteeringWeights(np.full((L, inp.k["D"]), 1.0 / L), np.full((L, inp.k["M"]), 1.0 / (L + 1)))
    else:
        st = steering_from_rates(prev_rates)
    dec = dt_joint_ra(inp, cfg, algorithm="reference", bwp=proportional_layout(inp), steering=st,
                      interference=False)
    return dec

