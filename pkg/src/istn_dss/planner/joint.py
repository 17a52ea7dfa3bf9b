"""Joint SCA planning and per-subframe terrestrial refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from ..conic import solve
from ..conic.assemble import (
    AssemblyOptions,
    CycleProblem,
    ExpansionPoint,
    PlanningInputs,
    exact_eta,
    exact_zeta,
)
from ..grid import BwpPlan
from ..kernels import queue_replay
from ..phy import AllocationState, evaluate_rates, scale_to_budgets
from ..queueing import QueueState, SteeringWeights, steer_arrivals
from .config import CycleDecision, PlannerConfig
from .evaluate import evaluate
from .initial import initial_point
from .recovery import recover_allocation

log = logging.getLogger(__name__)


@dataclass
class ScaResult:
    point: ExpansionPoint
    steering: Optional[SteeringWeights]
    trace: List[float] = field(default_factory=list)
    statuses: List[str] = field(default_factory=list)
    max_residual: float = 0.0

    @property
    def solved(self) -> bool:
        return bool(self.trace)


def run_sca(problem: CycleProblem, point: ExpansionPoint, max_iters: int, cfg: PlannerConfig) -> ScaResult:
    """Solve convex iterates until the relative objective change drops below ``sca_tol``."""
    res = ScaResult(point, None)
    live = None
    for _ in range(max_iters):
        prog, dec = problem.build(point, keep_live=live)
        live = dec["live"]
        sol = solve(prog, tol=cfg.solver_tol, keep_program=False)
        res.statuses.append(sol.status)
        if not sol.ok:
            log.info("SCA iterate %d stopped with status %s", len(res.trace) + 1, sol.status)
            break
        res.max_residual = max(res.max_residual, max(sol.residuals.values()))
        point = problem.decode(sol, dec, point)
        res.point = point
        res.steering = problem.steering(sol, dec)
        res.trace.append(sol.objective)
        if len(res.trace) > 1:
            prev = res.trace[-2]
            if abs(res.trace[-1] - prev) / max(abs(prev), 1.0) <= cfg.sca_tol:
                break
    return res


def is_nonincreasing(trace, tol: float) -> bool:
    t = np.asarray(trace, dtype=float)
    if t.size < 2:
        return True
    return bool(np.all(np.diff(t) <= tol * np.maximum(np.abs(t[:-1]), 1.0)))


def _clean_steering(st: SteeringWeights) -> SteeringWeights:
    d = np.clip(st.omega_d, 0.0, None)
    if d.size:
        col = d.sum(axis=0, keepdims=True)
        d = np.where(col > 0, d / np.where(col > 0, col, 1.0), 1.0 / d.shape[0])
    m = np.clip(st.omega_m, 0.0, 1.0)
    if m.size:
        col = m.sum(axis=0, keepdims=True)
        m = np.where(col > 1.0, m / col, m)
    return SteeringWeights(d, m)


def dt_joint_ra(
    inp: PlanningInputs,
    cfg: PlannerConfig,
    algorithm: str = "dt_joint_ra",
    bwp: Optional[BwpPlan] = None,
    steering: Optional[SteeringWeights] = None,
    interference: bool = True,
) -> CycleDecision:
    """SCA over the joint convexified problem, then binary recovery.

    ``bwp`` and ``steering`` fix those decisions when given (used by the
    interference-free reference benchmark).
    """
    start = initial_point(inp, cfg.init_power_fraction, cfg.epsilon, bwp)
    res, elastic = None, False
    for elastic in (False, True):
        opts = AssemblyOptions(
            epsilon=cfg.epsilon, interference=interference, steering=steering, bwp=bwp,
            elastic=elastic, penalty=cfg.penalty,
        )
        problem = CycleProblem(inp, opts)
        pt = start.copy()
        pt.eta = exact_eta(problem, pt.alloc, pt.eta)
        res = run_sca(problem, pt, cfg.max_sca_iters, cfg)
        if res.solved:
            break
    if not res.solved:
        raise RuntimeError(f"{algorithm}: no convex iterate solved (statuses {res.statuses})")
    st = _clean_steering(res.steering)
    alloc = recover_allocation(
        res.point.alloc, st, inp.traffic, inp.chans, inp.grid, inp.phy, cfg.epsilon, bwp=bwp,
    )
    dec = CycleDecision(
        bwp=alloc.bwp, steering=st, alloc=alloc, algorithm=algorithm, trace=list(res.trace),
        statuses=list(res.statuses), iterations=len(res.trace),
        info={
            "elastic": elastic,
            "monotone": is_nonincreasing(res.trace, 10 * cfg.solver_tol),
            "max_residual": res.max_residual,
            "relaxed": res.point.alloc,
        },
    )
    if interference:
        fixes = repair_d_service(dec, inp, cfg)
        dec.info["repair"] = fixes
        dec.statuses += [s for o in fixes for s in o.statuses]
        if fixes:
            dec.info["max_residual"] = max([res.max_residual] + [o.max_residual for o in fixes])
    return dec


def subframe_queues(alloc, steering, inp: PlanningInputs, s: int) -> QueueState:
    """Queues at the start of subframe ``s`` when ``alloc`` runs from ``inp.q0``."""
    if s == 0:
        return inp.q0.copy()
    g = inp.grid
    ev = evaluate(alloc, steering, inp.chans, inp.traffic, inp.q0, g, inp.phy)
    return ev.history.at(int(s) * g.rbs_per_subframe("M") - 1, g)


def repair_d_service(dec: CycleDecision, inp: PlanningInputs, cfg: PlannerConfig) -> List["RefineOutcome"]:
    """Re-solve terrestrial powers of subframes whose recovered D links miss service.

    The smoothed indicator in the joint problem is below one for every
    recovered link, so thresholding can leave a small D deficit or an RB just
    under the SINR floor.  Each such subframe gets one support-fixed pass with
    exact indicators and no margin.
    """
    g = inp.grid
    ev = evaluate(dec.alloc, dec.steering, inp.chans, inp.traffic, inp.q0, g, inp.phy)
    low = (~ev.rates.d_sinr_ok).any(axis=(0, 1, 2)).reshape(-1, g.rbs_per_subframe("D")).any(axis=1)
    short = np.flatnonzero((~ev.d_ok).any(axis=(0, 1)) | low)
    out = []
    for s in short:
        q_s = subframe_queues(dec.alloc, dec.steering, inp, int(s))
        o = refine_subframe(dec, dec.alloc, replace(inp, q0=q_s), int(s), cfg, kappa=1.0)
        dec.alloc = o.alloc
        out.append(o)
    return out


def fia(actual: PlanningInputs, cfg: PlannerConfig) -> CycleDecision:
    """The joint algorithm fed realized channels and traffic."""
    return dt_joint_ra(actual, cfg, algorithm="fia")


# ---------------------------------------------------------------------------
# refinement


@dataclass
class RefineOutcome:
    alloc: AllocationState
    accepted: bool
    skipped: bool
    trace: List[float]
    statuses: List[str]
    iterations: int
    max_residual: float = 0.0
    reason: str = ""


def window_cost(alloc, steering, chans, traffic, q_start: QueueState, grid, phy, s: int, isyi_scale=1.0):
    """Mean queue over the M RB-times of subframe ``s`` and D shortfall bits there."""
    rates = evaluate_rates(alloc, chans, grid, phy, isyi_scale)
    arr = steer_arrivals(traffic, steering)
    r = grid.rbs_per_subframe("M")
    pm = 10 * r
    win = np.arange(s * r, (s + 1) * r)
    first = (s * r) % pm == 0
    f = (s * r) // pm
    L, K = q_start.tn.shape
    tm = grid.rb_duration("M")
    a_tn = arr.m_tn[:, :, f:f + 1].reshape(L * K, 1) if first else np.zeros((L * K, 1))
    a_sm = arr.m_sat[:, f:f + 1] if first else np.zeros((arr.m_sat.shape[0], 1))
    h_tn = queue_replay(q_start.tn.ravel(), a_tn, (rates.m_tn[..., win] * tm).reshape(L * K, -1), pm)
    h_sm = queue_replay(q_start.sat_m, a_sm, rates.m_sat[:, win] * tm, pm)
    cost = (h_tn.sum() + h_sm.sum()) / grid.n_rb_times("M")
    short = np.maximum(0.0, arr.d[:, :, s] - grid.rb_duration("D") * rates.d[:, :, s]).sum()
    return float(cost), float(short)


def refine_subframe(
    phase1: CycleDecision,
    current: AllocationState,
    inp: PlanningInputs,
    s: int,
    cfg: PlannerConfig,
    kappa: Optional[float] = None,
    unchanged: bool = False,
) -> RefineOutcome:
    """Re-optimize terrestrial powers of subframe ``s`` with satellite decisions frozen.

    ``inp`` carries the mixed channel set (estimated terrestrial gains,
    predicted satellite gains), the actual traffic and the queue state at the
    start of the subframe.  ``unchanged`` signals that those inputs coincide
    with the ones Phase 1 planned on, in which case nothing is re-solved when
    the margin is 1.
    """
    kappa = cfg.kappa if kappa is None else kappa
    g = inp.grid
    if not g.dl_subframe_mask()[s]:
        return RefineOutcome(current, False, True, [], [], 0, reason="uplink subframe")
    if unchanged and kappa == 1.0:
        return RefineOutcome(current, False, True, [], [], 0, reason="inputs match phase 1")
    opts = AssemblyOptions(
        epsilon=cfg.epsilon, kappa=kappa, steering=phase1.steering, bwp=phase1.bwp, subframe=s,
        tn_support=phase1.alloc, fixed_sat=phase1.alloc, elastic=True, penalty=cfg.penalty,
    )
    problem = CycleProblem(inp, opts)
    if problem.n_links == 0 or not np.any(np.isnan(problem.links["fixed"])):
        return RefineOutcome(current, False, True, [], [], 0, reason="no terrestrial links")
    pt = ExpansionPoint(current.copy(), {}, exact_zeta(current, g, cfg.epsilon))
    pt.eta = exact_eta(problem, pt.alloc, {f: np.zeros(getattr(current, f).shape)
                                           for f in ("p_d", "p_m", "p0_m", "p0_s")})
    res = run_sca(problem, pt, cfg.max_refine_iters, cfg)
    if not res.solved:
        return RefineOutcome(current, False, False, [], res.statuses, 0, reason="solver failure")
    cand = _merge_subframe(current, res.point.alloc, g, s, cfg.epsilon)
    cand = scale_to_budgets(cand, g, inp.phy)
    old_cost, old_short = window_cost(current, phase1.steering, inp.chans, inp.traffic, inp.q0, g, inp.phy, s)
    new_cost, new_short = window_cost(cand, phase1.steering, inp.chans, inp.traffic, inp.q0, g, inp.phy, s)
    better = (new_short < old_short - 1e-6) or (
        new_short <= old_short + 1e-9 and new_cost < old_cost - 1e-6 * max(abs(old_cost), 1.0)
    )
    return RefineOutcome(
        cand if better else current, better, False, res.trace, res.statuses, len(res.trace),
        res.max_residual, "" if better else "no true improvement",
    )


def _merge_subframe(base: AllocationState, refined: AllocationState, grid, s: int, eps: float) -> AllocationState:
    """Copy refined terrestrial powers of subframe ``s`` into ``base``.

    Links keep their Phase-1 support; a refined power under ``eps`` on a
    supported link is lifted back to ``eps`` so the association is unchanged.
    """
    out = base.copy()
    for pf, af, x in (("p_d", "a_d", "D"), ("p_m", "a_m", "M")):
        sel = grid.subframe_of(x) == s
        old = getattr(base, pf)
        assoc = getattr(base, af)
        new = np.where(assoc, np.maximum(getattr(refined, pf), eps), 0.0)
        merged = old.copy()
        merged[..., sel] = new[..., sel]
        setattr(out, pf, merged)
    return out

