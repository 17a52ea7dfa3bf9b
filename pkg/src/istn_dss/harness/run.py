"""The per-cycle simulation loop and its report."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..channel import ChannelSet, build_cycle_channels
from ..conic.assemble import PlanningInputs
from ..dtwin import TwinState, predict_positions, predict_traffic
from ..planner import (
    CycleDecision,
    HeuristicMemory,
    check_service,
    check_structure,
    dt_joint_ra,
    evaluate,
    fia,
    greedy,
    heuristic,
    reference,
    refine_subframe,
)
from ..planner.validator import IGNORES_SERVICE, SERVICE, ValidationReport
from ..planner.joint import subframe_queues
from ..queueing import BITS_PER_MB, QueueState, TrafficTrace
from .scenario import Scenario, World, build_world

log = logging.getLogger(__name__)

ALGORITHMS = ("rt_refine", "dt_joint_ra", "fia", "reference", "heuristic", "greedy")
SAT_FIELDS = ("p0_m", "p0_s", "b_m", "b_s")


@dataclass
class CycleRecord:
    cycle: int
    mean_ql_mb: float
    frame_ql_mb: np.ndarray
    d_unserved_fraction: float
    d_unserved_bits: float
    d_total_bits: float
    bwa: Dict[str, int]
    iterations: int
    refine_iterations: List[int]
    statuses: List[str]
    wall_s: float
    violations: Dict[str, int]
    refine_accepted: int = 0
    trace: List[float] = field(default_factory=list)
    max_residual: float = 0.0
    monotone: bool = True
    planned_violations: Dict[str, int] = field(default_factory=dict)  # service tags on the planner's own inputs


@dataclass
class RunReport:
    scenario: str
    algorithm: str
    seed: int
    cycles: List[CycleRecord] = field(default_factory=list)
    decisions: List[CycleDecision] = field(default_factory=list)
    failure: Optional[str] = None
    wall_s: float = 0.0

    @property
    def complete(self) -> bool:
        return self.failure is None

    @property
    def cycle_ql_mb(self) -> np.ndarray:
        return np.array([c.mean_ql_mb for c in self.cycles])

    @property
    def frame_ql_mb(self) -> np.ndarray:
        if not self.cycles:
            return np.zeros(0)
        return np.concatenate([c.frame_ql_mb for c in self.cycles])

    @property
    def mean_ql_mb(self) -> float:
        return float(self.cycle_ql_mb.mean()) if self.cycles else float("nan")

    @property
    def d_unserved_fraction(self) -> float:
        tot = sum(c.d_total_bits for c in self.cycles)
        return sum(c.d_unserved_bits for c in self.cycles) / tot if tot > 0 else 0.0

    @property
    def violations(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for c in self.cycles:
            for t, n in c.violations.items():
                out[t] = out.get(t, 0) + n
        return out

    def structural_violations(self) -> Dict[str, int]:
        return {t: n for t, n in self.violations.items() if t not in SERVICE}

    def unexpected_service_violations(self) -> Dict[str, int]:
        """Service misses the planner should have prevented on the inputs it planned with."""
        if self.algorithm in IGNORES_SERVICE:
            return {}
        out: Dict[str, int] = {}
        for c in self.cycles:
            for t, n in c.planned_violations.items():
                if t in SERVICE:
                    out[t] = out.get(t, 0) + n
        return out

    def cycle_rows(self):
        header = ("algorithm", "seed", "cycle", "mean_ql_mb", "d_unserved", "bwa_d", "bwa_m", "bwa_s",
                  "iters", "refine_iters", "wall_s", "violations")
        rows = []
        for c in self.cycles:
            viol = ",".join(f"{t}:{n}" for t, n in sorted(c.violations.items())) or "-"
            rows.append((self.algorithm, self.seed, c.cycle, c.mean_ql_mb, c.d_unserved_fraction,
                         c.bwa["D"], c.bwa["M"], c.bwa["S"], c.iterations, sum(c.refine_iterations),
                         c.wall_s, viol))
        return header, rows


# ---------------------------------------------------------------------------


def _cycle_inputs(sc: Scenario, world: World, c: int, seed: int, q: QueueState):
    g = sc.grid
    pos, vel = world.observed(c - 1)
    state = TwinState(sc.ap_positions, pos, vel, sc.satellite, world.traffic.cycle(c - 1, g))
    predicted = predict_positions(state, c, g)
    real, twin = build_cycle_channels(world.geometry(c), c, sc.coupling(seed), g, sc.channel,
                                      twin_geometry=predicted)
    actual = world.traffic.cycle(c, g)
    pred = predict_traffic(state.traffic_history, g, sc.ue_counts)
    k = dict(sc.ue_counts)
    twin_inp = PlanningInputs(g, sc.phy, twin, pred, q, sc.caps_bits, sc.n_ap, k)
    real_inp = PlanningInputs(g, sc.phy, real, actual, q, sc.caps_bits, sc.n_ap, k)
    return twin_inp, real_inp


def mixed_channels(real: ChannelSet, twin: ChannelSet, grid) -> ChannelSet:
    """Measured terrestrial gains with predicted satellite gains."""
    out = ChannelSet(dict(real.tn), dict(twin.sat), dict(real.noise), "mixed")
    return out.bind_grid(grid)


def _same_traffic(a: TrafficTrace, b: TrafficTrace) -> bool:
    return all(np.array_equal(x, y) for x, y in ((a.d, b.d), (a.m, b.m), (a.s, b.s)))


def rt_refine(twin_inp: PlanningInputs, real_inp: PlanningInputs, cfg, kappa=None):
    """Phase 1 on the twin, then per-subframe terrestrial refinement.

    Returns the refined decision; ``info['phase1']`` keeps the Phase-1 output
    and ``info['refine']`` the per-subframe outcomes.
    """
    g = twin_inp.grid
    phase1 = dt_joint_ra(twin_inp, cfg, algorithm="rt_refine")
    mixed = mixed_channels(real_inp.chans, twin_inp.chans, g)
    unchanged = mixed.equals(twin_inp.chans) and _same_traffic(real_inp.traffic, twin_inp.traffic)
    current = phase1.alloc.copy()
    outcomes = []
    for s in np.flatnonzero(g.dl_subframe_mask()):
        # actual queues at the start of the subframe under the allocation so far
        q_s = subframe_queues(current, phase1.steering, real_inp, int(s))
        inp_s = PlanningInputs(g, real_inp.phy, mixed, real_inp.traffic, q_s, real_inp.caps, real_inp.n_ap,
                               real_inp.k)
        out = refine_subframe(phase1, current, inp_s, int(s), cfg, kappa=kappa, unchanged=unchanged)
        current = out.alloc
        outcomes.append(out)
    for f in SAT_FIELDS:
        if not np.array_equal(getattr(current, f), getattr(phase1.alloc, f)):
            raise AssertionError("refinement changed a satellite decision")
    dec = CycleDecision(
        bwp=phase1.bwp, steering=phase1.steering, alloc=current, algorithm="rt_refine",
        trace=phase1.trace, statuses=phase1.statuses + [st for o in outcomes for st in o.statuses],
        iterations=phase1.iterations, info=dict(phase1.info),
    )
    dec.info["phase1"] = phase1
    dec.info["refine"] = outcomes
    return dec


def _plan(algorithm: str, twin_inp, real_inp, cfg, state: dict) -> CycleDecision:
    if algorithm == "dt_joint_ra":
        return dt_joint_ra(twin_inp, cfg)
    if algorithm == "rt_refine":
        return rt_refine(twin_inp, real_inp, cfg)
    if algorithm == "fia":
        return fia(real_inp, cfg)
    if algorithm == "greedy":
        return greedy(real_inp, cfg)
    if algorithm == "heuristic":
        return heuristic(real_inp, cfg, state.setdefault("memory", HeuristicMemory()))
    if algorithm == "reference":
        return reference(real_inp, cfg, state.get("prev_rates"))
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")


def replay(decision: CycleDecision, real_inp: PlanningInputs):
    """Metrics of a decision on realized channels and traffic."""
    if real_inp.chans.environment != "real":
        raise ValueError("metrics must be computed on real-environment channels")
    return evaluate(decision.alloc, decision.steering, real_inp.chans, real_inp.traffic, real_inp.q0,
                    real_inp.grid, real_inp.phy, real_inp.caps)


def run(sc: Scenario, algorithm: str, seed: Optional[int] = None, keep_decisions: bool = False,
        world: Optional[World] = None) -> RunReport:
    """Simulate every planning cycle of ``sc`` with one algorithm."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    seed = sc.seed if seed is None else int(seed)
    world = world or build_world(sc, seed)
    g, cfg = sc.grid, sc.planner
    report = RunReport(sc.name, algorithm, seed)
    q = QueueState.zeros(sc.n_ap, sc.ue_counts["M"], sc.ue_counts["S"])
    state: dict = {}
    t_run = time.perf_counter()
    for c in range(1, g.n_cycles + 1):
        t0 = time.perf_counter()
        try:
            twin_inp, real_inp = _cycle_inputs(sc, world, c, seed, q)
            dec = _plan(algorithm, twin_inp, real_inp, cfg, state)
        except Exception as exc:  # partial report with the failure
            log.exception("cycle %d failed", c)
            report.failure = f"cycle {c}: {type(exc).__name__}: {exc}"
            break
        ev = replay(dec, real_inp)
        rep = check_structure(dec.alloc, dec.steering, g, sc.phy)
        check_service(rep, ev, sc.caps_bits)
        planned = rep.tags()
        if algorithm == "dt_joint_ra":
            # the twin plan is judged on the twin; real-replay misses are the twin gap
            ev_twin = evaluate(dec.alloc, dec.steering, twin_inp.chans, twin_inp.traffic, twin_inp.q0,
                               g, sc.phy, sc.caps_bits)
            planned = check_service(ValidationReport(), ev_twin, sc.caps_bits).tags()
        state["prev_rates"] = ev.rates
        refine = dec.info.get("refine", [])
        report.cycles.append(CycleRecord(
            cycle=c,
            mean_ql_mb=ev.objective / BITS_PER_MB,
            frame_ql_mb=ev.history.frame_totals(g) / BITS_PER_MB,
            d_unserved_fraction=ev.d_unserved_fraction,
            d_unserved_bits=ev.d_unserved,
            d_total_bits=ev.d_total,
            bwa={x: int(dec.bwp.active[x].sum()) for x in ("D", "M", "S")},
            iterations=dec.iterations,
            refine_iterations=[o.iterations for o in refine],
            statuses=list(dec.statuses),
            wall_s=time.perf_counter() - t0,
            violations=rep.tags(),
            refine_accepted=sum(o.accepted for o in refine),
            trace=list(dec.trace),
            max_residual=max([float(dec.info.get("max_residual", 0.0))] + [o.max_residual for o in refine]),
            monotone=bool(dec.info.get("monotone", True)),
            planned_violations={t: n for t, n in planned.items() if t in SERVICE},
        ))
        if keep_decisions:
            dec.info["q0"] = q.copy()
            report.decisions.append(dec)
        q = ev.history.final()
    report.wall_s = time.perf_counter() - t_run
    return report


def run_many(sc: Scenario, algorithms, seeds, keep_decisions: bool = False) -> List[RunReport]:
    """Every (algorithm, seed) pair; worlds are shared across algorithms per seed."""
    out = []
    for seed in seeds:
        world = build_world(sc, seed)
        for a in algorithms:
            out.append(run(sc, a, seed, keep_decisions, world))
    return out
