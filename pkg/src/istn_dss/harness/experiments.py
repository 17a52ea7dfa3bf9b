"""Parameter sweeps and decision validation."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

from ..channel import build_cycle_channels
from ..conic.assemble import PlanningInputs
from ..planner import check_service, check_structure, evaluate
from ..planner.validator import ValidationReport
from .run import RunReport, run_many
from .scenario import Scenario, build_world


def _dbm(v: float) -> float:
    return 10 ** (float(v) / 10) * 1e-3


AXES: Dict[str, Callable[[Scenario, float], Scenario]] = {
    "xi": lambda sc, v: replace(sc, xi=float(v)),
    "kappa": lambda sc, v: replace(sc, planner=replace(sc.planner, kappa=float(v))),
    "p_max_ap_dbm": lambda sc, v: replace(sc, phy=replace(sc.phy, p_max_ap=_dbm(v))),
    "p_max_sat_dbm": lambda sc, v: replace(sc, phy=replace(sc.phy, p_max_sat=_dbm(v))),
    "traffic_scale": lambda sc, v: replace(sc, traffic=sc.traffic.scaled(float(v))),
    "n_sc_d": lambda sc, v: replace(sc, planner=replace(sc.planner, n_sc_d=int(v))),
}


def sweep(sc: Scenario, axis: str, values: Sequence[float], algorithms: Sequence[str],
          seeds: Iterable[int]) -> List[tuple]:
    """One row per (value, algorithm, seed)."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {', '.join(AXES)}")
    seeds = list(seeds)
    rows = []
    for v in values:
        for rep in run_many(AXES[axis](sc, v), algorithms, seeds):
            rows.append((axis, v) + summary_row(rep))
    return rows


SUMMARY_HEADER = ("algorithm", "seed", "mean_ql_mb", "d_unserved", "iters_mean", "wall_s", "violations", "failure")
SWEEP_HEADER = ("axis", "value") + SUMMARY_HEADER


def summary_row(rep: RunReport) -> tuple:
    its = [c.iterations for c in rep.cycles]
    viol = ",".join(f"{t}:{n}" for t, n in sorted(rep.violations.items())) or "-"
    return (rep.algorithm, rep.seed, rep.mean_ql_mb, rep.d_unserved_fraction,
            sum(its) / len(its) if its else 0.0, rep.wall_s, viol, rep.failure or "-")


# ---------------------------------------------------------------------------


def validate_decision_files(paths: Iterable, sc: Optional[Scenario] = None) -> List[tuple]:
    """Structural checks on stored decisions; service checks too when a scenario is given.

    Returns rows ``(file, tag, count, detail)``.
    """
    from .store import load_decision

    rows = []
    worlds = {}
    for p in paths:
        dec, meta, q0 = load_decision(p)
        if sc is not None:
            g = sc.grid
            rep = check_structure(dec.alloc, dec.steering, g, sc.phy)
            if q0 is not None and "seed" in meta and "cycle" in meta:
                seed, c = int(meta["seed"]), int(meta["cycle"])
                world = worlds.setdefault(seed, build_world(sc, seed))
                real, _ = build_cycle_channels(world.geometry(c), c, sc.coupling(seed), g, sc.channel)
                ev = evaluate(dec.alloc, dec.steering, real, world.traffic.cycle(c, g), q0, g, sc.phy)
                check_service(rep, ev, sc.caps_bits)
        else:
            rep = _structure_without_scenario(dec)
        for tag, n, detail in rep.rows():
            rows.append((Path(p).name, tag, n, detail))
    return rows


def _structure_without_scenario(dec) -> ValidationReport:
    """Exclusivity and sign checks that need no grid or budgets."""
    import numpy as np

    al = dec.alloc
    rep = ValidationReport()
    for pf in ("p_d", "p_m", "p0_m", "p0_s"):
        rep.add("C4" if pf in ("p_d", "p_m") else "C7", int((getattr(al, pf) < 0).sum()), f"negative {pf}")
    rep.add("C5", int((al.a_d.sum(axis=1) > 1).sum() + (al.a_m.sum(axis=1) > 1).sum()),
            "AP serves several UEs on one RB")
    rep.add("C6", int((al.a_d.sum(axis=0) > 1).sum()), "D UE served by several APs on one RB")
    rep.add("C8", int((al.b_m.sum(axis=0) > 1).sum() + (al.b_s.sum(axis=0) > 1).sum()),
            "satellite serves several UEs on one RB")
    rep.add("C9", int(((al.a_m.sum(axis=0) + al.b_m) > 1).sum()), "M UE served by several servers on one RB")
    wd = dec.steering.omega_d
    rep.add("C13", int((np.abs(wd.sum(axis=0) - 1) > 1e-8).sum()) if wd.size else 0, "steering weights")
    return rep


def validate_runs(reports: Iterable[RunReport]) -> List[tuple]:
    """Rows ``(algorithm, seed, cycle, tag, count, expected)`` for every violation.

    ``expected`` is ``yes`` for benchmarks that plan without interference,
    ``twin-gap`` for service misses that only appear when a twin plan meets
    the real channels, and ``no`` otherwise.
    """
    from ..planner.validator import IGNORES_SERVICE, SERVICE

    rows = []
    for rep in reports:
        for c in rep.cycles:
            for tag, n in sorted(c.violations.items()):
                if tag not in SERVICE:
                    expected = "no"
                elif rep.algorithm in IGNORES_SERVICE:
                    expected = "yes"
                elif tag in c.planned_violations:
                    expected = "no"
                else:
                    expected = "twin-gap"
                rows.append((rep.algorithm, rep.seed, c.cycle, tag, n, expected))
    return rows
