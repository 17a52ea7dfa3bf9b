"""Structural and service checks for cycle decisions.

Structural tags (must always hold): C1-C3 bandwidth parts, C4/C7 activity
only on active subchannels and terrestrial downlink subframes, C5/C6/C8/C9
exclusivity, C11/C12 power budgets, C13 steering.  Service tags (measured):
C10 D SINR floor, C14 D per-subframe delivery, C15/C16 queue caps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..grid import GridConfig, check_bwp_feasible
from ..phy import POWER_FIELDS, ASSOC_FIELDS, AllocationState, PhyParams, check_power_budgets

STRUCTURAL = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C11", "C12", "C13")
SERVICE = ("C10", "C14", "C15", "C16")

# benchmarks that plan without interference and are allowed to miss service rows
IGNORES_SERVICE = frozenset({"greedy", "heuristic", "reference"})


@dataclass
class Violation:
    tag: str
    count: int
    detail: str = ""


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    def add(self, tag: str, count: int, detail: str = "") -> None:
        if count:
            self.violations.append(Violation(tag, int(count), detail))

    def tags(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for v in self.violations:
            out[v.tag] = out.get(v.tag, 0) + v.count
        return out

    @property
    def structural_ok(self) -> bool:
        return not any(v.tag in STRUCTURAL for v in self.violations)

    def rows(self):
        return [(v.tag, v.count, v.detail) for v in self.violations]


def check_structure(alloc: AllocationState, steering, grid: GridConfig, phy: PhyParams,
                    tol: float = 1e-9) -> ValidationReport:
    rep = ValidationReport()
    ok, msgs = check_bwp_feasible(alloc.bwp, grid)
    for m in msgs:
        rep.add(m.split(":")[0], 1, m)
    for pf, af in zip(POWER_FIELDS, ASSOC_FIELDS):
        p, a = getattr(alloc, pf), getattr(alloc, af)
        rep.add("C4" if pf in ("p_d", "p_m") else "C7", int(np.sum(p < -tol)), f"negative {pf}")
        rep.add("C4" if pf in ("p_d", "p_m") else "C7", int(np.sum((p > 0) & ~a)), f"{pf} without association")
    act = alloc.bwp.active
    rep.add("C4", int(alloc.a_d[:, :, ~act["D"], :].sum()), "D link on inactive subchannel")
    rep.add("C4", int(alloc.a_m[:, :, ~act["M"], :].sum()), "M link on inactive subchannel")
    rep.add("C4", int(alloc.a_d[..., ~grid.tn_dl_mask("D")].sum()), "D link outside downlink subframes")
    rep.add("C4", int(alloc.a_m[..., ~grid.tn_dl_mask("M")].sum()), "M link outside downlink subframes")
    rep.add("C7", int(alloc.b_m[:, ~act["M"], :].sum()), "satellite M link on inactive subchannel")
    rep.add("C7", int(alloc.b_s[:, ~act["S"], :].sum()), "satellite S link on inactive subchannel")
    rep.add("C5", int((alloc.a_d.sum(axis=1) > 1).sum() + (alloc.a_m.sum(axis=1) > 1).sum()),
            "AP serves several UEs on one RB")
    rep.add("C6", int((alloc.a_d.sum(axis=0) > 1).sum()), "D UE served by several APs on one RB")
    rep.add("C8", int((alloc.b_m.sum(axis=0) > 1).sum() + (alloc.b_s.sum(axis=0) > 1).sum()),
            "satellite serves several UEs on one RB")
    rep.add("C9", int(((alloc.a_m.sum(axis=0) + alloc.b_m) > 1).sum()), "M UE served by several servers on one RB")
    ok, ap_slack, sat_slack = check_power_budgets(alloc, grid, phy)
    rep.add("C11", int((ap_slack < -1e-9 * phy.p_max_ap).sum()), "AP budget exceeded")
    rep.add("C12", int((sat_slack < -1e-9 * phy.p_max_sat).sum()), "satellite budget exceeded")
    wd, wm = steering.omega_d, steering.omega_m
    bad = int((wd < -tol).sum() + (wm < -tol).sum())
    if wd.size:
        bad += int((np.abs(wd.sum(axis=0) - 1) > 1e-8).sum())
    if wm.size:
        bad += int((wm.sum(axis=0) > 1 + 1e-8).sum())
    rep.add("C13", bad, "steering weights")
    return rep


def check_service(rep: ValidationReport, evaluation, caps: Optional[Dict[str, float]] = None) -> ValidationReport:
    """Append measured service violations from a replay :class:`Evaluation`."""
    rep.add("C10", int((~evaluation.rates.d_sinr_ok).sum()), "D RB below SINR floor")
    rep.add("C14", int((~evaluation.d_ok).sum()), "D subframe requirement missed")
    if caps is not None:
        from ..queueing import cap_violations

        cv = cap_violations(evaluation.history, caps)
        rep.add("C15", cv["tn"] + cv["sat_m"], "M queue cap exceeded")
        rep.add("C16", cv["sat_s"], "S queue cap exceeded")
    return rep
