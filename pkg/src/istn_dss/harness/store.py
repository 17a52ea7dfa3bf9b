"""Decision files (``.npz``) and columnar text tables."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..grid import BwpPlan
from ..phy import ASSOC_FIELDS, POWER_FIELDS, AllocationState
from ..planner import CycleDecision
from ..queueing import QueueState, SteeringWeights


def save_decision(path, dec: CycleDecision, meta: dict, q0: QueueState = None) -> Path:
    path = Path(path)
    arrs = {f: getattr(dec.alloc, f) for f in POWER_FIELDS + ASSOC_FIELDS}
    arrs.update({f"bwp_{x}": v for x, v in dec.alloc.bwp.active.items()})
    arrs["omega_d"] = dec.steering.omega_d
    arrs["omega_m"] = dec.steering.omega_m
    if q0 is not None:
        arrs.update(q0_tn=q0.tn, q0_sat_m=q0.sat_m, q0_sat_s=q0.sat_s)
    meta = dict(meta, algorithm=dec.algorithm)
    arrs["meta"] = np.array(json.dumps(meta))
    np.savez_compressed(path, **arrs)
    return path


def load_decision(path):
    """Returns ``(decision, meta, q0 or None)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        bwp = BwpPlan({x: z[f"bwp_{x}"].astype(bool) for x in ("D", "M", "S")})
        alloc = AllocationState(bwp=bwp, **{f: z[f] for f in POWER_FIELDS},
                                **{f: z[f].astype(bool) for f in ASSOC_FIELDS})
        st = SteeringWeights(z["omega_d"], z["omega_m"])
        q0 = QueueState(z["q0_tn"], z["q0_sat_m"], z["q0_sat_s"]) if "q0_tn" in z.files else None
    return CycleDecision(bwp=bwp, steering=st, alloc=alloc, algorithm=meta.get("algorithm", "")), meta, q0


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    return str(v)


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Whitespace-aligned columns with a header row."""
    cells = [list(map(str, header))] + [[_fmt(v) for v in r] for r in rows]
    width = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, width)).rstrip() for r in cells) + "\n"
