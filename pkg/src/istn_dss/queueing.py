"""Traffic steering, queue evolution and the congestion objective.

Internal unit is bits.  Reports convert with ``BITS_PER_MB``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .grid import GridConfig
from .kernels import queue_replay

BITS_PER_MB = 8e6


@dataclass
class TrafficTrace:
    """Arrivals in bits: D per subframe, M and S per frame.

    Arrays span consecutive cycles starting at cycle 0 (the warm-up cycle whose
    history seeds the first prediction).
    """

    d: np.ndarray  # (K_D, n_cycles_total * N_SF)
    m: np.ndarray  # (K_M, n_cycles_total * N_TF)
    s: np.ndarray  # (K_S, n_cycles_total * N_TF)

    def __post_init__(self):
        for a in (self.d, self.m, self.s):
            if np.any(a < 0):
                raise ValueError("arrivals must be nonnegative")

    def cycle(self, c: int, grid: GridConfig) -> "TrafficTrace":
        nsf, ntf = grid.n_subframes, grid.n_frames_per_cycle
        return TrafficTrace(
            self.d[:, c * nsf:(c + 1) * nsf],
            self.m[:, c * ntf:(c + 1) * ntf],
            self.s[:, c * ntf:(c + 1) * ntf],
        )

    def scaled(self, factor: float) -> "TrafficTrace":
        return TrafficTrace(self.d * factor, self.m * factor, self.s * factor)


@dataclass
class SteeringWeights:
    """Combined steering fractions.

    ``omega_d[l, k]`` sums to one over APs for every D flow; ``omega_m[l, k]``
    sums to at most one, the remainder going to the satellite.
    """

    omega_d: np.ndarray  # (L, K_D)
    omega_m: np.ndarray  # (L, K_M)

    def check(self, tol: float = 1e-9) -> None:
        if np.any(self.omega_d < -tol) or np.any(self.omega_m < -tol):
            raise ValueError("steering weights must be nonnegative")
        if self.omega_d.size and np.any(np.abs(self.omega_d.sum(axis=0) - 1.0) > tol):
            raise ValueError("D steering weights must sum to one per flow")
        if np.any(self.omega_m.sum(axis=0) > 1.0 + tol):
            raise ValueError("M steering weights sum above one")

    @property
    def sat_share(self) -> np.ndarray:
        return np.clip(1.0 - self.omega_m.sum(axis=0), 0.0, 1.0)

    @classmethod
    def uniform(cls, n_ap: int, k_d: int, k_m: int, sat_share: float = 0.0):
        return cls(
            np.full((n_ap, k_d), 1.0 / n_ap), np.full((n_ap, k_m), (1.0 - sat_share) / n_ap)
        )


@dataclass
class NodeArrivals:
    d: np.ndarray       # (L, K_D, N_SF)
    m_tn: np.ndarray    # (L, K_M, N_TF)
    m_sat: np.ndarray   # (K_M, N_TF)
    s: np.ndarray       # (K_S, N_TF)


def steer_arrivals(trace: TrafficTrace, weights: SteeringWeights) -> NodeArrivals:
    """Split one cycle of flow arrivals across APs and the satellite."""
    weights.check()
    m_tn = weights.omega_m[:, :, None] * trace.m[None]
    # satellite share as the exact remainder keeps per-flow conservation tight
    m_sat = trace.m - m_tn.sum(axis=0)
    return NodeArrivals(
        d=weights.omega_d[:, :, None] * trace.d[None],
        m_tn=m_tn,
        m_sat=np.maximum(m_sat, 0.0),
        s=trace.s.copy(),
    )


@dataclass
class QueueState:
    tn: np.ndarray      # (L, K_M)
    sat_m: np.ndarray   # (K_M,)
    sat_s: np.ndarray   # (K_S,)

    @classmethod
    def zeros(cls, n_ap: int, k_m: int, k_s: int) -> "QueueState":
        return cls(np.zeros((n_ap, k_m)), np.zeros(k_m), np.zeros(k_s))

    def copy(self) -> "QueueState":
        return QueueState(self.tn.copy(), self.sat_m.copy(), self.sat_s.copy())

    def total(self) -> float:
        return float(self.tn.sum() + self.sat_m.sum() + self.sat_s.sum())


def inject_and_step(q, arrivals, served, n_x: int, per_frame: int):
    """One queue update at 1-based RB-time ``n_x``.

    Arrivals enter only on the first RB-time of a frame.
    """
    q = np.asarray(q, dtype=float)
    lam = np.asarray(arrivals, dtype=float) if (n_x - 1) % per_frame == 0 else 0.0
    return np.maximum(0.0, q + lam - np.asarray(served, dtype=float))


@dataclass
class QueueHistory:
    """Queue lengths after each RB-time of a cycle."""

    tn: np.ndarray      # (L, K_M, N_M)
    sat_m: np.ndarray   # (K_M, N_M)
    sat_s: np.ndarray   # (K_S, N_S)

    def final(self) -> QueueState:
        return QueueState(self.tn[..., -1].copy(), self.sat_m[:, -1].copy(), self.sat_s[:, -1].copy())

    def at(self, n_m: int, grid: GridConfig) -> QueueState:
        """State after M RB-time ``n_m`` (0-based); S sampled at the same instant."""
        ratio = grid.rbs_per_subframe("M") // grid.rbs_per_subframe("S")
        if (n_m + 1) % ratio:
            raise ValueError("S queues are only defined at S RB boundaries")
        return QueueState(
            self.tn[..., n_m].copy(), self.sat_m[:, n_m].copy(), self.sat_s[:, (n_m + 1) // ratio - 1].copy()
        )

    def frame_totals(self, grid: GridConfig) -> np.ndarray:
        """System queue at the end of each frame, bits."""
        pm = 10 * grid.rbs_per_subframe("M")
        ps = 10 * grid.rbs_per_subframe("S")
        tot = self.tn.sum(axis=(0, 1))[pm - 1::pm] + self.sat_m.sum(axis=0)[pm - 1::pm]
        return tot + self.sat_s.sum(axis=0)[ps - 1::ps]


def replay_queues(
    state: QueueState,
    arrivals: NodeArrivals,
    served_tn,
    served_sat_m,
    served_s,
    grid: GridConfig,
) -> QueueHistory:
    """Evolve all queues through one cycle.

    ``served_*`` are bits offered per RB-time with shapes matching the history
    arrays.
    """
    pm = 10 * grid.rbs_per_subframe("M")
    ps = 10 * grid.rbs_per_subframe("S")
    L, K = state.tn.shape
    tn = queue_replay(state.tn.ravel(), arrivals.m_tn.reshape(L * K, -1), served_tn.reshape(L * K, -1), pm)
    sm = queue_replay(state.sat_m, arrivals.m_sat, served_sat_m, pm)
    ss = queue_replay(state.sat_s, arrivals.s, served_s, ps)
    return QueueHistory(tn.reshape(L, K, -1), sm, ss)


def objective(hist: QueueHistory) -> float:
    """Mean system queue length per RB-time, bits."""
    n_m = hist.sat_m.shape[-1] if hist.sat_m.size else hist.tn.shape[-1]
    n_s = hist.sat_s.shape[-1]
    val = 0.0
    if hist.tn.size:
        val += hist.tn.sum() / n_m
    if hist.sat_m.size:
        val += hist.sat_m.sum() / n_m
    if hist.sat_s.size:
        val += hist.sat_s.sum() / n_s
    return float(val)


def d_latency_check(d_node_arrivals, d_rates, grid: GridConfig, rtol: float = 1e-9):
    """Per-subframe D service check.

    Returns the pass mask (L, K_D, N_SF), the unserved bits per entry and the
    unserved fraction of all D arrivals.
    """
    cap = grid.rb_duration("D") * np.asarray(d_rates)
    lam = np.asarray(d_node_arrivals)
    unserved = np.maximum(0.0, lam - cap)
    ok = cap >= lam * (1 - rtol) - 1e-9
    unserved = np.where(ok, 0.0, unserved)
    tot = lam.sum()
    frac = float(unserved.sum() / tot) if tot > 0 else 0.0
    return ok, unserved, frac


def cap_violations(hist: QueueHistory, caps: Dict[str, float], tol: float = 1e-6):
    """Count RB-times where per-node queue sums exceed their caps."""
    out = {
        "tn": int((hist.tn.sum(axis=1) > caps["tn"] * (1 + tol)).sum()),
        "sat_m": int((hist.sat_m.sum(axis=0) > caps["sat_m"] * (1 + tol)).sum()),
        "sat_s": int((hist.sat_s.sum(axis=0) > caps["sat_s"] * (1 + tol)).sum()),
    }
    return out


# ---------------------------------------------------------------------------
# synthetic traffic and trace files


@dataclass(frozen=True)
class TrafficSpec:
    """Mean arrivals in bits per period: D per DL subframe, M and S per frame.

    ``burstiness`` is the coefficient of variation of gamma-distributed
    arrivals; zero gives deterministic traffic.
    """

    d_mean_bits: float = 1.5e3
    m_mean_bits: float = 4.0e5
    s_mean_bits: float = 1.0e5
    burstiness: float = 0.5
    d_burstiness: Optional[float] = None

    def scaled(self, f: float) -> "TrafficSpec":
        return TrafficSpec(
            self.d_mean_bits * f, self.m_mean_bits * f, self.s_mean_bits * f, self.burstiness, self.d_burstiness
        )


def _draw(rng, mean, cv, shape):
    if cv <= 0 or mean <= 0:
        return np.full(shape, float(mean))
    k = 1.0 / cv ** 2
    return rng.gamma(k, mean / k, size=shape)


def generate_traffic(
    spec: TrafficSpec,
    k: Dict[str, int],
    grid: GridConfig,
    n_cycles_total: int,
    rng: np.random.Generator,
    flow_scale: Optional[Dict[str, np.ndarray]] = None,
) -> TrafficTrace:
    """Synthetic arrivals for cycles ``0..n_cycles_total-1``.

    D arrivals fall only in terrestrial downlink subframes.  ``flow_scale``
    optionally multiplies each flow's mean.
    """
    nsf = grid.n_subframes * n_cycles_total
    ntf = grid.n_frames_per_cycle * n_cycles_total
    fs = flow_scale or {}
    cv_d = spec.burstiness if spec.d_burstiness is None else spec.d_burstiness
    d = _draw(rng, spec.d_mean_bits, cv_d, (k["D"], nsf))
    d *= np.tile(grid.dl_subframe_mask(), n_cycles_total)[None, :]
    m = _draw(rng, spec.m_mean_bits, spec.burstiness, (k["M"], ntf))
    s = _draw(rng, spec.s_mean_bits, spec.burstiness, (k["S"], ntf))
    if "D" in fs:
        d *= np.asarray(fs["D"])[:, None]
    if "M" in fs:
        m *= np.asarray(fs["M"])[:, None]
    if "S" in fs:
        s *= np.asarray(fs["S"])[:, None]
    return TrafficTrace(d, m, s)


def write_trace(trace: TrafficTrace, path) -> None:
    """Columnar text: ``flow period bits`` with flow ids like ``D0``, ``M1``."""
    with open(path, "w") as fh:
        fh.write("flow period bits\n")
        for tag, arr in (("D", trace.d), ("M", trace.m), ("S", trace.s)):
            for (k, p), b in np.ndenumerate(arr):
                fh.write(f"{tag}{k} {p} {b:.6f}\n")


def read_trace(path, k: Dict[str, int], grid: GridConfig, n_cycles_total: int) -> TrafficTrace:
    nsf = grid.n_subframes * n_cycles_total
    ntf = grid.n_frames_per_cycle * n_cycles_total
    arrs = {"D": np.zeros((k["D"], nsf)), "M": np.zeros((k["M"], ntf)), "S": np.zeros((k["S"], ntf))}
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split() != ["flow", "period", "bits"]:
        raise ValueError(f"{path}: expected header 'flow period bits'")
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        flow, period, bits = line.split()
        tag, idx = flow[0], int(flow[1:])
        a = arrs.get(tag)
        if a is None or idx >= a.shape[0]:
            raise ValueError(f"{path}:{ln}: unknown flow {flow}")
        p = int(period)
        if p < a.shape[1]:
            a[idx, p] = float(bits)
    return TrafficTrace(arrs["D"], arrs["M"], arrs["S"])
