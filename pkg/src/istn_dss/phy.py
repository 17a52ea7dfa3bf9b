"""SINR, interference and achievable-rate evaluation for a cycle allocation.

Tensor layouts (cycle-local, 0-based indices):

``p_d``  (L, K_D, Vbar_D, N_D)   terrestrial power on D resource blocks
``p_m``  (L, K_M, Vbar_M, N_M)   terrestrial power on M resource blocks
``p0_m`` (K_M, Vbar_M, N_M)      satellite power on M resource blocks
``p0_s`` (K_S, Vbar_S, N_S)      satellite power on S resource blocks

Associations share those shapes as boolean tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Tuple

import numpy as np
from scipy.special import erfc, erfcinv

from .channel import ChannelSet
from .grid import BwpPlan, GridConfig
from .kernels import cross_interference

LN2 = np.log(2.0)
POWER_FIELDS = ("p_d", "p_m", "p0_m", "p0_s")
ASSOC_FIELDS = ("a_d", "a_m", "b_m", "b_s")


@dataclass(frozen=True)
class PhyParams:
    p_max_ap: float = 10 ** (34 / 10) * 1e-3
    p_max_sat: float = 10 ** (36 / 10) * 1e-3
    gamma0_d_db: float = 5.0
    error_prob: float = 1e-5

    @property
    def gamma0_d(self) -> float:
        return 10 ** (self.gamma0_d_db / 10)


@dataclass
class AllocationState:
    bwp: BwpPlan
    p_d: np.ndarray
    p_m: np.ndarray
    p0_m: np.ndarray
    p0_s: np.ndarray
    a_d: np.ndarray
    a_m: np.ndarray
    b_m: np.ndarray
    b_s: np.ndarray

    @classmethod
    def zeros(cls, grid: GridConfig, n_ap: int, k: Dict[str, int], bwp: BwpPlan = None):
        shapes = {
            "p_d": (n_ap, k["D"], grid.cap("D"), grid.n_rb_times("D")),
            "p_m": (n_ap, k["M"], grid.cap("M"), grid.n_rb_times("M")),
            "p0_m": (k["M"], grid.cap("M"), grid.n_rb_times("M")),
            "p0_s": (k["S"], grid.cap("S"), grid.n_rb_times("S")),
        }
        arrs = {f: np.zeros(s) for f, s in shapes.items()}
        for pf, af in zip(POWER_FIELDS, ASSOC_FIELDS):
            arrs[af] = np.zeros(shapes[pf], dtype=bool)
        return cls(bwp=bwp if bwp is not None else BwpPlan.empty(grid), **arrs)

    @classmethod
    def from_powers(cls, bwp: BwpPlan, p_d, p_m, p0_m, p0_s):
        """Associations are the support of the given powers."""
        return cls(bwp, p_d, p_m, p0_m, p0_s, p_d > 0, p_m > 0, p0_m > 0, p0_s > 0)

    def copy(self) -> "AllocationState":
        kw = {f: getattr(self, f).copy() for f in POWER_FIELDS + ASSOC_FIELDS}
        return AllocationState(bwp=self.bwp.copy(), **kw)

    def effective(self, field: str) -> np.ndarray:
        """Power gated by its association."""
        idx = POWER_FIELDS.index(field)
        return np.where(getattr(self, ASSOC_FIELDS[idx]), getattr(self, field), 0.0)

    @property
    def n_ap(self) -> int:
        return self.p_d.shape[0]

    def equals(self, other: "AllocationState") -> bool:
        same = all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in POWER_FIELDS + ASSOC_FIELDS
        )
        return same and all(
            np.array_equal(self.bwp.active[x], other.bwp.active[x]) for x in self.bwp.active
        )


# ---------------------------------------------------------------------------
# finite-blocklength penalty


def q_inverse(p: float) -> float:
    """Inverse Gaussian tail function, erfcinv seed plus two Newton steps."""
    if not 0 < p < 1:
        raise ValueError("probability must lie in (0, 1)")
    x = float(np.sqrt(2.0) * erfcinv(2.0 * p))
    for _ in range(2):
        f = 0.5 * erfc(x / np.sqrt(2.0)) - p
        x += f / (np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi))
    return x


def dispersion_penalty(grid: GridConfig, error_prob: float) -> float:
    """Short-packet rate penalty coefficient chi_D in bit/s."""
    w, t = grid.spacing("D"), grid.rb_duration("D")
    return float(np.sqrt(w / t) * q_inverse(error_prob) / LN2)


# ---------------------------------------------------------------------------
# interference terms, all in W


def ici(alloc: AllocationState, chans: ChannelSet, x: str) -> np.ndarray:
    """Inter-cell interference per (l, k, v, n) for terrestrial service ``x``."""
    p = alloc.effective("p_d" if x == "D" else "p_m")
    tx = p.sum(axis=1)
    return cross_interference(tx, chans.tn[x], chans._fidx(x))


def isyi_tn(alloc: AllocationState, chans: ChannelSet) -> np.ndarray:
    """Satellite interference at each M UE on each M RB, (K_M, V, N)."""
    tx0 = alloc.effective("p0_m").sum(axis=0)
    return tx0[None, :, :] * chans.sat_rb("M")


def isyi_sat(alloc: AllocationState, chans: ChannelSet) -> np.ndarray:
    """Terrestrial interference at each M UE on each M RB, (K_M, V, N)."""
    tx = alloc.effective("p_m").sum(axis=1)  # (L, V, N)
    return np.einsum("lvn,lkvn->kvn", tx, chans.tn_rb("M"))


def _own(alloc, chans, x):
    if x == "D":
        return alloc.effective("p_d") * chans.tn_rb("D")
    return alloc.effective("p_m") * chans.tn_rb("M")


def sinr_d(alloc: AllocationState, chans: ChannelSet) -> np.ndarray:
    return _own(alloc, chans, "D") / (ici(alloc, chans, "D") + chans.noise["D"])


def sinr_m_tn(alloc: AllocationState, chans: ChannelSet, isyi_scale: float = 1.0) -> np.ndarray:
    den = ici(alloc, chans, "M") + isyi_scale * isyi_tn(alloc, chans)[None] + chans.noise["M"]
    return _own(alloc, chans, "M") / den


def sinr_m_sat(alloc: AllocationState, chans: ChannelSet, isyi_scale: float = 1.0) -> np.ndarray:
    sig = alloc.effective("p0_m") * chans.sat_rb("M")
    return sig / (isyi_scale * isyi_sat(alloc, chans) + chans.noise["M"])


def snr_s(alloc: AllocationState, chans: ChannelSet) -> np.ndarray:
    return alloc.effective("p0_s") * chans.sat_rb("S") / chans.noise["S"]


# ---------------------------------------------------------------------------
# rates in bit/s


@dataclass
class ServiceRates:
    d: np.ndarray        # (L, K_D, N_SF)
    m_tn: np.ndarray     # (L, K_M, N_M)
    m_sat: np.ndarray    # (K_M, N_M)
    s: np.ndarray        # (K_S, N_S)
    d_sinr_ok: np.ndarray  # (L, K_D, V, N_D): assigned RBs meeting the SINR floor

    def served_bits(self, grid: GridConfig):
        return (
            self.m_tn * grid.rb_duration("M"),
            self.m_sat * grid.rb_duration("M"),
            self.s * grid.rb_duration("S"),
        )


def d_rates(alloc: AllocationState, chans: ChannelSet, grid: GridConfig, params: PhyParams):
    """Per-subframe D rates (L, K_D, N_SF) and the SINR-floor mask."""
    g = sinr_d(alloc, chans)
    n_rb = grid.rbs_per_subframe("D")
    L, K, V, N = g.shape
    shannon = grid.spacing("D") * np.log2(1.0 + g).sum(axis=2)  # (L, K, N)
    shannon = shannon.reshape(L, K, N // n_rb, n_rb).sum(axis=3)
    count = alloc.a_d.sum(axis=2).reshape(L, K, N // n_rb, n_rb).sum(axis=3)
    chi = dispersion_penalty(grid, params.error_prob)
    rate = np.maximum(0.0, shannon - chi * np.sqrt(count))
    ok = ~alloc.a_d | (g >= params.gamma0_d * (1 - 1e-9))
    return rate, ok


def rate_d_subframe(alloc, chans, grid, params, l: int, k: int, s: int) -> float:
    return float(d_rates(alloc, chans, grid, params)[0][l, k, s])


def m_rates(alloc: AllocationState, chans: ChannelSet, grid: GridConfig, isyi_scale: float = 1.0):
    """Aggregated M rates: terrestrial (L, K_M, N_M) and satellite (K_M, N_M)."""
    w = grid.spacing("M")
    tn = w * np.log2(1.0 + sinr_m_tn(alloc, chans, isyi_scale)).sum(axis=2)
    sat = w * np.log2(1.0 + sinr_m_sat(alloc, chans, isyi_scale)).sum(axis=1)
    return tn, sat


def s_rates(alloc: AllocationState, chans: ChannelSet, grid: GridConfig):
    return grid.spacing("S") * np.log2(1.0 + snr_s(alloc, chans)).sum(axis=1)


def evaluate_rates(alloc, chans, grid, params, isyi_scale: float = 1.0) -> ServiceRates:
    d, ok = d_rates(alloc, chans, grid, params)
    tn, sat = m_rates(alloc, chans, grid, isyi_scale)
    return ServiceRates(d, tn, sat, s_rates(alloc, chans, grid), ok)


# scalar accessors


def ici_power(alloc, chans, x: str, l: int, k: int, v: int, n: int) -> float:
    return float(ici(alloc, chans, x)[l, k, v, n])


def rate_m(alloc, chans, grid, server, k: int, v: int, n: int) -> float:
    """Per-RB M rate; ``server`` is an AP index or ``"sat"``."""
    w = grid.spacing("M")
    if server == "sat":
        return float(w * np.log2(1.0 + sinr_m_sat(alloc, chans)[k, v, n]))
    return float(w * np.log2(1.0 + sinr_m_tn(alloc, chans)[server, k, v, n]))


def rate_s(alloc, chans, grid, k: int, v: int, n: int) -> float:
    return float(grid.spacing("S") * np.log2(1.0 + snr_s(alloc, chans)[k, v, n]))


# ---------------------------------------------------------------------------
# power budgets


def slot_powers(alloc: AllocationState, grid: GridConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Total transmit power per D time slot: APs (L, N_D) and satellite (N_D,)."""
    n_d = grid.n_rb_times("D")
    r_m = grid.rbs_per_subframe("D") // grid.rbs_per_subframe("M")
    r_s = grid.rbs_per_subframe("D") // grid.rbs_per_subframe("S")
    t = np.arange(n_d)
    ap = alloc.effective("p_d").sum(axis=(1, 2)) + alloc.effective("p_m").sum(axis=(1, 2))[:, t // r_m]
    sat = alloc.effective("p0_m").sum(axis=(0, 1))[t // r_m] + alloc.effective("p0_s").sum(
        axis=(0, 1)
    )[t // r_s]
    return ap, sat


def check_power_budgets(alloc: AllocationState, grid: GridConfig, params: PhyParams, rtol=1e-9):
    """Return feasibility and per-slot slacks ``(ap_slack (L, N_D), sat_slack (N_D,))``."""
    ap, sat = slot_powers(alloc, grid)
    ap_slack = params.p_max_ap - ap
    sat_slack = params.p_max_sat - sat
    ok = bool(
        np.all(ap_slack >= -rtol * params.p_max_ap) and np.all(sat_slack >= -rtol * params.p_max_sat)
    )
    return ok, ap_slack, sat_slack


def scale_to_budgets(alloc: AllocationState, grid: GridConfig, params: PhyParams) -> AllocationState:
    """Shrink powers uniformly per server and slot wherever a budget is exceeded.

    M powers span two D slots (and S powers four), so their factor is the
    smallest over the slots they cover.
    """
    out = alloc.copy()
    ap, sat = slot_powers(alloc, grid)
    r_m = grid.rbs_per_subframe("D") // grid.rbs_per_subframe("M")
    r_s = grid.rbs_per_subframe("D") // grid.rbs_per_subframe("S")
    with np.errstate(divide="ignore", invalid="ignore"):
        f_ap = np.where(ap > params.p_max_ap, params.p_max_ap / ap, 1.0)
        f_sat = np.where(sat > params.p_max_sat, params.p_max_sat / sat, 1.0)
    f_ap_m = f_ap.reshape(f_ap.shape[0], -1, r_m).min(axis=2)
    f_sat_m = f_sat.reshape(-1, r_m).min(axis=1)
    f_sat_s = f_sat.reshape(-1, r_s).min(axis=1)
    out.p_d = out.p_d * f_ap[:, None, None, :]
    out.p_m = out.p_m * f_ap_m[:, None, None, :]
    out.p0_m = out.p0_m * f_sat_m[None, None, :]
    out.p0_s = out.p0_s * f_sat_s[None, None, :]
    return out


def with_bwp(alloc: AllocationState, bwp: BwpPlan) -> AllocationState:
    return replace(alloc, bwp=bwp)
