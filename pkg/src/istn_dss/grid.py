"""Multi-numerology resource grid, bandwidth-part plans and guard-band checks.

Services are keyed ``"D"`` (delay-critical), ``"M"`` (mixed, served by the
terrestrial network and the satellite) and ``"S"`` (satellite only).  Subchannel
indices are 1-based throughout the public API; array position ``i`` holds
subchannel ``i + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

SERVICES = ("D", "M", "S")
RB_BANDWIDTH_HZ = 180e3
DEFAULT_NUMEROLOGY = {"D": 2, "M": 1, "S": 0}


@dataclass(frozen=True)
class GridConfig:
    total_bandwidth_hz: float
    numerologies: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_NUMEROLOGY))
    n_frames_per_cycle: int = 5
    n_cycles: int = 20
    tn_dl_subframes: int = 6

    def __post_init__(self):
        mu = self.numerologies
        if set(mu) != set(SERVICES):
            raise ValueError(f"numerologies must cover {SERVICES}, got {sorted(mu)}")
        if not mu["D"] >= mu["M"] >= mu["S"] >= 0:
            raise ValueError("numerologies must satisfy mu_D >= mu_M >= mu_S >= 0")
        if self.total_bandwidth_hz <= 0:
            raise ValueError("total bandwidth must be positive")
        if self.n_frames_per_cycle < 1 or self.n_cycles < 1:
            raise ValueError("frame and cycle counts must be positive")
        if not 0 <= self.tn_dl_subframes <= 10:
            raise ValueError("tn_dl_subframes must lie in 0..10")
        if min(subchannel_caps(self)) < 1:
            raise ValueError(
                f"bandwidth {self.total_bandwidth_hz} Hz holds no subchannel of some service"
            )

    # per-service derived quantities
    def spacing(self, x: str) -> float:
        """Subchannel width in Hz."""
        return (2 ** self.numerologies[x]) * RB_BANDWIDTH_HZ

    def rb_duration(self, x: str) -> float:
        """RB duration in seconds."""
        return 2.0 ** (-self.numerologies[x]) * 1e-3

    def rbs_per_subframe(self, x: str) -> int:
        return 2 ** self.numerologies[x]

    @property
    def n_subframes(self) -> int:
        return 10 * self.n_frames_per_cycle

    def n_rb_times(self, x: str) -> int:
        """RB-time slots of service ``x`` in one cycle."""
        return self.rbs_per_subframe(x) * self.n_subframes

    def cap(self, x: str) -> int:
        return int(math.floor(self.total_bandwidth_hz / self.spacing(x) + 1e-9))

    @property
    def guard_d_m(self) -> float:
        return self.spacing("D") / 2.0

    @property
    def guard_m_s(self) -> float:
        return self.spacing("M") / 2.0

    # cycle-local index helpers, 0-based
    def frame_of(self, x: str) -> np.ndarray:
        """Frame (0-based, within the cycle) of every RB-time of service ``x``."""
        return np.arange(self.n_rb_times(x)) // (10 * self.rbs_per_subframe(x))

    def subframe_of(self, x: str) -> np.ndarray:
        return np.arange(self.n_rb_times(x)) // self.rbs_per_subframe(x)

    def dl_subframe_mask(self) -> np.ndarray:
        """True for subframes in which terrestrial downlink is active."""
        return (np.arange(self.n_subframes) % 10) < self.tn_dl_subframes

    def tn_dl_mask(self, x: str) -> np.ndarray:
        """Per RB-time of service ``x``: is terrestrial downlink active."""
        return self.dl_subframe_mask()[self.subframe_of(x)]


@dataclass(frozen=True)
class TimeIndex:
    t: int
    n_D: int
    n_M: int
    n_S: int
    c: int
    e: int
    s: int


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def time_indices(t: int, cfg: GridConfig) -> TimeIndex:
    """Map a 1-based slot ordinal to RB-time, cycle, frame and subframe ordinals."""
    if t < 1:
        raise ValueError("time slot ordinal must be >= 1")
    n_d = cfg.rbs_per_subframe("D")
    r_m = n_d // cfg.rbs_per_subframe("M")
    r_s = n_d // cfg.rbs_per_subframe("S")
    return TimeIndex(
        t=t,
        n_D=t,
        n_M=_ceil_div(t, r_m),
        n_S=_ceil_div(t, r_s),
        c=_ceil_div(t, n_d * cfg.n_subframes),
        e=_ceil_div(t, 10 * n_d),
        s=_ceil_div(t, n_d),
    )


def subchannel_caps(cfg: GridConfig) -> Tuple[int, int, int]:
    return tuple(cfg.cap(x) for x in SERVICES)  # type: ignore[return-value]


@dataclass(frozen=True)
class BwpPlan:
    """Activated-subchannel bitmaps, one boolean vector per service."""

    active: Dict[str, np.ndarray]

    @classmethod
    def empty(cls, cfg: GridConfig) -> "BwpPlan":
        return cls({x: np.zeros(cfg.cap(x), dtype=bool) for x in SERVICES})

    @classmethod
    def from_indices(cls, cfg: GridConfig, **idx) -> "BwpPlan":
        """Build from 1-based index lists, e.g. ``from_indices(cfg, D=[1], M=[4, 5])``."""
        plan = cls.empty(cfg)
        for x, ids in idx.items():
            for v in ids:
                plan.active[x][v - 1] = True
        return plan

    @classmethod
    def ordered_layout(cls, cfg: GridConfig, n_d: int, n_m: int, n_s: int) -> "BwpPlan":
        """Pack ``n_d`` D, then ``n_m`` M, then ``n_s`` S subchannels from the band edge."""
        plan = cls.empty(cfg)
        plan.active["D"][:n_d] = True
        m0 = 2 * n_d + 1 if n_d else 0
        plan.active["M"][m0:m0 + n_m] = True
        s0 = _s_start(n_d, n_m)
        plan.active["S"][s0:s0 + n_s] = True
        if plan.active["M"].sum() != n_m or plan.active["S"].sum() != n_s:
            raise ValueError(f"layout ({n_d},{n_m},{n_s}) exceeds the subchannel caps")
        return plan

    def indices(self, x: str) -> np.ndarray:
        """Active subchannels of ``x`` as 1-based indices."""
        return np.flatnonzero(self.active[x]) + 1

    def count(self, x: str) -> int:
        return int(self.active[x].sum())

    def bandwidth(self, cfg: GridConfig, x: str) -> float:
        return self.count(x) * cfg.spacing(x)

    def copy(self) -> "BwpPlan":
        return BwpPlan({x: v.copy() for x, v in self.active.items()})


def _s_start(n_d: int, n_m: int) -> int:
    """0-based position of the first S subchannel above an ordered D/M layout."""
    if n_m:
        top_m = (2 * n_d + 1 if n_d else 0) + n_m
        return 2 * top_m + 1
    return 4 * n_d + 2 if n_d else 0


def max_layout_s(cfg: GridConfig, n_d: int, n_m: int) -> int:
    """Largest S count fitting above an ordered layout with ``n_d`` D and ``n_m`` M."""
    s0 = _s_start(n_d, n_m)
    by_index = cfg.cap("S") - s0
    used = n_d * cfg.spacing("D") + n_m * cfg.spacing("M") + cfg.guard_d_m + cfg.guard_m_s
    by_bw = int(math.floor((cfg.total_bandwidth_hz - used) / cfg.spacing("S") + 1e-9))
    return max(0, min(by_index, by_bw))


def check_bwp_feasible(plan: BwpPlan, cfg: GridConfig) -> Tuple[bool, List[str]]:
    """Check ordering (C1, C2) and total-bandwidth (C3) constraints of a plan."""
    for x in SERVICES:
        if plan.active[x].shape != (cfg.cap(x),):
            raise ValueError(
                f"plan for {x} has shape {plan.active[x].shape}, expected ({cfg.cap(x)},)"
            )
    bd, bm, bs = (plan.active[x] for x in SERVICES)
    # prefix counts: cm[i] = active M among 1..i
    cm = np.concatenate([[0], np.cumsum(bm)])
    cs = np.concatenate([[0], np.cumsum(bs)])
    violations = []
    for v in np.flatnonzero(bd) + 1:
        hi_m = min(2 * v + 1, bm.size)
        hi_s = min(4 * v + 2, bs.size)
        if cm[hi_m] + cs[hi_s] > 0:
            violations.append(f"C1: D subchannel {v} overlaps M/S guard region")
    for v in np.flatnonzero(bm) + 1:
        if cs[min(2 * v + 1, bs.size)] > 0:
            violations.append(f"C2: M subchannel {v} overlaps S guard region")
    used = sum(plan.count(x) * cfg.spacing(x) for x in SERVICES)
    if used + cfg.guard_d_m + cfg.guard_m_s > cfg.total_bandwidth_hz * (1 + 1e-12):
        violations.append(f"C3: {used:.0f} Hz plus guards exceeds {cfg.total_bandwidth_hz:.0f} Hz")
    return not violations, violations
