"""Synthetic Rician channel gains for the real environment and its digital twin.

Both environments share the same "virtual" NLoS draw per link, subchannel and
frame.  The real environment mixes it with an independent error term:
``real = sqrt(xi) * virtual + sqrt(1 - xi) * noise``.  The twin uses the
virtual component alone and is evaluated at predicted rather than realized
positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .grid import GridConfig

SPEED_OF_LIGHT = 299_792_458.0

# substream identifiers for SeedSequence keys
STREAM_CHANNEL = 1
STREAM_TRAFFIC = 2
STREAM_MOBILITY = 3
_NLOS_VIRTUAL = 11
_NLOS_ERROR = 12


def substream(root_seed: int, *key: int) -> np.random.Generator:
    """Independent generator addressed by ``(root_seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), *map(int, key)]))


@dataclass(frozen=True)
class LinkParams:
    path_loss: float
    k_factor: float
    los_component: complex = 1.0
    virtual_nlos_component: complex = 0.0

    def __post_init__(self):
        if not 0 < self.path_loss <= 1:
            raise ValueError("path loss must be a linear gain in (0, 1]")
        if self.k_factor < 0:
            raise ValueError("K-factor must be nonnegative")

    @property
    def rho(self) -> float:
        if np.isinf(self.k_factor):
            return 1.0
        return self.k_factor / (self.k_factor + 1.0)


def rician_coefficient(p: LinkParams, nlos: complex) -> complex:
    return np.sqrt(p.path_loss) * (
        np.sqrt(p.rho) * p.los_component + np.sqrt(1.0 - p.rho) * nlos
    )


def couple_real_nlos(virtual_nlos, xi: float, noise):
    if not 0 < xi <= 1:
        raise ValueError("coupling factor must lie in (0, 1]")
    return np.sqrt(xi) * np.asarray(virtual_nlos) + np.sqrt(1.0 - xi) * np.asarray(noise)


@dataclass(frozen=True)
class DtCoupling:
    xi: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.xi <= 1:
            raise ValueError("coupling factor must lie in (0, 1]")


@dataclass(frozen=True)
class ChannelParams:
    """Large-scale model parameters. Gains and losses in dB, lengths in m."""

    carrier_hz: float = 3.4e9
    tn_pl0_db: float = 43.1
    tn_exponent: float = 3.0
    tn_d0_m: float = 1.0
    tn_gain_db: float = 0.0
    sat_gain_db: float = 30.0
    k_tn_db: float = 5.0
    k_sat_db: float = 10.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 7.0

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def noise_power(params: ChannelParams, bandwidth_hz: float) -> float:
    """Thermal noise plus noise figure over ``bandwidth_hz``, in W."""
    return float(db2lin(params.noise_psd_dbm_hz + params.noise_figure_db) * 1e-3 * bandwidth_hz)


def tn_path_loss(params: ChannelParams, d):
    d = np.maximum(np.asarray(d, dtype=float), params.tn_d0_m)
    pl_db = params.tn_pl0_db + 10.0 * params.tn_exponent * np.log10(d / params.tn_d0_m)
    return db2lin(params.tn_gain_db - pl_db)


def sat_path_loss(params: ChannelParams, d):
    fspl = (4.0 * np.pi * np.asarray(d, dtype=float) / params.wavelength) ** 2
    return db2lin(params.sat_gain_db) / fspl


@dataclass(frozen=True)
class CycleGeometry:
    """Node positions for every frame of one cycle.

    ``ue_pos[x]`` has shape ``(K_x, N_TF, 3)``; ``sat_pos`` has shape ``(N_TF, 3)``.
    """

    ap_pos: np.ndarray
    ue_pos: Dict[str, np.ndarray]
    sat_pos: np.ndarray

    @property
    def n_ap(self) -> int:
        return self.ap_pos.shape[0]

    def n_ue(self, x: str) -> int:
        return self.ue_pos[x].shape[0]


@dataclass(frozen=True)
class ChannelSet:
    """Per-frame power gains.

    ``tn[x]`` has shape ``(L, K_x, Vbar_x, N_TF)`` for ``x`` in D, M; ``sat[x]``
    has shape ``(K_x, Vbar_x, N_TF)`` for ``x`` in M, S.  Gains are constant
    within a frame; :meth:`tn_rb` and :meth:`sat_rb` expand to RB-times.
    """

    tn: Dict[str, np.ndarray]
    sat: Dict[str, np.ndarray]
    noise: Dict[str, float]
    environment: str = "real"
    _frame_idx: Dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.environment not in ("real", "twin", "mixed"):
            raise ValueError(f"unknown environment tag {self.environment!r}")
        for arr in list(self.tn.values()) + list(self.sat.values()):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError("channel gains must be finite and nonnegative")

    def bind_grid(self, grid: GridConfig) -> "ChannelSet":
        for x in ("D", "M", "S"):
            self._frame_idx[x] = grid.frame_of(x)
        return self

    def _fidx(self, x: str) -> np.ndarray:
        if x not in self._frame_idx:
            raise RuntimeError("call bind_grid before expanding to RB-times")
        return self._frame_idx[x]

    def tn_rb(self, x: str) -> np.ndarray:
        return self.tn[x][..., self._fidx(x)]

    def sat_rb(self, x: str) -> np.ndarray:
        return self.sat[x][..., self._fidx(x)]

    def with_environment(self, tag: str) -> "ChannelSet":
        out = ChannelSet(dict(self.tn), dict(self.sat), dict(self.noise), tag)
        out._frame_idx.update(self._frame_idx)
        return out

    def equals(self, other: "ChannelSet") -> bool:
        return all(np.array_equal(self.tn[x], other.tn[x]) for x in self.tn) and all(
            np.array_equal(self.sat[x], other.sat[x]) for x in self.sat
        )


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a - b, axis=-1)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex normal draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _nlos_draws(seed: int, stream: int, cycle: int, shapes: Dict[str, tuple]):
    """One draw per link/subchannel/frame for every link class, keyed by frame."""
    out = {}
    for cls_id, (name, shape) in enumerate(sorted(shapes.items())):
        n_frames = shape[-1]
        frames = [
            _cn(substream(seed, STREAM_CHANNEL, stream, cycle, e, cls_id), shape[:-1])
            for e in range(n_frames)
        ]
        out[name] = np.stack(frames, axis=-1)
    return out


def _gains(pl, k_lin, los_phase, nlos):
    rho = 1.0 if np.isinf(k_lin) else k_lin / (k_lin + 1.0)
    coef = np.sqrt(pl) * (np.sqrt(rho) * np.exp(1j * los_phase) + np.sqrt(1.0 - rho) * nlos)
    return np.abs(coef) ** 2


def _large_scale(geom: CycleGeometry, params: ChannelParams):
    """Path loss and LoS phase, per (link, frame), for every link class."""
    lam = params.wavelength
    out = {}
    for x in ("D", "M"):
        # (L, K, N_TF)
        d = _distances(geom.ap_pos[:, None, None, :], geom.ue_pos[x][None, :, :, :])
        out[("tn", x)] = (tn_path_loss(params, d), 2 * np.pi * d / lam)
    for x in ("M", "S"):
        d = _distances(geom.sat_pos[None, :, :], geom.ue_pos[x])  # (K, N_TF)
        out[("sat", x)] = (sat_path_loss(params, d), 2 * np.pi * d / lam)
    return out


def build_cycle_channels(
    geometry: CycleGeometry,
    cycle: int,
    coupling: DtCoupling,
    grid: GridConfig,
    params: Optional[ChannelParams] = None,
    twin_geometry: Optional[CycleGeometry] = None,
):
    """Real and twin channel sets for one cycle.

    Parameters
    ----------
    geometry : CycleGeometry
        Realized positions, used for the real environment.
    cycle : int
        Cycle ordinal; keys the random substreams.
    coupling : DtCoupling
        NLoS correlation between the two environments and the root seed.
    grid : GridConfig
    params : ChannelParams, optional
    twin_geometry : CycleGeometry, optional
        Predicted positions for the twin; defaults to ``geometry``.

    Returns
    -------
    real, twin : ChannelSet
    """
    params = params or ChannelParams()
    twin_geometry = twin_geometry or geometry
    if geometry.n_ap == 0 and sum(geometry.n_ue(x) for x in ("D", "M", "S")) == 0:
        raise ValueError("empty topology")
    n_tf = grid.n_frames_per_cycle
    shapes = {}
    for x in ("D", "M"):
        shapes[f"tn{x}"] = (geometry.n_ap, geometry.n_ue(x), grid.cap(x), n_tf)
    for x in ("M", "S"):
        shapes[f"sat{x}"] = (geometry.n_ue(x), grid.cap(x), n_tf)
    virtual = _nlos_draws(coupling.rng_seed, _NLOS_VIRTUAL, cycle, shapes)
    if coupling.xi < 1.0:
        err = _nlos_draws(coupling.rng_seed, _NLOS_ERROR, cycle, shapes)
        real_nlos = {k: couple_real_nlos(virtual[k], coupling.xi, err[k]) for k in shapes}
    else:
        real_nlos = virtual

    k_tn = float(db2lin(params.k_tn_db))
    k_sat = float(db2lin(params.k_sat_db))
    noise = {x: noise_power(params, grid.spacing(x)) for x in ("D", "M", "S")}

    def assemble(geom, nlos, tag):
        ls = _large_scale(geom, params)
        tn, sat = {}, {}
        for x in ("D", "M"):
            pl, ph = ls[("tn", x)]
            tn[x] = _gains(pl[:, :, None, :], k_tn, ph[:, :, None, :], nlos[f"tn{x}"])
        for x in ("M", "S"):
            pl, ph = ls[("sat", x)]
            sat[x] = _gains(pl[:, None, :], k_sat, ph[:, None, :], nlos[f"sat{x}"])
        return ChannelSet(tn, sat, dict(noise), tag).bind_grid(grid)

    return assemble(geometry, real_nlos, "real"), assemble(twin_geometry, virtual, "twin")


def dump_channels(chans: ChannelSet, path) -> None:
    """Write every gain as one row ``link v frame gain`` (v is 1-based)."""
    with open(path, "w") as fh:
        fh.write("link v frame gain\n")
        for x, arr in chans.tn.items():
            for (l, k, v, e), g in np.ndenumerate(arr):
                fh.write(f"tn{x}:{l}:{k} {v + 1} {e} {g:.12e}\n")
        for x, arr in chans.sat.items():
            for (k, v, e), g in np.ndenumerate(arr):
                fh.write(f"sat{x}:{k} {v + 1} {e} {g:.12e}\n")
