"""Digital-twin prediction of positions, traffic and channels one cycle ahead."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .channel import ChannelParams, ChannelSet, CycleGeometry, DtCoupling, build_cycle_channels
from .grid import GridConfig
from .queueing import TrafficTrace

FRAME_S = 10e-3


@dataclass(frozen=True)
class SatellitePass:
    """Straight-line pass at fixed altitude and ground speed along +x."""

    altitude_m: float = 500e3
    ground_speed_mps: float = 7.6e3
    x0_m: float = -50e3
    y_m: float = 0.0

    def position(self, t_s) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t_s, dtype=float))
        out = np.empty((t.size, 3))
        out[:, 0] = self.x0_m + self.ground_speed_mps * t
        out[:, 1] = self.y_m
        out[:, 2] = self.altitude_m
        return out


@dataclass
class TwinState:
    """Observations of the previous cycle.

    ``ue_pos[x]`` and ``ue_vel[x]`` have shape ``(K_x, N_TF, 3)``.
    """

    ap_pos: np.ndarray
    ue_pos: Dict[str, np.ndarray]
    ue_vel: Dict[str, np.ndarray]
    sat_pass: SatellitePass
    traffic_history: Optional[TrafficTrace]


def cycle_frame_times(cycle: int, grid: GridConfig) -> np.ndarray:
    """Start time (s) of every frame of a cycle; cycle 0 starts at t=0."""
    n = grid.n_frames_per_cycle
    return (cycle * n + np.arange(n)) * FRAME_S


def predict_positions(state: TwinState, cycle: int, grid: GridConfig) -> CycleGeometry:
    """Constant-velocity extrapolation from the last observed frame.

    Frame ``e`` (1-based) of the new cycle sits ``e`` frame durations after the
    last observation.
    """
    n = grid.n_frames_per_cycle
    steps = (np.arange(n) + 1) * FRAME_S
    ue = {}
    for x, pos in state.ue_pos.items():
        if pos.shape[1] == 0:
            raise ValueError("empty track")
        last = pos[:, -1, :]
        vel = state.ue_vel.get(x)
        if vel is None or vel.shape[1] == 0:
            ue[x] = np.repeat(last[:, None, :], n, axis=1)
        else:
            ue[x] = last[:, None, :] + vel[:, -1, None, :] * steps[None, :, None]
    sat = state.sat_pass.position(cycle_frame_times(cycle, grid))
    return CycleGeometry(state.ap_pos, ue, sat)


def predict_traffic(history: Optional[TrafficTrace], grid: GridConfig, k: Dict[str, int]) -> TrafficTrace:
    """Previous-cycle means: D per downlink subframe, M and S per frame."""
    nsf, ntf = grid.n_subframes, grid.n_frames_per_cycle
    if history is None:
        warnings.warn("no traffic history; predicting zero arrivals", stacklevel=2)
        return TrafficTrace(np.zeros((k["D"], nsf)), np.zeros((k["M"], ntf)), np.zeros((k["S"], ntf)))
    dl = grid.dl_subframe_mask()
    d_mean = history.d[:, dl].mean(axis=1) if dl.any() else np.zeros(k["D"])
    d = d_mean[:, None] * dl[None, :]
    m = np.repeat(history.m.mean(axis=1, keepdims=True), ntf, axis=1)
    s = np.repeat(history.s.mean(axis=1, keepdims=True), ntf, axis=1)
    return TrafficTrace(d, m, s)


def predict_cycle(
    state: TwinState,
    cycle: int,
    coupling: DtCoupling,
    grid: GridConfig,
    params: Optional[ChannelParams] = None,
):
    """Predicted twin channels and traffic for ``cycle``."""
    geom = predict_positions(state, cycle, grid)
    k = {x: geom.n_ue(x) for x in ("D", "M", "S")}
    _, twin = build_cycle_channels(geom, cycle, coupling, grid, params, twin_geometry=geom)
    return twin, predict_traffic(state.traffic_history, grid, k), geom


def twin_channels(geom: CycleGeometry, cycle: int, coupling: DtCoupling, grid: GridConfig,
                  params: Optional[ChannelParams] = None) -> ChannelSet:
    return build_cycle_channels(geom, cycle, coupling, grid, params, twin_geometry=geom)[1]
