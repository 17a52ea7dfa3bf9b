import warnings

import numpy as np
import pytest

from istn_dss.channel import DtCoupling, build_cycle_channels
from istn_dss.dtwin import (
    FRAME_S,
    SatellitePass,
    TwinState,
    cycle_frame_times,
    predict_cycle,
    predict_positions,
    predict_traffic,
)
from istn_dss.grid import GridConfig
from istn_dss.queueing import TrafficTrace

G = GridConfig(2.88e6, n_frames_per_cycle=2)


def state(vel=0.0, history=None):
    pos = {x: np.zeros((1, 2, 3)) for x in "DMS"}
    pos["D"][0, :, 0] = [-0.1, 0.0]
    v = {x: np.zeros((1, 2, 3)) for x in "DMS"}
    v["D"][0, :, 0] = vel
    ap = np.array([[50.0, 0.0, 10.0]])
    return TwinState(ap, pos, v, SatellitePass(), history)


def test_stationary_positions_unchanged():
    geom = predict_positions(state(), 3, G)
    assert np.array_equal(geom.ue_pos["D"], np.zeros((1, 2, 3)))
    assert np.array_equal(geom.ue_pos["M"], np.zeros((1, 2, 3)))


def test_constant_velocity_extrapolation():
    geom = predict_positions(state(vel=10.0), 3, G)
    assert geom.ue_pos["D"][0, :, 0] == pytest.approx([0.1, 0.2], abs=1e-15)


def test_missing_velocity_keeps_last_position():
    st = state()
    st.ue_vel["D"] = np.zeros((1, 0, 3))
    assert np.array_equal(predict_positions(st, 1, G).ue_pos["D"][0, :, 0], [0.0, 0.0])


def test_satellite_follows_configured_pass():
    sp = SatellitePass(altitude_m=600e3, ground_speed_mps=7e3, x0_m=-1e4)
    st = state()
    st.sat_pass = sp
    geom = predict_positions(st, 4, G)
    t = cycle_frame_times(4, G)
    assert t == pytest.approx([8 * FRAME_S, 9 * FRAME_S])
    assert np.array_equal(geom.sat_pos, sp.position(t))
    assert geom.sat_pos[0].tolist() == [-1e4 + 7e3 * 0.08, 0.0, 600e3]


def test_traffic_mean_per_subframe():
    dl = G.dl_subframe_mask()
    d = np.zeros((1, G.n_subframes))
    d[0, dl] = np.tile([2e3, 4e3, 6e3, 8e3], dl.sum() // 4) * 8
    hist = TrafficTrace(d, np.array([[1.0, 3.0]]), np.array([[5.0, 5.0]]))
    pred = predict_traffic(hist, G, {"D": 1, "M": 1, "S": 1})
    assert np.all(pred.d[0, dl] == 5e3 * 8) and np.all(pred.d[0, ~dl] == 0)
    assert pred.m.tolist() == [[2.0, 2.0]] and pred.s.tolist() == [[5.0, 5.0]]


def test_constant_traffic_predicted_exactly():
    dl = G.dl_subframe_mask()
    hist = TrafficTrace(np.where(dl, 1500.0, 0.0)[None], np.full((2, 2), 4e5), np.full((1, 2), 1e5))
    pred = predict_traffic(hist, G, {"D": 1, "M": 2, "S": 1})
    assert np.array_equal(pred.d, hist.d) and np.array_equal(pred.m, hist.m) and np.array_equal(pred.s, hist.s)


def test_empty_history_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        pred = predict_traffic(None, G, {"D": 2, "M": 1, "S": 0})
    assert w and not pred.d.any() and pred.d.shape == (2, G.n_subframes)


def test_prediction_error_shrinks_with_history_length():
    r = np.random.default_rng(3)

    def spread(n_tf):
        g = GridConfig(2.88e6, n_frames_per_cycle=n_tf)
        dl = g.dl_subframe_mask()
        errs = []
        for _ in range(4000):
            d = np.where(dl, r.poisson(10.0, g.n_subframes), 0) * 1e3
            hist = TrafficTrace(d[None].astype(float), np.zeros((0, n_tf)), np.zeros((0, n_tf)))
            errs.append(predict_traffic(hist, g, {"D": 1, "M": 0, "S": 0}).d[0, 0] - 10e3)
        return np.std(errs)

    # four times the subframes halves the error
    assert spread(1) / spread(4) == pytest.approx(2.0, rel=0.1)


def test_zero_gap_twin_equals_real():
    st = state(history=TrafficTrace(np.zeros((1, G.n_subframes)), np.ones((1, 2)), np.ones((1, 2))))
    coup = DtCoupling(1.0, 17)
    twin, traffic, geom = predict_cycle(st, 2, coup, G)
    real, _ = build_cycle_channels(geom, 2, coup, G)
    assert twin.equals(real)
    again = predict_cycle(st, 2, coup, G)
    assert again[0].equals(twin) and np.array_equal(again[1].m, traffic.m)
