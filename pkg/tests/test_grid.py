import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_feasible, brute_indices

from istn_dss.grid import (
    BwpPlan,
    GridConfig,
    check_bwp_feasible,
    max_layout_s,
    subchannel_caps,
    time_indices,
)


def test_time_index_examples():
    cfg = GridConfig(15e6, n_frames_per_cycle=5)
    ti = time_indices(1, cfg)
    assert (ti.n_D, ti.n_M, ti.n_S, ti.c, ti.e, ti.s) == (1, 1, 1, 1, 1, 1)
    ti = time_indices(7, cfg)
    assert (ti.n_D, ti.n_M, ti.n_S, ti.c, ti.e, ti.s) == (7, 4, 2, 1, 1, 2)
    ti = time_indices(41, cfg)
    assert (ti.e, ti.s, ti.c) == (2, 11, 1)
    with pytest.raises(ValueError):
        time_indices(0, cfg)


@pytest.mark.parametrize("n_tf", [1, 2, 5])
def test_time_indices_match_counter(n_tf):
    cfg = GridConfig(1.44e6, n_frames_per_cycle=n_tf)
    for t in range(1, 400):
        ti = time_indices(t, cfg)
        want = brute_indices(t, 4, 2, 1, cfg.n_subframes)
        assert (ti.n_D, ti.n_M, ti.n_S, ti.c, ti.e, ti.s) == tuple(want[k] for k in ("n_D", "n_M", "n_S", "c", "e", "s"))


def test_caps_examples():
    assert subchannel_caps(GridConfig(15e6)) == (20, 41, 83)
    assert subchannel_caps(GridConfig(720e3)) == (1, 2, 4)
    with pytest.raises(ValueError):
        GridConfig(100e3)


def test_numerology_order_enforced():
    with pytest.raises(ValueError):
        GridConfig(15e6, numerologies={"D": 0, "M": 1, "S": 2})


def test_bwp_examples():
    cfg = GridConfig(15e6)
    ok, _ = check_bwp_feasible(BwpPlan.from_indices(cfg, D=[1], M=[4]), cfg)
    assert ok
    ok, msgs = check_bwp_feasible(BwpPlan.from_indices(cfg, D=[1], M=[2]), cfg)
    assert not ok and msgs[0].startswith("C1")
    big = GridConfig(15e6)
    plan = BwpPlan.ordered_layout(big, 1, 10, 20)
    assert check_bwp_feasible(plan, big)[0]


def test_ordered_layout_fits(grid_15mhz):
    for n_d in range(0, 4):
        for n_m in range(0, 6):
            n_s = max_layout_s(grid_15mhz, n_d, n_m)
            plan = BwpPlan.ordered_layout(grid_15mhz, n_d, n_m, n_s)
            assert check_bwp_feasible(plan, grid_15mhz)[0]
            assert plan.count("D") == n_d and plan.count("M") == n_m and plan.count("S") == n_s


def test_bwp_matches_interval_oracle_exhaustive():
    cfg = GridConfig(1.44e6)
    assert subchannel_caps(cfg) == (2, 4, 8)
    for bits in itertools.product([False, True], repeat=14):
        active = {"D": np.array(bits[:2]), "M": np.array(bits[2:6]), "S": np.array(bits[6:])}
        ok, msgs = check_bwp_feasible(BwpPlan(active), cfg)
        got = {m.split(":")[0] for m in msgs}
        assert got == brute_feasible(active, cfg)
        assert ok == (not got)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=720e3, max_value=40e6))
def test_caps_never_exceed_bandwidth(w):
    cfg = GridConfig(w)
    for x, v in zip("DMS", subchannel_caps(cfg)):
        assert v * cfg.spacing(x) <= w * (1 + 1e-12)
        assert (v + 1) * cfg.spacing(x) > w


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=1, max_value=20000), st.integers(min_value=1, max_value=8))
def test_time_indices_consistent(t, n_tf):
    cfg = GridConfig(1.44e6, n_frames_per_cycle=n_tf)
    ti = time_indices(t, cfg)
    assert ti.n_D >= ti.n_M >= ti.n_S >= ti.s >= ti.e >= ti.c >= 1
    assert ti.s == math.ceil(ti.n_M / 2)
    assert ti.e == math.ceil(ti.s / 10)
