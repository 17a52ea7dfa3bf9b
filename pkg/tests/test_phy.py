"""Rate, interference and budget models against hand arithmetic and loops."""

from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from istn_dss.channel import ChannelSet
from istn_dss.grid import BwpPlan, GridConfig
from istn_dss.phy import (
    AllocationState,
    PhyParams,
    check_power_budgets,
    d_rates,
    dispersion_penalty,
    evaluate_rates,
    ici_power,
    isyi_sat,
    isyi_tn,
    q_inverse,
    rate_d_subframe,
    rate_m,
    rate_s,
    scale_to_budgets,
    sinr_d,
)

GRID = GridConfig(2.88e6, n_frames_per_cycle=1, n_cycles=1)
K = {"D": 2, "M": 2, "S": 1}


def make_chans(r, n_ap=2, noise=1e-12, scale=1e-10):
    v = {x: GRID.cap(x) for x in "DMS"}
    tn = {x: r.random((n_ap, K[x], v[x], 1)) * scale for x in "DM"}
    sat = {x: r.random((K[x], v[x], 1)) * scale for x in "MS"}
    return ChannelSet(tn, sat, {x: noise for x in "DMS"}).bind_grid(GRID)


def random_alloc(r, n_ap=2, density=0.3):
    al = AllocationState.zeros(GRID, n_ap, K, BwpPlan.ordered_layout(GRID, 1, 1, 1))
    for pf, af in (("p_d", "a_d"), ("p_m", "a_m"), ("p0_m", "b_m"), ("p0_s", "b_s")):
        p = getattr(al, pf)
        p[...] = r.random(p.shape) * (r.random(p.shape) < density)
        setattr(al, af, p > 0)
    return al


def loop_sinr_d(al, ch):
    L, Kd, V, N = al.p_d.shape
    f = GRID.frame_of("D")
    out = np.zeros(al.p_d.shape)
    for l in range(L):
        for k in range(Kd):
            for v in range(V):
                for n in range(N):
                    icisum = sum(al.p_d[i, j, v, n] * al.a_d[i, j, v, n] * ch.tn["D"][i, k, v, f[n]]
                                 for i in range(L) if i != l for j in range(Kd))
                    sig = al.p_d[l, k, v, n] * al.a_d[l, k, v, n] * ch.tn["D"][l, k, v, f[n]]
                    out[l, k, v, n] = sig / (icisum + ch.noise["D"])
    return out


def test_q_inverse_matches_normal_quantile():
    for p in (1e-2, 1e-5, 1e-7):
        assert q_inverse(p) == pytest.approx(NormalDist().inv_cdf(1 - p), rel=1e-10)
    assert q_inverse(1e-5) == pytest.approx(4.2649, abs=1e-4)
    with pytest.raises(ValueError):
        q_inverse(0.0)


def test_dispersion_penalty_value():
    w, t = GRID.spacing("D"), GRID.rb_duration("D")
    assert (w, t) == (720e3, 2.5e-4)
    want = np.sqrt(w / t) * NormalDist().inv_cdf(1 - 1e-5) / np.log(2)
    assert dispersion_penalty(GRID, 1e-5) == pytest.approx(want, rel=1e-12)
    assert dispersion_penalty(GRID, 1e-5) == pytest.approx(3.302e5, rel=1e-3)


def single_link(n_ap=1):
    al = AllocationState.zeros(GRID, n_ap, K, BwpPlan.ordered_layout(GRID, 1, 1, 1))
    tn = {x: np.zeros((n_ap, K[x], GRID.cap(x), 1)) for x in "DM"}
    sat = {x: np.zeros((K[x], GRID.cap(x), 1)) for x in "MS"}
    return al, tn, sat


def test_sinr_example():
    al, tn, sat = single_link(n_ap=2)
    al.p_d[0, 0, 0, 0], al.p_d[1, 1, 0, 0] = 1.0, 1.0
    al.a_d = al.p_d > 0
    tn["D"][0, 0, 0, 0] = 1e-9
    tn["D"][1, 0, 0, 0] = 1e-12     # cross gain from AP 1 into UE 0
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    assert ici_power(al, ch, "D", 0, 0, 0, 0) == pytest.approx(1e-12, rel=1e-15)
    assert sinr_d(al, ch)[0, 0, 0, 0] == pytest.approx(500.0, rel=1e-12)
    al.a_d[0, 0, 0, 0] = False
    assert sinr_d(al, ch)[0, 0, 0, 0] == 0.0


def test_single_ap_has_no_ici(rng):
    al = random_alloc(rng, n_ap=1)
    ch = make_chans(rng, n_ap=1)
    assert ici_power(al, ch, "D", 0, 0, 0, 0) == 0.0


def test_sinr_matches_loop(rng):
    for _ in range(3):
        al, ch = random_alloc(rng, n_ap=3), make_chans(rng, n_ap=3)
        assert np.allclose(sinr_d(al, ch), loop_sinr_d(al, ch), rtol=1e-12, atol=0)


def test_isyi_examples(rng):
    al, tn, sat = single_link()
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    assert not isyi_tn(al, ch).any()
    al.p0_m[0, 0, 0], al.b_m[0, 0, 0] = 2.0, True
    sat["M"][1, 0, 0] = 1e-13
    assert isyi_tn(al, ch)[1, 0, 0] == pytest.approx(2e-13)
    # satellite victim: terrestrial M power times TN gain to that UE
    al.p_m[0, 0, 1, 0], al.a_m[0, 0, 1, 0] = 0.5, True
    tn["M"][0, 1, 1, 0] = 4e-12
    assert isyi_sat(al, ch)[1, 1, 0] == pytest.approx(2e-12)


def test_d_rate_example():
    al, tn, sat = single_link()
    al.p_d[0, 0, 0, 0], al.a_d[0, 0, 0, 0] = 1.0, True
    tn["D"][0, 0, 0, 0] = 31e-12
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    chi = dispersion_penalty(GRID, 1e-5)
    r = rate_d_subframe(al, ch, GRID, PhyParams(), 0, 0, 0)
    assert r == pytest.approx(720e3 * 5 - chi, rel=1e-12)
    assert r == pytest.approx(3.2698e6, rel=1e-4)
    assert rate_d_subframe(al, ch, GRID, PhyParams(), 0, 1, 0) == 0.0


def test_d_rate_penalty_concave():
    al, tn, sat = single_link()
    tn["D"][0, 0, :, 0] = 31e-12
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    al.p_d[0, 0, 0, 0] = 1.0
    al.a_d = al.p_d > 0
    one = rate_d_subframe(al, ch, GRID, PhyParams(), 0, 0, 0)
    al.p_d[0, 0, 0, 1] = 1.0
    al.a_d = al.p_d > 0
    two = rate_d_subframe(al, ch, GRID, PhyParams(), 0, 0, 0)
    # the penalty grows like sqrt(count), so the rate itself grows faster than linearly
    assert two > 2 * one
    chi = dispersion_penalty(GRID, 1e-5)
    assert two == pytest.approx(2 * 720e3 * 5 - chi * np.sqrt(2), rel=1e-12)


def test_d_rate_floors_at_zero():
    al, tn, sat = single_link()
    al.p_d[0, 0, 0, 0], al.a_d[0, 0, 0, 0] = 1.0, True
    tn["D"][0, 0, 0, 0] = 1e-14
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    rate, ok = d_rates(al, ch, GRID, PhyParams())
    assert rate[0, 0, 0] == 0.0 and not ok[0, 0, 0, 0]


@pytest.mark.parametrize("gamma_db, tol", [(5.0, 0.03), (15.0, 0.005)])
def test_unit_dispersion_close_to_exact(gamma_db, tol):
    al, tn, sat = single_link()
    g = 10 ** (gamma_db / 10)
    tn["D"][0, 0, :, 0] = g * 1e-12
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    chi = dispersion_penalty(GRID, 1e-5)
    for n in (1, 2):
        al.p_d[...] = 0.0
        al.p_d[0, 0, :n, 0] = 1.0
        al.a_d = al.p_d > 0
        approx = rate_d_subframe(al, ch, GRID, PhyParams(), 0, 0, 0)
        exact = n * 720e3 * np.log2(1 + g) - np.sqrt(1 - (1 + g) ** -2) * chi * np.sqrt(n)
        assert abs(exact - approx) / exact <= tol


def test_m_and_s_rate_examples():
    al, tn, sat = single_link()
    al.p_m[0, 0, 0, 0], al.a_m[0, 0, 0, 0] = 1.0, True
    tn["M"][0, 0, 0, 0] = 3e-12
    al.p0_s[0, 0, 0], al.b_s[0, 0, 0] = 1.0, True
    sat["S"][0, 0, 0] = 1e-12
    ch = ChannelSet(tn, sat, {x: 1e-12 for x in "DMS"}).bind_grid(GRID)
    assert rate_m(al, ch, GRID, 0, 0, 0, 0) == pytest.approx(720e3, rel=1e-12)
    assert rate_m(al, ch, GRID, 0, 1, 0, 0) == 0.0
    assert rate_m(al, ch, GRID, "sat", 0, 0, 0) == 0.0
    assert rate_s(al, ch, GRID, 0, 0, 0) == pytest.approx(180e3, rel=1e-12)
    assert rate_s(al, ch, GRID, 0, 1, 0) == 0.0


def test_m_rates_match_scalar_loop(rng):
    al, ch = random_alloc(rng), make_chans(rng)
    rates = evaluate_rates(al, ch, GRID, PhyParams())
    L, Km, V, N = al.p_m.shape
    for l in range(L):
        for k in range(Km):
            for n in range(N):
                want = sum(rate_m(al, ch, GRID, l, k, v, n) for v in range(V))
                assert rates.m_tn[l, k, n] == pytest.approx(want, rel=1e-12, abs=1e-9)
    for k in range(Km):
        for n in range(N):
            want = sum(rate_m(al, ch, GRID, "sat", k, v, n) for v in range(V))
            assert rates.m_sat[k, n] == pytest.approx(want, rel=1e-12, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.01, 3.0))
def test_rate_monotonicity(seed, factor):
    r = np.random.default_rng(seed)
    al, ch = random_alloc(r, density=0.6), make_chans(r)
    base = evaluate_rates(al, ch, GRID, PhyParams())
    idx = tuple(r.integers(0, s) for s in al.p_m.shape)
    if not al.a_m[idx]:
        return
    up = al.copy()
    up.p_m[idx] *= factor
    new = evaluate_rates(up, ch, GRID, PhyParams())
    l, k, _, n = idx
    assert new.m_tn[l, k, n] >= base.m_tn[l, k, n] * (1 - 1e-12)
    others = np.ones(new.m_tn.shape, bool)
    others[l, k, n] = False
    assert (new.m_tn[others] <= base.m_tn[others] * (1 + 1e-12) + 1e-9).all()
    assert (new.m_sat <= base.m_sat * (1 + 1e-12) + 1e-9).all()


def brute_slot_power(al):
    n_d = GRID.n_rb_times("D")
    ap = np.zeros((al.n_ap, n_d))
    sat = np.zeros(n_d)
    rm = GRID.rbs_per_subframe("D") // GRID.rbs_per_subframe("M")
    rs = GRID.rbs_per_subframe("D") // GRID.rbs_per_subframe("S")
    for t in range(n_d):
        for l in range(al.n_ap):
            ap[l, t] = (al.p_d[l, ..., t] * al.a_d[l, ..., t]).sum() + (al.p_m[l, ..., t // rm] * al.a_m[l, ..., t // rm]).sum()
        sat[t] = (al.p0_m[..., t // rm] * al.b_m[..., t // rm]).sum() + (al.p0_s[..., t // rs] * al.b_s[..., t // rs]).sum()
    return ap, sat


def test_budget_examples(rng):
    ph = PhyParams()
    al = AllocationState.zeros(GRID, 2, K)
    ok, ap, sat = check_power_budgets(al, GRID, ph)
    assert ok and np.all(ap == ph.p_max_ap) and np.all(sat == ph.p_max_sat)
    al.p_d[0, 0, 0, 3], al.a_d[0, 0, 0, 3] = ph.p_max_ap, True
    ok, ap, _ = check_power_budgets(al, GRID, ph)
    assert ok and ap[0, 3] == 0.0
    al.p_d[0, 1, 1, 3], al.a_d[0, 1, 1, 3] = 1e-3, True
    assert not check_power_budgets(al, GRID, ph)[0]
    fixed = scale_to_budgets(al, GRID, ph)
    assert check_power_budgets(fixed, GRID, ph)[0]


def test_budget_slack_matches_brute_force(rng):
    ph = PhyParams()
    for _ in range(5):
        al = random_alloc(rng)
        ok, ap, sat = check_power_budgets(al, GRID, ph)
        bap, bsat = brute_slot_power(al)
        assert np.allclose(ap, ph.p_max_ap - bap, rtol=0, atol=1e-12)
        assert np.allclose(sat, ph.p_max_sat - bsat, rtol=0, atol=1e-12)
        assert ok == bool((bap <= ph.p_max_ap * (1 + 1e-9)).all() and (bsat <= ph.p_max_sat * (1 + 1e-9)).all())
