"""Compiled kernels against their numpy twins and hand oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from istn_dss import _accel, kernels as K


def loop_interference(tx, h, fidx):
    n_tx, n_v, n_t = tx.shape
    out = np.zeros((n_tx, h.shape[1], n_v, n_t))
    for l in range(n_tx):
        for k in range(h.shape[1]):
            for v in range(n_v):
                for n in range(n_t):
                    out[l, k, v, n] = sum(tx[i, v, n] * h[i, k, v, fidx[n]] for i in range(n_tx) if i != l)
    return out


def test_backend_flag():
    assert _accel.backend_name() in ("numba", "numpy")


@pytest.mark.parametrize("seed", range(3))
def test_cross_interference_variants(seed):
    r = np.random.default_rng(seed)
    tx = r.random((3, 4, 6))
    h = r.random((3, 2, 4, 2))
    f = np.array([0, 0, 0, 1, 1, 1])
    want = loop_interference(tx, h, f)
    assert np.allclose(K.cross_interference_numpy(tx, h, f), want, rtol=1e-13)
    assert np.allclose(K.cross_interference_numba(tx, h, f), want, rtol=1e-13)
    assert np.allclose(K.cross_interference(tx, h, f), want, rtol=1e-13)


def test_cross_interference_single_tx():
    out = K.cross_interference(np.ones((1, 2, 3)), np.ones((1, 1, 2, 1)), np.zeros(3, int))
    assert not out.any()


def test_cross_interference_one_term():
    tx = np.zeros((2, 1, 1))
    tx[1] = 1.0
    h = np.full((2, 1, 1, 1), 1e-12)
    assert K.cross_interference(tx, h, np.zeros(1, int))[0, 0, 0, 0] == 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 30), st.integers(1, 5), st.integers(0, 2**31))
def test_queue_replay_variants(n_f, n_steps, per_frame, seed):
    r = np.random.default_rng(seed)
    n_frames = -(-n_steps // per_frame)
    q0 = r.random(n_f) * 3
    arr = r.random((n_f, n_frames)) * 2
    srv = r.random((n_f, n_steps))
    a = K.queue_replay_numpy(q0, arr, srv, per_frame)
    b = K.queue_replay_numba(q0, arr, srv, per_frame)
    assert np.array_equal(a, b)
    assert (a >= 0).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31))
def test_greedy_match_variants(n_s, n_k, n_v, n_t, seed):
    r = np.random.default_rng(seed)
    g = r.random((n_s, n_k, n_v, n_t)) * (r.random((n_s, n_k, n_v, n_t)) > 0.3)
    a = K.greedy_match_numpy(g)
    b = K.greedy_match_numba(g)
    assert np.array_equal(a, b)
    assert (a.sum(axis=0) <= 1).all()   # a UE-RB has one server
    assert (a.sum(axis=1) <= 1).all()   # a server-RB has one UE
    assert not (a & (g <= 0)).any()


def test_greedy_examples():
    one = K.greedy_match(np.ones((1, 1, 1, 1)))
    assert one.all()
    # two servers, two UEs, two RBs; UE 0 prefers RB 0, UE 1 prefers RB 1
    g = np.zeros((2, 2, 2, 1))
    g[:, 0, 0, 0], g[:, 0, 1, 0] = (1.0, 0.9), (0.1, 0.2)
    g[:, 1, 0, 0], g[:, 1, 1, 0] = (0.1, 0.2), (1.0, 0.9)
    m = K.greedy_match(g)
    assert m[0, 0, 0, 0]                      # UE 0 on its best server-RB
    assert m[0, 1, 1, 0] or m[1, 1, 1, 0]     # UE 1 still gets its preferred RB
    assert (m.sum(axis=0) <= 1).all() and (m.sum(axis=1) <= 1).all()
    # a single server: the first UE keeps claiming until its gains run out
    solo = K.greedy_match(g[:1])
    assert solo[0, 0].all() and not solo[0, 1].any()


def bisect_oracle(a, budget):
    inv = 1.0 / a[a > 0]
    lo, hi = 0.0, budget + inv.max()
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if np.maximum(0, mid - inv).sum() <= budget else (lo, mid)
    out = np.zeros_like(a)
    out[a > 0] = np.maximum(0, lo - inv)
    return out


def test_waterfill_example():
    p = K.waterfill(np.array([[1.0, 0.5]]), np.array([1.0]))
    assert p[0] == pytest.approx([1.0, 0.0], abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 2**31))
def test_waterfill_variants(n_b, n_c, seed):
    r = np.random.default_rng(seed)
    a = r.random((n_b, n_c)) * 10 * (r.random((n_b, n_c)) > 0.2)
    budget = r.random(n_b) * 3
    x = K.waterfill_numpy(a, budget, 1e-12)
    y = K.waterfill_numba(a, budget, 1e-12)
    assert np.allclose(x, y, atol=1e-10)
    for b in range(n_b):
        if (a[b] > 0).any():
            assert x[b].sum() == pytest.approx(budget[b], abs=1e-9)
            assert np.allclose(x[b], bisect_oracle(a[b], budget[b]), atol=1e-9)
        else:
            assert not x[b].any()
