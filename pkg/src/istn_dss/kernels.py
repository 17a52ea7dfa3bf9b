"""Loop-heavy kernels with numba and pure-numpy implementations.

Each public function dispatches on :data:`istn_dss._accel.USE_NUMBA`; the
``*_numpy`` and ``*_numba`` variants are exported so tests and the benchmark can
compare them directly.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit

__all__ = [
    "cross_interference",
    "queue_replay",
    "greedy_match",
    "waterfill",
]


# ---------------------------------------------------------------------------
# interference from other transmitters: out[l,k,v,n] = sum_{i != l} tx[i,v,n] h[i,k,v,f[n]]


def cross_interference_numpy(tx, h, fidx):
    rec = tx[:, None, :, :] * h[..., fidx]
    n_tx = tx.shape[0]
    out = np.zeros_like(rec)
    for l in range(n_tx):
        if l > 0:
            out[l] += rec[:l].sum(axis=0)
        if l + 1 < n_tx:
            out[l] += rec[l + 1:].sum(axis=0)
    return out


@njit
def cross_interference_numba(tx, h, fidx):
    n_tx, n_v, n_t = tx.shape
    n_k = h.shape[1]
    out = np.zeros((n_tx, n_k, n_v, n_t))
    for l in range(n_tx):
        for k in range(n_k):
            for v in range(n_v):
                for n in range(n_t):
                    f = fidx[n]
                    acc = 0.0
                    for i in range(n_tx):
                        if i != l:
                            acc += tx[i, v, n] * h[i, k, v, f]
                    out[l, k, v, n] = acc
    return out


def cross_interference(tx, h, fidx):
    tx = np.ascontiguousarray(tx, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    fidx = np.ascontiguousarray(fidx, dtype=np.int64)
    if _accel.USE_NUMBA:
        return cross_interference_numba(tx, h, fidx)
    return cross_interference_numpy(tx, h, fidx)


# ---------------------------------------------------------------------------
# queue replay


def queue_replay_numpy(q0, arrivals, served, per_frame):
    """Step every flow through ``q <- max(0, q + a - s)``.

    Parameters
    ----------
    q0 : ndarray, shape (F,)
    arrivals : ndarray, shape (F, n_frames)
        Injected at the first RB-time of each frame.
    served : ndarray, shape (F, N)
        Service offered at each RB-time (rate times RB duration).
    per_frame : int
        RB-times per frame.

    Returns
    -------
    ndarray, shape (F, N)
        Queue after each RB-time.
    """
    q = np.array(q0, dtype=float)
    n_steps = served.shape[1]
    hist = np.empty((q.size, n_steps))
    for n in range(n_steps):
        if n % per_frame == 0:
            q = q + arrivals[:, n // per_frame]
        q = np.maximum(0.0, q - served[:, n])
        hist[:, n] = q
    return hist


@njit
def queue_replay_numba(q0, arrivals, served, per_frame):
    n_f, n_steps = served.shape
    hist = np.empty((n_f, n_steps))
    for f in range(n_f):
        q = q0[f]
        for n in range(n_steps):
            if n % per_frame == 0:
                q = q + arrivals[f, n // per_frame]
            q = q - served[f, n]
            if q < 0.0:
                q = 0.0
            hist[f, n] = q
    return hist


def queue_replay(q0, arrivals, served, per_frame):
    q0 = np.ascontiguousarray(q0, dtype=np.float64)
    arrivals = np.ascontiguousarray(arrivals, dtype=np.float64).reshape(q0.size, -1)
    served = np.ascontiguousarray(served, dtype=np.float64).reshape(q0.size, -1)
    if _accel.USE_NUMBA:
        return queue_replay_numba(q0, arrivals, served, int(per_frame))
    return queue_replay_numpy(q0, arrivals, served, int(per_frame))


# ---------------------------------------------------------------------------
# greedy strongest-gain matching
#
# gains[s, k, v, n] > 0 marks an available (server, UE, RB) candidate.  UEs are
# visited in order; each repeatedly claims its strongest remaining candidate,
# which removes that UE-RB for all servers and that server-RB for all UEs.


def greedy_match_numpy(gains):
    g = np.array(gains, dtype=float)
    n_s, n_k, n_v, n_t = g.shape
    out = np.zeros(g.shape, dtype=np.bool_)
    for k in range(n_k):
        while True:
            sub = g[:, k]
            flat = int(np.argmax(sub))
            if sub.flat[flat] <= 0.0:
                break
            s, v, n = np.unravel_index(flat, sub.shape)
            out[s, k, v, n] = True
            g[:, k, v, n] = 0.0
            g[s, :, v, n] = 0.0
    return out


@njit
def greedy_match_numba(gains):
    g = gains.copy()
    n_s, n_k, n_v, n_t = g.shape
    out = np.zeros(g.shape, dtype=np.bool_)
    for k in range(n_k):
        while True:
            best = 0.0
            bs = -1
            bv = -1
            bn = -1
            for s in range(n_s):
                for v in range(n_v):
                    for n in range(n_t):
                        if g[s, k, v, n] > best:
                            best = g[s, k, v, n]
                            bs = s
                            bv = v
                            bn = n
            if bs < 0:
                break
            out[bs, k, bv, bn] = True
            for s in range(n_s):
                g[s, k, bv, bn] = 0.0
            for j in range(n_k):
                g[bs, j, bv, bn] = 0.0
    return out


def greedy_match(gains):
    gains = np.ascontiguousarray(gains, dtype=np.float64)
    if _accel.USE_NUMBA:
        return greedy_match_numba(gains)
    return greedy_match_numpy(gains)


# ---------------------------------------------------------------------------
# water-filling: p_i = max(0, nu - 1/a_i) with sum p = budget, per row


def waterfill_numpy(a, budget, tol):
    a = np.asarray(a, dtype=float)
    budget = np.asarray(budget, dtype=float)
    out = np.zeros_like(a)
    for b in range(a.shape[0]):
        act = a[b] > 0
        if budget[b] <= 0 or not act.any():
            continue
        inv = 1.0 / a[b, act]
        lo, hi = 0.0, budget[b] + inv.max()
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if np.maximum(0.0, mid - inv).sum() > budget[b]:
                hi = mid
            else:
                lo = mid
        out[b, act] = np.maximum(0.0, lo - inv)
    return out


@njit
def waterfill_numba(a, budget, tol):
    n_b, n_c = a.shape
    out = np.zeros((n_b, n_c))
    for b in range(n_b):
        if budget[b] <= 0.0:
            continue
        inv_max = -1.0
        for i in range(n_c):
            if a[b, i] > 0.0 and 1.0 / a[b, i] > inv_max:
                inv_max = 1.0 / a[b, i]
        if inv_max < 0.0:
            continue
        lo = 0.0
        hi = budget[b] + inv_max
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            tot = 0.0
            for i in range(n_c):
                if a[b, i] > 0.0:
                    d = mid - 1.0 / a[b, i]
                    if d > 0.0:
                        tot += d
            if tot > budget[b]:
                hi = mid
            else:
                lo = mid
        for i in range(n_c):
            if a[b, i] > 0.0:
                d = lo - 1.0 / a[b, i]
                if d > 0.0:
                    out[b, i] = d
    return out


def waterfill(a, budget, tol=1e-9):
    """Batched water-filling.

    Parameters
    ----------
    a : ndarray, shape (B, C)
        Gain-to-noise ratios per channel, 1/W; nonpositive entries are unused.
    budget : ndarray, shape (B,)
        Power budget per row, W.
    tol : float
        Bisection tolerance on the water level, W.

    Returns
    -------
    ndarray, shape (B, C)
        Powers with row sums within ``C * tol`` below the budget.
    """
    a = np.ascontiguousarray(np.atleast_2d(a), dtype=np.float64)
    budget = np.ascontiguousarray(np.atleast_1d(budget), dtype=np.float64)
    if _accel.USE_NUMBA:
        return waterfill_numba(a, budget, float(tol))
    return waterfill_numpy(a, budget, float(tol))
