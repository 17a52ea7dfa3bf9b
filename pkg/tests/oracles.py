"""Independent reference implementations shared by unit and acceptance tests."""

import numpy as np

from istn_dss.conic import ConicProgram


def brute_index_stream(t_max, n_d, n_m, n_s, n_sf):
    """Count slots one by one instead of using ceilings; yields the counters after each slot."""
    counters = dict(n_D=0, n_M=0, n_S=0, c=0, e=0, s=0)
    for slot in range(1, t_max + 1):
        counters["n_D"] += 1
        if (slot - 1) % (n_d // n_m) == 0:
            counters["n_M"] += 1
        if (slot - 1) % (n_d // n_s) == 0:
            counters["n_S"] += 1
        if (slot - 1) % n_d == 0:
            counters["s"] += 1
        if (slot - 1) % (10 * n_d) == 0:
            counters["e"] += 1
        if (slot - 1) % (n_d * n_sf) == 0:
            counters["c"] += 1
        yield dict(counters)


def brute_indices(t, n_d, n_m, n_s, n_sf):
    *_, last = brute_index_stream(t, n_d, n_m, n_s, n_sf)
    return last


def brute_feasible(active, cfg):
    """Interval overlap on the frequency axis, subchannels stacked from 0 Hz."""
    w = {x: cfg.spacing(x) for x in "DMS"}
    guard = {"D": w["D"] / 2, "M": w["M"] / 2}
    tags = set()
    for vd in np.flatnonzero(active["D"]) + 1:
        d_top = vd * w["D"] + guard["D"]
        for x in "MS":
            for i in np.flatnonzero(active[x]) + 1:
                if (i - 1) * w[x] < d_top - 1e-6:
                    tags.add("C1")
    for vm in np.flatnonzero(active["M"]) + 1:
        m_top = vm * w["M"] + guard["M"]
        for j in np.flatnonzero(active["S"]) + 1:
            if (j - 1) * w["S"] < m_top - 1e-6:
                tags.add("C2")
    used = sum(active[x].sum() * w[x] for x in "DMS") + guard["D"] + guard["M"]
    if used > cfg.total_bandwidth_hz + 1e-6:
        tags.add("C3")
    return tags


def random_program(r):
    """min c.x over [0, B]^2 with one log row a.x + a0 <= ln(b.x + b0), x=0 strictly inside."""
    B = 2.0
    c = r.uniform(-1, 1, 2)
    a = r.uniform(-1, 1, 2)
    b = r.uniform(0.1, 3.0, 2)
    b0 = r.uniform(0.5, 2.0)
    a0 = np.log(b0) - r.uniform(0.05, 1.0)
    p = ConicProgram()
    x = p.add_block("x", 2)
    p.add_le(range(2), x, np.ones(2), [B, B])
    p.add_nonneg(x)
    p.add_log([0, 0], x, a, [a0], [0, 0], x, b, [b0])
    p.add_objective(x, c)
    return p, (c, a, a0, b, b0, B)


def grid_search(params, n=1000):
    """Best feasible objective on a 1000x1000 grid, refined once on a local 1000x1000 grid."""
    c, a, a0, b, b0, B = params

    def best(lo1, hi1, lo2, hi2):
        g1 = np.linspace(lo1, hi1, n)
        g2 = np.linspace(lo2, hi2, n)
        X1, X2 = np.meshgrid(g1, g2, indexing="ij")
        ok = a[0] * X1 + a[1] * X2 + a0 <= np.log(b[0] * X1 + b[1] * X2 + b0)
        f = np.where(ok, c[0] * X1 + c[1] * X2, np.inf)
        i = np.unravel_index(np.argmin(f), f.shape)
        return f[i], X1[i], X2[i]

    f, x1, x2 = best(0, B, 0, B)
    h = 2 * B / (n - 1)
    f2, _, _ = best(max(0, x1 - h), min(B, x1 + h), max(0, x2 - h), min(B, x2 + h))
    return min(f, f2)


def oracle_episode(q0, arrivals, served, per_frame):
    """Plain-Python step loop: inject on the first RB-time of a frame, then serve."""
    out = []
    q = [float(v) for v in q0]
    for n in range(served.shape[1]):
        for i in range(len(q)):
            x = q[i]
            if n % per_frame == 0:
                x = x + float(arrivals[i, n // per_frame])
            x = x - float(served[i, n])
            q[i] = x if x > 0.0 else 0.0
        out.append(list(q))
    return np.array(out).T
