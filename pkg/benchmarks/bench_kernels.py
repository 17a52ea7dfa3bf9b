"""Time the numba kernels against their pure-numpy versions.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Sizes follow the
desk scenario scaled up to the 15 MHz grid.  The first numba call (compile)
is excluded.
"""

import argparse
import timeit

import numpy as np

from istn_dss import kernels as K


def cases(rng):
    n_ap, k, v, n_t, n_f = 4, 6, 16, 400, 5
    tx = rng.random((n_ap, v, n_t))
    h = rng.random((n_ap, k, v, n_f))
    fidx = np.repeat(np.arange(n_f), n_t // n_f)
    yield "cross_interference", (tx, h, fidx)

    q0 = rng.random(24)
    arr = rng.random((24, 5)) * 10
    srv = rng.random((24, 1000))
    yield "queue_replay", (q0, arr, srv, 200)

    gains = rng.random((3, 6, 16, 80)) * (rng.random((3, 6, 16, 80)) > 0.3)
    yield "greedy_match", (gains,)

    a = rng.random((200, 64)) * 1e3
    budget = rng.random(200)
    yield "waterfill", (a, budget, 1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':20s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for name, data in cases(rng):
        f_np, f_nb = getattr(K, f"{name}_numpy"), getattr(K, f"{name}_numba")
        data = tuple(np.ascontiguousarray(x) if isinstance(x, np.ndarray) else x for x in data)
        same = np.allclose(f_np(*data), f_nb(*data), rtol=1e-9, atol=1e-12)  # also compiles
        t_np = min(timeit.repeat(lambda: f_np(*data), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*data), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:20s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}x  {same}")


if __name__ == "__main__":
    main()
