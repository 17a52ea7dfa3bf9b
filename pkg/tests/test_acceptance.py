"""Acceptance criteria, one PASS/FAIL line each.

The desk-scale criteria share one sweep of every planner over seeds 1-5.
"""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest
from oracles import brute_feasible, brute_index_stream, grid_search, oracle_episode, random_program

from istn_dss.conic import solve
from istn_dss.grid import BwpPlan, GridConfig, check_bwp_feasible, subchannel_caps, time_indices
from istn_dss.harness.run import ALGORITHMS, run, run_many
from istn_dss.planner.joint import is_nonincreasing
from istn_dss.planner.validator import IGNORES_SERVICE
from istn_dss.queueing import inject_and_step
from istn_dss.sca import f_apx, f_apx_upper, f_exp_lower, f_sqrt_upper

SEEDS = (1, 2, 3, 4, 5)
SLACK = 1.05


@pytest.fixture(scope="module")
def sweep_reports(desk):
    reports = run_many(desk, ALGORITHMS, SEEDS)
    return {(r.algorithm, r.seed): r for r in reports}


def _mean_ql(reports, alg):
    return float(np.mean([reports[alg, s].mean_ql_mb for s in SEEDS]))


def test_criterion_01_surrogate_bounds(verdict):
    t0 = time.perf_counter()
    r = np.random.default_rng(7)
    n, eps = 100_000, 1e-4
    x, xi = r.uniform(0, 20 * eps, n), r.uniform(0, 20 * eps, n)
    u, ui = r.uniform(-20, 20, n), r.uniform(-20, 20, n)
    s, si = r.uniform(0, 1e3, n), r.uniform(1e-6, 1e3, n)

    def rel(a, b):
        return np.abs(a - b) / np.maximum(np.abs(b), 1.0)

    below = [
        f_apx_upper(x, xi, eps) - f_apx(x, eps) >= -1e-12 * np.maximum(1.0, f_apx(x, eps)),
        np.exp(u) - f_exp_lower(u, ui) >= -1e-12 * np.exp(u),
        f_sqrt_upper(s, si) - np.sqrt(s) >= -1e-12 * np.sqrt(s),
    ]
    tight = max(rel(f_apx_upper(xi, xi, eps), f_apx(xi, eps)).max(),
                rel(f_exp_lower(ui, ui), np.exp(ui)).max(),
                rel(f_sqrt_upper(si, si), np.sqrt(si)).max())
    dt = time.perf_counter() - t0
    ok = all(b.all() for b in below) and tight <= 1e-12 and dt < 5
    verdict(1, ok, f"bounds hold on 1e5 samples, max gap at expansion {tight:.1e}, {dt:.2f} s")


def test_criterion_02_grid_oracle(verdict):
    t0 = time.perf_counter()
    bad = 0
    for n_tf in (1, 2, 5):
        cfg = GridConfig(1.44e6, n_frames_per_cycle=n_tf)
        for t, want in enumerate(brute_index_stream(1000, 4, 2, 1, cfg.n_subframes), start=1):
            ti = time_indices(t, cfg)
            bad += (ti.n_D, ti.n_M, ti.n_S, ti.c, ti.e, ti.s) != tuple(want[k] for k in ("n_D", "n_M", "n_S", "c", "e", "s"))
    cfg = GridConfig(1.44e6)
    caps = subchannel_caps(cfg)
    for bits in itertools.product([False, True], repeat=sum(caps)):
        active = {"D": np.array(bits[:2]), "M": np.array(bits[2:6]), "S": np.array(bits[6:])}
        ok, msgs = check_bwp_feasible(BwpPlan(active), cfg)
        got = {m.split(":")[0] for m in msgs}
        bad += got != brute_feasible(active, cfg) or ok != (not got)
    dt = time.perf_counter() - t0
    verdict(2, bad == 0 and caps == (2, 4, 8) and dt < 5,
            f"{bad} mismatches over t=1..1000 and all 2^14 layouts for caps {caps}, {dt:.2f} s")


def test_criterion_03_conic_oracle(verdict, sweep_reports):
    r = np.random.default_rng(2024)
    worst_gap, worst_kkt = 0.0, 0.0
    for _ in range(100):
        p, params = random_program(r)
        sol = solve(p)
        worst_gap = max(worst_gap, abs(sol.objective - grid_search(params)) if sol.ok else np.inf)
        worst_kkt = max(worst_kkt, max(sol.residuals.values()))
    desk_kkt = max(c.max_residual for rep in sweep_reports.values() for c in rep.cycles)
    bad = [st for rep in sweep_reports.values() for c in rep.cycles for st in c.statuses if st != "optimal"]
    ok = worst_gap <= 1e-4 and worst_kkt <= 1e-7 and desk_kkt <= 1e-7 and not bad
    verdict(3, ok, f"grid gap {worst_gap:.1e}, random KKT {worst_kkt:.1e}, desk KKT {desk_kkt:.1e}, "
                   f"{len(bad)} non-optimal desk solves")


def test_criterion_04_sca_iterations(verdict, desk, sweep_reports):
    tol = 10 * desk.planner.solver_tol
    cyc = [c for (a, _), rep in sweep_reports.items() if a in ("dt_joint_ra", "rt_refine") for c in rep.cycles]
    mono = all(is_nonincreasing(c.trace, tol) for c in cyc)
    sca = max(len(c.trace) for c in cyc)
    ref = max(max(c.refine_iterations, default=0) for c in cyc)
    verdict(4, mono and sca <= 50 and ref <= 10,
            f"nonincreasing={mono}, max SCA iterations {sca} (<=50), max refine iterations {ref} (<=10)")


def test_criterion_05_zero_gap(verdict, desk):
    sc = replace(
        desk, xi=1.0, mobility=replace(desk.mobility, speed_mps=(0.0, 0.0)),
        traffic=replace(desk.traffic, burstiness=0.0, d_burstiness=0.0),
        planner=replace(desk.planner, kappa=1.0),
    )
    runs = {a: run(sc, a, keep_decisions=True) for a in ("fia", "dt_joint_ra", "rt_refine")}
    fields = ("p_d", "p_m", "p0_m", "p0_s", "a_d", "a_m", "b_m", "b_s")
    same, untouched = True, True
    for fd, dd, rd in zip(*(runs[a].decisions for a in ("fia", "dt_joint_ra", "rt_refine"))):
        ph1 = rd.info["phase1"]
        for other in (dd, ph1):
            same &= all(np.array_equal(getattr(fd.alloc, f), getattr(other.alloc, f)) for f in fields)
            same &= np.array_equal(fd.steering.omega_d, other.steering.omega_d)
            same &= np.array_equal(fd.steering.omega_m, other.steering.omega_m)
            same &= all(np.array_equal(fd.bwp.active[x], other.bwp.active[x]) for x in "DMS")
            same &= fd.trace == other.trace
        untouched &= all(np.array_equal(getattr(rd.alloc, f), getattr(ph1.alloc, f)) for f in fields)
        untouched &= not any(o.accepted for o in rd.info["refine"])
    n = len(runs["fia"].decisions)
    verdict(5, same and untouched and n == sc.grid.n_cycles,
            f"{n} cycles, identical Phase-1 outputs={same}, refinement changed nothing={untouched}")


def test_criterion_06_ordering(verdict, sweep_reports):
    order = ("fia", "rt_refine", "dt_joint_ra", "reference", "heuristic")
    m = [_mean_ql(sweep_reports, a) for a in order]
    ok = all(a <= SLACK * b for a, b in zip(m, m[1:]))
    verdict(6, ok, "mean QL MB " + " <= ".join(f"{a} {v:.4f}" for a, v in zip(order, m)) + " (5% slack)")


def test_criterion_07_d_service(verdict, sweep_reports):
    rt = [sweep_reports["rt_refine", s].d_unserved_fraction for s in SEEDS]
    bench = {a: float(np.mean([sweep_reports[a, s].d_unserved_fraction for s in SEEDS])) for a in ("greedy", "heuristic")}
    ok = max(rt) == 0.0 and all(v > 0 for v in bench.values())
    verdict(7, ok, f"rt_refine unserved D max {max(rt):.3g}; pooled greedy {bench['greedy']:.3f}, "
                   f"heuristic {bench['heuristic']:.3f}")


def test_criterion_08_queue_oracle(verdict):
    r = np.random.default_rng(11)
    bad = 0
    for _ in range(20):
        n_f, per_frame, steps = 5, int(r.integers(1, 25)), 200
        q0 = r.random(n_f) * 5
        arr = r.random((n_f, -(-steps // per_frame))) * 10
        srv = r.random((n_f, steps)) * r.uniform(0.1, 2.0)
        want = oracle_episode(q0, arr, srv, per_frame)
        q, got = q0.copy(), []
        for n in range(1, steps + 1):
            q = inject_and_step(q, arr[:, (n - 1) // per_frame], srv[:, n - 1], n, per_frame)
            got.append(q)
        bad += not np.array_equal(np.array(got).T, want)
    verdict(8, bad == 0, f"{bad}/20 random 200-step episodes differ from the step simulator")


def test_criterion_09_validator(verdict, sweep_reports):
    structural = {k: rep.structural_violations() for k, rep in sweep_reports.items() if rep.structural_violations()}
    service = {k: rep.unexpected_service_violations() for k, rep in sweep_reports.items()
               if rep.unexpected_service_violations()}
    flagged = sorted({a for (a, _), rep in sweep_reports.items() if a in IGNORES_SERVICE and rep.violations})
    failed = [k for k, rep in sweep_reports.items() if not rep.complete]
    ok = not structural and not service and not failed
    verdict(9, ok, f"structural {structural or 'none'}, unexpected service {service or 'none'}, "
                   f"benchmarks with expected misses {flagged}")


def test_criterion_10_wall_clock(verdict, sweep_reports):
    wall = sum(sweep_reports["rt_refine", s].wall_s for s in (1, 2, 3))
    verdict(10, wall < 600, f"rt_refine seeds 1-3 took {wall:.1f} s (< 600 s)")
