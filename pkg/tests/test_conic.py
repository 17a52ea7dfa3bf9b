"""Interior-point solves against closed forms and dense grid search."""

import numpy as np
import pytest

from oracles import grid_search, random_program

from istn_dss.conic import ConicProgram, kkt_residuals, solve


def test_single_log_block():
    # maximize t s.t. t <= ln x, x <= 2
    p = ConicProgram()
    t, x = p.add_block("t", 1), p.add_block("x", 1)
    p.add_le([0], x, [1.0], [2.0])
    p.add_log([0], t, [1.0], [0.0], [0], x, [1.0], [1e-12])
    p.add_objective(t, -1.0)
    sol = solve(p)
    assert sol.ok
    assert -sol.objective == pytest.approx(np.log(2.0), abs=1e-7)
    assert max(sol.residuals.values()) <= 1e-7


def test_lp_box_vertex():
    p = ConicProgram()
    x = p.add_block("x", 3)
    c = np.array([1.0, -2.0, 0.5])
    lo, hi = np.array([-1.0, 0.0, 2.0]), np.array([1.0, 3.0, 4.0])
    p.add_le(range(3), x, np.ones(3), hi)
    p.add_le(range(3), x, -np.ones(3), -lo)
    p.add_objective(x, c)
    sol = solve(p)
    corners = np.array(np.meshgrid(*zip(lo, hi))).reshape(3, -1).T
    assert sol.objective == pytest.approx((corners @ c).min(), abs=1e-7)


def test_infeasible_reported():
    p = ConicProgram()
    x = p.add_block("x", 1)
    p.add_le([0], x, [1.0], [-1.0])
    p.add_nonneg(x)
    assert solve(p).status == "infeasible"


def test_row_normalization_keeps_feasible_set():
    p = ConicProgram()
    x = p.add_block("x", 2)
    p.add_le([0, 0], x, [1e4, 2e4], [3e4])
    _, _, A, b, *_ = p.matrices()
    assert np.allclose(A.toarray(), [[0.5, 1.0]]) and b[0] == pytest.approx(1.5)


def test_random_programs_match_grid():
    r = np.random.default_rng(2024)
    for _ in range(100):
        p, params = random_program(r)
        sol = solve(p)
        assert sol.ok
        ref = grid_search(params)
        assert abs(sol.objective - ref) <= 1e-4
        assert max(sol.residuals.values()) <= 1e-7


def test_kkt_residuals_detect_violation():
    p, _ = random_program(np.random.default_rng(0))
    sol = solve(p)
    bad = sol.x + np.array([5.0, 5.0])
    assert kkt_residuals(p, bad)["primal"] > 1e-3
