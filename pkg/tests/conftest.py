import os
from dataclasses import replace

import numpy as np
import pytest

from istn_dss.grid import GridConfig
from istn_dss.harness.scenario import load_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk():
    return load_scenario("desk")


@pytest.fixture(scope="session")
def desk_short(desk):
    """Desk scenario cut to two planning cycles."""
    return replace(desk, grid=replace(desk.grid, n_cycles=2))


@pytest.fixture(scope="session")
def grid_small():
    # caps (2, 4, 8)
    return GridConfig(total_bandwidth_hz=1.44e6, n_frames_per_cycle=2, n_cycles=1)


@pytest.fixture(scope="session")
def grid_15mhz():
    return GridConfig(total_bandwidth_hz=15e6, n_frames_per_cycle=5)


def pytest_report_header(config):
    return f"ISTN_DSS_BACKEND={os.environ.get('ISTN_DSS_BACKEND', 'numba')}"


@pytest.fixture(scope="session")
def cycle_inputs(desk):
    """(twin, real) planning inputs of the desk scenario's first cycle, seed 1."""
    from istn_dss.harness.run import _cycle_inputs
    from istn_dss.harness.scenario import build_world
    from istn_dss.queueing import QueueState

    world = build_world(desk, 1)
    q = QueueState.zeros(desk.n_ap, desk.ue_counts["M"], desk.ue_counts["S"])
    return _cycle_inputs(desk, world, 1, 1, q)


@pytest.fixture(scope="session")
def phase1(cycle_inputs, desk):
    from istn_dss.planner import dt_joint_ra

    return dt_joint_ra(cycle_inputs[0], desk.planner)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Print and remember one PASS/FAIL line, then assert."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
