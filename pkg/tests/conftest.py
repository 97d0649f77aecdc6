"""Shared fixtures for the heavy end-to-end runs.

Both fixtures are session-scoped: several acceptance checks read different
slices of the same record sets, and the builds dominate suite runtime.
"""

import time

import pytest

from fedforest import experiment

_criterion_lines: list[str] = []


def record_criterion(line: str) -> None:
    """Collect acceptance-gate lines for the end-of-run summary."""
    _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def point_e_records():
    """Full-scale run of point E: federated, 40 reps, 10000-sample test sets.

    Returns (records, wall_seconds); the elapsed time is itself asserted
    downstream, so it is measured here around the whole run.
    """
    t0 = time.perf_counter()
    records = experiment.run_experiment(
        [experiment.POINTS["E"]], reps=40, builders=("federated",)
    )
    return records, time.perf_counter() - t0


@pytest.fixture(scope="session")
def grid_records():
    """Points A-D with both builders, reduced reps and test size."""
    points = [experiment.POINTS[k] for k in "ABCD"]
    return experiment.run_experiment(
        points, reps=12, n_test=4000, builders=("federated", "baseline")
    )
