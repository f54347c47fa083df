import time

import pytest

from riccilab.flow import Scenario, run

# mid-flow comparison time of the dumbbell refinement study, with a tight
# stencil around it so the time derivative error is negligible
DUMBBELL_MID = 0.0122
DUMBBELL_STENCIL = 2e-5
DUMBBELL_CHECKPOINTS = (DUMBBELL_MID - DUMBBELL_STENCIL, DUMBBELL_MID, DUMBBELL_MID + DUMBBELL_STENCIL)
SPHERE_CHECKPOINT = 3.0 / 16.0


def timed_run(scenario):
    t0 = time.perf_counter()
    trace = run(scenario)
    return trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sphere_run():
    return timed_run(Scenario(checkpoints=(SPHERE_CHECKPOINT,)))


@pytest.fixture(scope="session")
def sphere_trace(sphere_run):
    return sphere_run[0]


@pytest.fixture(scope="session")
def dumbbell_run():
    return timed_run(Scenario(family="dumbbell", grid_n=400, stop_q_ratio=1e4,
                              checkpoints=DUMBBELL_CHECKPOINTS))


@pytest.fixture(scope="session")
def dumbbell_trace(dumbbell_run):
    return dumbbell_run[0]


@pytest.fixture(scope="session")
def dumbbell_coarse():
    return run(Scenario(family="dumbbell", grid_n=200, stop_q_ratio=1e4,
                        checkpoints=DUMBBELL_CHECKPOINTS))


_criteria: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Remember one acceptance verdict; the summary prints them in order."""
    def _record(number: int, ok: bool, detail: str) -> bool:
        _criteria[number] = (bool(ok), detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        ok, detail = _criteria[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
