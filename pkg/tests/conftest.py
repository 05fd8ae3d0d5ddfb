"""Session-wide fixture trajectories and the acceptance summary."""

import time

import pytest

from chpfreq.dynamics import simulate
from chpfreq.scenario import load_scenario

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def paper_runs():
    """Full-horizon runs of shipped fixtures, keyed by ``(fixture, mode)``.

    Wall-clock time of each run is kept in ``paper_runs.elapsed``.
    """
    cache, elapsed = {}, {}

    def get(name="paper_mode1", mode=1):
        key = (name, mode)
        if key not in cache:
            start = time.perf_counter()
            cache[key] = simulate(load_scenario(name), mode=mode)
            elapsed[key] = time.perf_counter() - start
        return cache[key]

    get.elapsed = elapsed
    return get


@pytest.fixture
def criterion():
    """Record one acceptance verdict; shown in the terminal summary."""

    def record(number: int, passed: bool, detail: str):
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 10):
        if n in _CRITERIA:
            ok, detail = _CRITERIA[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        else:
            terminalreporter.write_line(f"criterion {n}: FAIL - not evaluated (test errored or was skipped)")
