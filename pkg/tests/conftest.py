import time

import numpy as np
import pytest

from momentflow.bracket_rep import Bracket

# 1-based (i, j, k, c) with [e_i, e_j] = sum c e_k
ENTRIES = {
    "h3": (3, [(1, 2, 3, 1)]),
    "h5": (5, [(1, 2, 5, 1), (3, 4, 5, 1)]),
    "fil4": (4, [(1, 2, 3, 1), (1, 3, 4, 1)]),
    "free2step3": (6, [(1, 2, 4, 1), (1, 3, 5, 1), (2, 3, 6, 1)]),
    "sl2r": (3, [(1, 2, 2, 2), (1, 3, 3, -2), (2, 3, 1, 1)]),
    "so3": (3, [(1, 2, 3, 1), (1, 3, 2, -1), (2, 3, 1, 1)]),
    "r2": (2, [(1, 2, 1, 1)]),
}


def make(name):
    n, entries = ENTRIES[name]
    return Bracket.from_entries(n, entries)


@pytest.fixture
def h3():
    return make("h3")


@pytest.fixture
def so3():
    return make("so3")


@pytest.fixture
def sl2r():
    return make("sl2r")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_bracket(n, rng, complex_=False):
    """Random skew tensor (not Lie in general)."""
    shape = (n * (n - 1) // 2, n)
    upper = rng.normal(size=shape)
    if complex_:
        upper = upper + 1j * rng.normal(size=shape)
    return Bracket(n, upper)


SUITE_BUDGET = 300.0  # seconds, whole run
_ACCEPTANCE = {}
_STARTED = [time.perf_counter()]


def pytest_sessionstart(session):
    _STARTED[0] = time.perf_counter()


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome, duration = _ACCEPTANCE.get(name, ("passed", 0.0))
    # fixture setup counts towards the criterion's time
    duration += report.duration
    if report.failed:
        outcome = "failed"
    _ACCEPTANCE[name] = (outcome, duration)


def _suite_seconds():
    return time.perf_counter() - _STARTED[0]


@pytest.hookimpl(tryfirst=True)
def pytest_sessionfinish(session, exitstatus):
    budget_name = next((k for k in _ACCEPTANCE if k.startswith("test_criterion_10")), None)
    if budget_name and _suite_seconds() >= SUITE_BUDGET:
        _ACCEPTANCE[budget_name] = ("failed", _ACCEPTANCE[budget_name][1])
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, duration = _ACCEPTANCE[name]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}  ({duration:.2f} s)")
    terminalreporter.write_line(f"suite wall clock {_suite_seconds():.1f} s (budget {SUITE_BUDGET:.0f} s)")
