import time

import pytest
from hypothesis import HealthCheck, settings

from crowdwatch.runner import run_scenario
from crowdwatch.scenario import bundled

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_reports: dict = {}
_criteria: list = []


def bundled_report(name: str):
    """Run a bundled scenario once per session; returns (report, wall seconds)."""
    if name not in _reports:
        t0 = time.perf_counter()
        rep = run_scenario(bundled(name))
        _reports[name] = (rep, time.perf_counter() - t0)
    return _reports[name]


@pytest.fixture
def criterion():
    """Record one acceptance line and assert it."""

    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}" + (f" ({detail})" if detail else "")
        _criteria.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)
