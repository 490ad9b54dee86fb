import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from retecs.domain import Schedule, ScheduleResult


def make_result(order, failed=(), undetected=0, cycle_id=0, duration=1.0):
    """ScheduleResult for ``order`` where ids in ``failed`` failed."""
    schedule = Schedule(cycle_id, tuple(order), budget=float(len(order)) * duration)
    verdicts = tuple((t not in set(failed), duration) for t in order)
    return ScheduleResult(schedule, verdicts, undetected)


@pytest.fixture
def result_factory():
    return make_result


ACCEPTANCE_LINES = []


def report_criterion(label, ok, detail):
    """Record a pass/fail line for the acceptance summary and fail the test if needed."""
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
