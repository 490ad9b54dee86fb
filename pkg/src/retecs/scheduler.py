"""Time-budgeted selection of prioritized tests and replay of their outcomes."""

from __future__ import annotations

import logging
from typing import Iterable, Mapping

import numpy as np

from .domain import CycleLog, PrioritizedSuite, Schedule, ScheduleResult

log = logging.getLogger(__name__)


class UnknownTest(KeyError):
    """A scheduled test is missing from the cycle log."""


def compute_budget(durations: Iterable[float], ratio: float) -> float:
    durations = list(durations)
    if not durations:
        raise ValueError("cannot compute a budget for an empty suite")
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    return ratio * float(sum(durations))


def build_schedule(
    prioritized: PrioritizedSuite,
    durations: Mapping[str, float],
    budget: float,
    rng: np.random.Generator,
) -> Schedule:
    """Greedy first-fit selection by descending priority.

    Ties are broken by a uniformly random permutation drawn from ``rng``. Tests
    that do not fit the remaining budget are skipped and the scan continues.
    """
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    items = prioritized.items
    order = rng.permutation(len(items))
    # stable sort keeps the random permutation as the tie order
    order = sorted(order, key=lambda k: -items[k][1])

    remaining = float(budget)
    selected = []
    for k in order:
        test_id = items[k][0]
        duration = durations[test_id]
        if duration <= remaining:
            selected.append(test_id)
            remaining -= duration
    return Schedule(prioritized.cycle_id, tuple(selected), float(budget))


def virtual_execute(schedule: Schedule, cycle_log: CycleLog) -> ScheduleResult:
    """Look up the logged outcome of every scheduled test."""
    verdicts = []
    for test_id in schedule.ordered_test_ids:
        try:
            duration, passed = cycle_log.entries[test_id]
        except KeyError:
            raise UnknownTest(
                f"test {test_id!r} is not in the log of cycle {cycle_log.cycle_id}"
            ) from None
        verdicts.append((passed, duration))

    scheduled = set(schedule.ordered_test_ids)
    undetected = sum(1 for t in cycle_log.failed_ids if t not in scheduled)
    result = ScheduleResult(schedule, tuple(verdicts), undetected)
    if result.actual_duration > schedule.budget:
        log.debug(
            "cycle %s: actual duration %.2fs exceeds budget %.2fs",
            schedule.cycle_id, result.actual_duration, schedule.budget,
        )
    return result
