"""Core value types shared across the package, plus test-case featurization."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Tuple

import math


class NotScheduledError(KeyError):
    """Raised when asking for the rank of a test that was not scheduled."""


@dataclass(frozen=True)
class TestCaseRecord:
    """Metadata the prioritizers see for one test case.

    ``verdict_history`` is ordered most recent first, ``True`` meaning passed.
    """

    __test__ = False  # keep pytest from collecting this class

    id: str
    estimated_duration: float
    last_executed_cycle: Optional[int] = None
    verdict_history: Tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.estimated_duration >= 0:
            raise ValueError(f"estimated_duration must be >= 0, got {self.estimated_duration}")
        object.__setattr__(self, "verdict_history", tuple(bool(v) for v in self.verdict_history))


@dataclass(frozen=True)
class CycleLog:
    """Ground truth for one CI cycle: test id -> (actual duration, passed)."""

    cycle_id: int
    entries: Mapping[str, Tuple[float, bool]]

    def __post_init__(self):
        if self.cycle_id < 0:
            raise ValueError(f"cycle_id must be non-negative, got {self.cycle_id}")
        if not self.entries:
            raise ValueError(f"cycle {self.cycle_id} has no entries")
        for test_id, (duration, _) in self.entries.items():
            if not duration > 0:
                raise ValueError(
                    f"cycle {self.cycle_id}, test {test_id!r}: duration must be > 0, got {duration}"
                )

    @property
    def test_ids(self) -> list:
        return list(self.entries)

    @property
    def failed_ids(self) -> set:
        return {t for t, (_, passed) in self.entries.items() if not passed}


@dataclass(frozen=True)
class PrioritizedSuite:
    cycle_id: int
    items: Tuple[Tuple[str, float], ...]

    def __post_init__(self):
        items = tuple((str(t), float(p)) for t, p in self.items)
        ids = [t for t, _ in items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate test ids in prioritized suite")
        for t, p in items:
            if not math.isfinite(p):
                raise ValueError(f"priority of {t!r} is not finite: {p}")
        object.__setattr__(self, "items", items)

    @classmethod
    def from_priorities(cls, cycle_id: int, ids: Sequence[str], priorities) -> "PrioritizedSuite":
        return cls(cycle_id, tuple(zip(ids, (float(p) for p in priorities))))

    def as_dict(self) -> dict:
        return dict(self.items)


@dataclass(frozen=True)
class Schedule:
    cycle_id: int
    ordered_test_ids: Tuple[str, ...]
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "ordered_test_ids", tuple(self.ordered_test_ids))
        if len(set(self.ordered_test_ids)) != len(self.ordered_test_ids):
            raise ValueError("schedule contains duplicate test ids")

    def __len__(self):
        return len(self.ordered_test_ids)


@dataclass(frozen=True)
class ScheduleResult:
    """A schedule after virtual execution.

    ``verdicts[k]`` is ``(passed, actual_duration)`` for the k-th scheduled test.
    """

    schedule: Schedule
    verdicts: Tuple[Tuple[bool, float], ...]
    undetected_failures: int = 0

    def __post_init__(self):
        verdicts = tuple((bool(p), float(d)) for p, d in self.verdicts)
        if len(verdicts) != len(self.schedule.ordered_test_ids):
            raise ValueError("verdicts must have exactly one entry per scheduled test")
        if self.undetected_failures < 0:
            raise ValueError("undetected_failures must be >= 0")
        object.__setattr__(self, "verdicts", verdicts)

    @property
    def detected_failures(self) -> int:
        return sum(1 for passed, _ in self.verdicts if not passed)

    @property
    def total_failures(self) -> int:
        return self.detected_failures + self.undetected_failures

    @property
    def actual_duration(self) -> float:
        return sum(d for _, d in self.verdicts)


def featurize(test: TestCaseRecord, current_cycle: int, history_length: int) -> list:
    """Return ``[duration, time_since_last_run, h_1, ..., h_L]``.

    ``h_k`` is 1.0 when the k-th most recent execution failed. Tests never run
    get ``current_cycle + 1`` as their time since last run.
    """
    if history_length < 1:
        raise ValueError("history_length must be >= 1")
    if test.last_executed_cycle is None:
        since = current_cycle + 1
    else:
        since = current_cycle - test.last_executed_cycle
    bits = [0.0 if passed else 1.0 for passed in test.verdict_history[:history_length]]
    bits.extend([0.0] * (history_length - len(bits)))
    return [float(test.estimated_duration), float(since)] + bits


def rank(schedule: Schedule, test_id: str) -> int:
    """1-based execution position of ``test_id`` in ``schedule``."""
    try:
        return schedule.ordered_test_ids.index(test_id) + 1
    except ValueError:
        raise NotScheduledError(test_id) from None


def update_record(
    test: TestCaseRecord,
    passed: bool,
    actual_duration: float,
    cycle: int,
    history_length: int,
) -> TestCaseRecord:
    if not actual_duration > 0:
        raise ValueError(f"actual_duration must be > 0, got {actual_duration}")
    history = ((bool(passed),) + test.verdict_history)[:history_length]
    return replace(
        test,
        estimated_duration=max(test.estimated_duration, float(actual_duration)),
        last_executed_cycle=cycle,
        verdict_history=history,
    )


@dataclass(frozen=True)
class FeatureScaling:
    """Maps raw feature vectors into roughly unit range for the network and Weighting.

    Duration is divided by the dataset's largest observed duration and time since
    last run is clipped at ``recency_horizon`` cycles then divided by it. History
    bits pass through unchanged.
    """

    max_duration: float
    recency_horizon: float = 10.0

    def __post_init__(self):
        if not self.max_duration > 0:
            raise ValueError("max_duration must be > 0")
        if not self.recency_horizon > 0:
            raise ValueError("recency_horizon must be > 0")

    def scale(self, features: Sequence[float]) -> list:
        duration, since, *bits = features
        return [
            min(duration / self.max_duration, 1.0),
            min(since, self.recency_horizon) / self.recency_horizon,
        ] + list(bits)
