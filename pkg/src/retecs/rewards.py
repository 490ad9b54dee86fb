"""Reward functions turning an executed schedule into per-test feedback.

All rewards are non-negative. Tokens used by the CLI and configs:
``failcount``, ``tcfail`` and ``timerank``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable

from .domain import ScheduleResult


@dataclass(frozen=True)
class RewardAssignment:
    cycle_id: int
    rewards: Dict[str, float]

    def __getitem__(self, test_id):
        return self.rewards[test_id]


def _check_suite(result: ScheduleResult, suite) -> list:
    suite = list(suite)
    missing = set(result.schedule.ordered_test_ids) - set(suite)
    if missing:
        raise ValueError(f"scheduled tests not in suite: {sorted(missing)}")
    return suite


def failure_count_reward(result: ScheduleResult, suite: Iterable[str]) -> RewardAssignment:
    """Every test in the suite, scheduled or not, gets the number of detected failures."""
    suite = _check_suite(result, suite)
    value = float(result.detected_failures)
    return RewardAssignment(result.schedule.cycle_id, {t: value for t in suite})


def test_case_failure_reward(result: ScheduleResult, suite: Iterable[str]) -> RewardAssignment:
    """1 for a scheduled test that failed, 0 otherwise."""
    suite = _check_suite(result, suite)
    rewards = dict.fromkeys(suite, 0.0)
    for test_id, (passed, _) in zip(result.schedule.ordered_test_ids, result.verdicts):
        rewards[test_id] = 0.0 if passed else 1.0
    return RewardAssignment(result.schedule.cycle_id, rewards)


test_case_failure_reward.__test__ = False


def time_ranked_reward(result: ScheduleResult, suite: Iterable[str]) -> RewardAssignment:
    """Detected failure count, minus (for passed tests) the failures ranked after them.

    Unscheduled tests get 0.
    """
    suite = _check_suite(result, suite)
    rewards = dict.fromkeys(suite, 0.0)
    n_fail = result.detected_failures
    failures_after = n_fail
    for test_id, (passed, _) in zip(result.schedule.ordered_test_ids, result.verdicts):
        if passed:
            rewards[test_id] = float(n_fail - failures_after)
        else:
            failures_after -= 1
            rewards[test_id] = float(n_fail)
    return RewardAssignment(result.schedule.cycle_id, rewards)


REWARD_FUNCTIONS: Dict[str, Callable[[ScheduleResult, Iterable[str]], RewardAssignment]] = {
    "failcount": failure_count_reward,
    "tcfail": test_case_failure_reward,
    "timerank": time_ranked_reward,
}


def get_reward_function(token: str):
    try:
        return REWARD_FUNCTIONS[token]
    except KeyError:
        raise ValueError(
            f"unknown reward {token!r}; expected one of {', '.join(REWARD_FUNCTIONS)}"
        ) from None
