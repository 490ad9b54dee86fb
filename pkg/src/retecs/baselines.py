"""Non-learning comparison prioritizers: Random, Sorting and Weighting."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .domain import FeatureScaling, PrioritizedSuite, TestCaseRecord, featurize


def random_prioritize(suite: Sequence[TestCaseRecord], rng: np.random.Generator, cycle_id: int = 0) -> PrioritizedSuite:
    if not suite:
        raise ValueError("empty suite")
    priorities = rng.random(len(suite))
    return PrioritizedSuite.from_priorities(cycle_id, [t.id for t in suite], priorities)


def failure_recency(history: Sequence[bool]) -> float:
    """Sum of 2**-k over the positions k (1 = most recent) of failed executions."""
    return sum(0.5 ** k for k, passed in enumerate(history, start=1) if not passed)


def sorting_prioritize(suite: Sequence[TestCaseRecord], cycle_id: int = 0) -> PrioritizedSuite:
    """Recently failed tests first; tests that never ran score 0."""
    return PrioritizedSuite.from_priorities(
        cycle_id, [t.id for t in suite], [failure_recency(t.verdict_history) for t in suite]
    )


def weighting_prioritize(
    suite: Sequence[TestCaseRecord],
    current_cycle: int,
    scaling: FeatureScaling,
    history_length: int = 4,
    cycle_id: int = None,
) -> PrioritizedSuite:
    """Unweighted sum of the scaled features the network agent sees."""
    priorities = [
        sum(scaling.scale(featurize(t, current_cycle, history_length))) for t in suite
    ]
    cycle_id = current_cycle if cycle_id is None else cycle_id
    return PrioritizedSuite.from_priorities(cycle_id, [t.id for t in suite], priorities)
