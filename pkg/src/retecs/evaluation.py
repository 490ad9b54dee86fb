"""NAPFD, APFD and aggregation over repetitions."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import List, Sequence

import numpy as np

from .domain import ScheduleResult

BLOCK_SIZE = 30
EVALUATION_COLUMNS = (
    "method", "reward", "repetition", "cycle", "napfd",
    "detected", "total", "scheduled", "suite_size",
)
BLOCK_COLUMNS = ("block_start", "block_end", "mean_napfd_a", "mean_napfd_b", "difference")


@dataclass(frozen=True)
class CycleEvaluation:
    cycle_id: int
    napfd: float
    detected_failures: int
    total_failures: int
    scheduled_count: int
    suite_size: int

    def __post_init__(self):
        if self.detected_failures > self.total_failures:
            raise ValueError("detected failures exceed total failures")
        if not 0.0 <= self.napfd <= 1.0:
            raise ValueError(f"napfd out of [0, 1]: {self.napfd}")


def napfd(result: ScheduleResult) -> float:
    """Normalized APFD of an executed schedule.

    No failures in the cycle at all scores 1.0. Failures that exist but were all
    missed score 0.0.
    """
    total = result.total_failures
    if total == 0:
        return 1.0
    detected = result.detected_failures
    if detected == 0:
        return 0.0
    n = len(result.verdicts)
    p = detected / total
    rank_sum = sum(k for k, (passed, _) in enumerate(result.verdicts, start=1) if not passed)
    value = p - rank_sum / (detected * n) + p / (2 * n)
    # guards rounding just outside the unit interval
    return min(1.0, max(0.0, value))


class APFDUndefined(ValueError):
    pass


def apfd(result: ScheduleResult) -> float:
    """Classic APFD; only defined when every failure was detected."""
    if result.undetected_failures > 0:
        raise APFDUndefined("APFD requires all failures to be detected")
    if result.detected_failures == 0:
        raise APFDUndefined("APFD requires at least one detected failure")
    return napfd(result)


def evaluate_cycle(result: ScheduleResult, suite_size: int) -> CycleEvaluation:
    return CycleEvaluation(
        cycle_id=result.schedule.cycle_id,
        napfd=napfd(result),
        detected_failures=result.detected_failures,
        total_failures=result.total_failures,
        scheduled_count=len(result.verdicts),
        suite_size=suite_size,
    )


@dataclass(frozen=True)
class Summary:
    """Per-cycle NAPFD mean over repetitions."""

    cycle_ids: tuple
    mean_napfd: np.ndarray  # one value per cycle
    per_repetition: np.ndarray  # shape (repetitions, cycles)

    @property
    def overall_mean(self) -> float:
        return float(self.mean_napfd.mean())


@dataclass(frozen=True)
class BlockDifference:
    block_start: int
    block_end: int
    mean_napfd_a: float
    mean_napfd_b: float
    difference: float
    partial: bool = False

    def row(self) -> tuple:
        return tuple(asdict(self)[c] for c in BLOCK_COLUMNS)


def aggregate(series: Sequence[Sequence[CycleEvaluation]]) -> Summary:
    """Average NAPFD per cycle over repetitions that cover the same cycles."""
    if not series:
        raise ValueError("no repetitions to aggregate")
    cycle_ids = tuple(e.cycle_id for e in series[0])
    for rep in series[1:]:
        if tuple(e.cycle_id for e in rep) != cycle_ids:
            raise ValueError("repetitions cover different cycle ids")
    values = np.array([[e.napfd for e in rep] for rep in series], dtype=float)
    return Summary(cycle_ids, values.mean(axis=0), values)


def block_differences(a: Summary, b: Summary, block_size: int = BLOCK_SIZE) -> List[BlockDifference]:
    """Mean NAPFD of A minus mean NAPFD of B for consecutive blocks of cycles.

    The final block is kept even when shorter than ``block_size``.
    """
    if a.cycle_ids != b.cycle_ids:
        raise ValueError("summaries cover different cycle ids")
    blocks = []
    n = len(a.cycle_ids)
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        mean_a = float(a.mean_napfd[start:stop].mean())
        mean_b = float(b.mean_napfd[start:stop].mean())
        blocks.append(BlockDifference(
            a.cycle_ids[start], a.cycle_ids[stop - 1],
            mean_a, mean_b, mean_a - mean_b,
            partial=stop - start < block_size,
        ))
    return blocks
