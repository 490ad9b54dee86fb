"""CSV loading/writing of CI histories and seeded synthetic dataset generation.

Canonical schema, header required::

    cycle,test_id,duration,verdict

with ``verdict`` 1 for passed and 0 for failed unless the convention is flipped
through :class:`FormatOptions`.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .domain import CycleLog

COLUMNS = ("cycle", "test_id", "duration", "verdict")


class DataError(ValueError):
    """Malformed or invalid dataset content."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class FormatOptions:
    passed_value: int = 1  # set to 0 for logs that encode failures as 1
    delimiter: str = ","
    encoding: str = "utf-8"


@dataclass(frozen=True)
class Dataset:
    name: str = field(compare=False)
    cycles: Tuple[CycleLog, ...]
    catalog: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        cycles = tuple(self.cycles)
        if not cycles:
            raise DataError("dataset has no cycles")
        for prev, cur in zip(cycles, cycles[1:]):
            if cur.cycle_id <= prev.cycle_id:
                raise DataError(
                    f"cycle ids must be strictly increasing ({prev.cycle_id} then {cur.cycle_id})"
                )
        object.__setattr__(self, "cycles", cycles)
        if not self.catalog:
            object.__setattr__(self, "catalog", build_catalog(cycles))

    def __len__(self):
        return len(self.cycles)

    @property
    def n_verdicts(self) -> int:
        return sum(len(c.entries) for c in self.cycles)

    @property
    def duration_range(self) -> Tuple[float, float]:
        durations = [d for c in self.cycles for d, _ in c.entries.values()]
        return min(durations), max(durations)


def build_catalog(cycles) -> Dict[str, float]:
    """Declared duration per test: its first observed actual duration."""
    catalog: Dict[str, float] = {}
    for cycle in cycles:
        for test_id, (duration, _) in cycle.entries.items():
            catalog.setdefault(test_id, duration)
    return catalog


@dataclass(frozen=True)
class SyntheticSpec:
    n_tests: int
    n_cycles: int
    failure_rate: float
    temporal_correlation: float = 0.0
    churn_rate: float = 0.0
    duration_range: Tuple[float, float] = (1.0, 60.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_tests < 1 or self.n_cycles < 1:
            raise ValueError("n_tests and n_cycles must be >= 1")
        for name in ("failure_rate", "temporal_correlation", "churn_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        lo, hi = self.duration_range
        if not 0 < lo <= hi:
            raise ValueError(f"duration_range must satisfy 0 < min <= max, got {self.duration_range}")


def _parse_row(row, line: int, options: FormatOptions):
    try:
        cycle = int(row["cycle"])
        test_id = row["test_id"]
        duration = float(row["duration"])
        verdict = int(row["verdict"])
    except (TypeError, ValueError) as exc:
        raise DataError(f"cannot parse row {row!r}: {exc}", line) from None
    if test_id is None or test_id == "":
        raise DataError("empty test_id", line)
    if cycle < 0:
        raise DataError(f"negative cycle id {cycle}", line)
    if verdict not in (0, 1):
        raise DataError(f"verdict must be 0 or 1, got {verdict}", line)
    if not duration > 0:
        raise DataError(f"duration must be > 0, got {duration}", line)
    return cycle, test_id, duration, verdict == options.passed_value


def load_csv(path, options: FormatOptions = FormatOptions()) -> Dataset:
    path = Path(path)
    grouped: Dict[int, Dict[str, Tuple[float, bool]]] = {}
    with open(path, newline="", encoding=options.encoding) as fh:
        reader = csv.DictReader(fh, delimiter=options.delimiter)
        if reader.fieldnames is None:
            raise DataError("empty file, header required", 1)
        missing = [c for c in COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"missing columns {missing}", 1)
        for row in reader:
            line = reader.line_num
            cycle, test_id, duration, passed = _parse_row(row, line, options)
            entries = grouped.setdefault(cycle, {})
            if test_id in entries:
                raise DataError(f"duplicate test {test_id!r} in cycle {cycle}", line)
            entries[test_id] = (duration, passed)
    if not grouped:
        raise DataError("dataset has no rows")
    cycles = tuple(CycleLog(c, grouped[c]) for c in sorted(grouped))
    return Dataset(path.stem, cycles)


def write_csv(dataset: Dataset, path, options: FormatOptions = FormatOptions()) -> None:
    if not dataset.cycles:
        raise DataError("refusing to write a dataset without cycles")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding=options.encoding) as fh:
        writer = csv.writer(fh, delimiter=options.delimiter, lineterminator="\n")
        writer.writerow(COLUMNS)
        for cycle in dataset.cycles:
            for test_id, (duration, passed) in cycle.entries.items():
                verdict = options.passed_value if passed else 1 - options.passed_value
                writer.writerow((cycle.cycle_id, test_id, repr(float(duration)), verdict))
    os.replace(tmp, path)


def _persistence(failure_rate: float, correlation: float) -> Tuple[float, float]:
    """Markov transition probabilities (P(fail|failed), P(fail|passed)).

    The fail-after-pass probability is picked so the stationary failure rate
    equals ``failure_rate``. When that needs a probability above 1 the failure
    rate wins and persistence is raised to the smallest feasible value.
    """
    f, c = failure_rate, correlation
    if f >= 1.0:
        return 1.0, 1.0
    q = f * (1.0 - c) / (1.0 - f)
    if q > 1.0:
        return 1.0 - (1.0 - f) / f, 1.0
    return c, q


def generate_synthetic(spec: SyntheticSpec, name: str = "synthetic") -> Dataset:
    """Generate a CI history where each test follows a two-state failure chain.

    Every test present runs in every cycle. With probability ``churn_rate`` a
    test is retired after a cycle and replaced by a fresh id.
    """
    rng = np.random.default_rng(spec.seed)
    p_ff, p_pf = _persistence(spec.failure_rate, spec.temporal_correlation)
    lo, hi = spec.duration_range
    next_id = 0

    def new_test():
        nonlocal next_id
        test_id = f"T{next_id:05d}"
        next_id += 1
        return test_id

    ids = [new_test() for _ in range(spec.n_tests)]
    base = rng.uniform(lo, hi, spec.n_tests)
    failing = rng.random(spec.n_tests) < spec.failure_rate

    cycles = []
    for cycle_id in range(spec.n_cycles):
        if cycle_id > 0:
            u = rng.random(spec.n_tests)
            failing = np.where(failing, u < p_ff, u < p_pf)
        jitter = rng.uniform(0.9, 1.1, spec.n_tests)
        durations = np.clip(base * jitter, lo, hi)
        entries = {
            test_id: (float(d), not bool(fail))
            for test_id, d, fail in zip(ids, durations, failing)
        }
        cycles.append(CycleLog(cycle_id, entries))

        churned = np.flatnonzero(rng.random(spec.n_tests) < spec.churn_rate)
        if churned.size:
            fresh_base = rng.uniform(lo, hi, churned.size)
            fresh_fail = rng.random(churned.size) < spec.failure_rate
            for k, idx in enumerate(churned):
                ids[idx] = new_test()
                base[idx] = fresh_base[k]
                failing[idx] = fresh_fail[k]
    return Dataset(name, tuple(cycles))
