"""CI replay loop, repetitions and parameter sweeps.

Each replayed cycle runs prioritize -> schedule -> virtual execution ->
evaluation -> reward -> learning, using only information from earlier cycles
to prioritize.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import baselines
from .agents import NetworkAgent, TableauAgent
from .domain import FeatureScaling, PrioritizedSuite, ScheduleResult, TestCaseRecord, featurize, update_record
from .evaluation import (
    BLOCK_COLUMNS,
    EVALUATION_COLUMNS,
    BlockDifference,
    CycleEvaluation,
    Summary,
    aggregate,
    block_differences,
    evaluate_cycle,
)
from .ingestion import Dataset
from .rewards import REWARD_FUNCTIONS, get_reward_function
from .scheduler import build_schedule, compute_budget, virtual_execute

log = logging.getLogger(__name__)

METHODS = ("random", "sorting", "weighting", "tableau", "network")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "network"
    reward: str = "tcfail"
    history_length: int = 4
    schedule_ratio: float = 0.5
    repetitions: int = 30
    base_seed: int = 0
    # tableau
    actions: int = 25
    epsilon: float = 0.2
    # network
    hidden: int = 12
    sigma: float = 0.1
    learning_rate: float = 0.05
    replay_capacity: int = 10000
    replay_batch: int = 1000
    minibatch_size: int = 32
    # both agents; 1.0 keeps the exploration rate constant
    exploration_decay: float = 1.0
    recency_horizon: float = 10.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.reward not in REWARD_FUNCTIONS:
            raise ValueError(
                f"unknown reward {self.reward!r}; expected one of {', '.join(REWARD_FUNCTIONS)}"
            )
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 < self.schedule_ratio <= 1:
            raise ValueError("schedule_ratio must be in (0, 1]")
        if self.history_length < 1:
            raise ValueError("history_length must be >= 1")

    @property
    def label(self) -> str:
        return f"{self.method}:{self.reward}"


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a flat ``key = value`` file whose keys are ExperimentConfig fields."""
    parser = configparser.ConfigParser()
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[experiment]\n" + text)
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for key, raw in parser["experiment"].items():
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        kind = types[key]
        values[key] = int(raw) if kind == "int" else float(raw) if kind == "float" else raw
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


class _Baseline:
    """Adapter giving the stateless prioritizers the agent interface."""

    def __init__(self, method: str, rng, scaling: FeatureScaling, history_length: int):
        self.method = method
        self.rng = rng
        self.scaling = scaling
        self.history_length = history_length

    def prioritize(self, records, cycle) -> tuple:
        if self.method == "random":
            suite = baselines.random_prioritize(records, self.rng, cycle)
        elif self.method == "sorting":
            suite = baselines.sorting_prioritize(records, cycle)
        else:
            suite = baselines.weighting_prioritize(records, cycle, self.scaling, self.history_length)
        return np.array([p for _, p in suite.items]), None

    def learn(self, actions, rewards):
        pass

    def end_cycle(self):
        pass


class _AgentAdapter:
    def __init__(self, agent, history_length: int, scaling: Optional[FeatureScaling]):
        self.agent = agent
        self.history_length = history_length
        self.scaling = scaling

    def prioritize(self, records, cycle) -> tuple:
        states = [featurize(t, cycle, self.history_length) for t in records]
        if self.scaling is not None:
            states = [self.scaling.scale(s) for s in states]
        return self.agent.act(states)

    def learn(self, actions, rewards):
        self.agent.learn(actions, rewards)

    def end_cycle(self):
        self.agent.end_cycle()


def make_prioritizer(config: ExperimentConfig, dataset: Dataset, rng: np.random.Generator):
    lo, hi = dataset.duration_range
    scaling = FeatureScaling(hi, config.recency_horizon)
    if config.method == "tableau":
        agent = TableauAgent((lo, hi), rng, config.actions, config.epsilon, config.exploration_decay)
        return _AgentAdapter(agent, config.history_length, None)
    if config.method == "network":
        agent = NetworkAgent(
            2 + config.history_length, rng,
            hidden=config.hidden,
            exploration_rate=config.sigma,
            learning_rate=config.learning_rate,
            replay_capacity=config.replay_capacity,
            batch_size=config.replay_batch,
            minibatch_size=config.minibatch_size,
            exploration_decay=config.exploration_decay,
        )
        return _AgentAdapter(agent, config.history_length, scaling)
    return _Baseline(config.method, rng, scaling, config.history_length)


CycleObserver = Callable[[PrioritizedSuite, ScheduleResult], None]


def run_replay(
    dataset: Dataset,
    config: ExperimentConfig,
    repetition_index: int = 0,
    observer: Optional[CycleObserver] = None,
    prioritizer=None,
) -> List[CycleEvaluation]:
    """Replay every cycle of ``dataset`` once; deterministic in (base_seed, repetition_index).

    ``observer`` is called with the prioritized suite and the executed result of
    each cycle. ``prioritizer`` overrides the one built from ``config``, which
    lets callers keep a handle on the learning agent.
    """
    rng = np.random.default_rng(config.base_seed + repetition_index)
    if prioritizer is None:
        prioritizer = make_prioritizer(config, dataset, rng)
    reward_fn = get_reward_function(config.reward)
    reward_whole_suite = config.reward == "failcount"
    records: Dict[str, TestCaseRecord] = {}
    evaluations = []

    for position, cycle_log in enumerate(dataset.cycles):
        suite_ids = cycle_log.test_ids
        for test_id in suite_ids:
            if test_id not in records:
                records[test_id] = TestCaseRecord(test_id, dataset.catalog[test_id])
        suite = [records[t] for t in suite_ids]

        priorities, actions = prioritizer.prioritize(suite, position)
        prioritized = PrioritizedSuite.from_priorities(cycle_log.cycle_id, suite_ids, priorities)
        durations = {t.id: t.estimated_duration for t in suite}
        budget = compute_budget(durations.values(), config.schedule_ratio)
        schedule = build_schedule(prioritized, durations, budget, rng)
        result = virtual_execute(schedule, cycle_log)
        evaluations.append(evaluate_cycle(result, len(suite_ids)))
        if observer is not None:
            observer(prioritized, result)

        rewards = reward_fn(result, suite_ids)
        if actions is not None:
            if reward_whole_suite:
                chosen = range(len(suite_ids))
            else:
                scheduled = set(schedule.ordered_test_ids)
                chosen = [k for k, t in enumerate(suite_ids) if t in scheduled]
            prioritizer.learn(
                [actions[k] for k in chosen], [rewards[suite_ids[k]] for k in chosen]
            )
        prioritizer.end_cycle()

        for test_id, (passed, duration) in zip(schedule.ordered_test_ids, result.verdicts):
            records[test_id] = update_record(
                records[test_id], passed, duration, position, config.history_length
            )
    return evaluations


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    series: tuple  # one list of CycleEvaluation per repetition
    summary: Summary

    @property
    def overall_mean(self) -> float:
        return self.summary.overall_mean


def _replay_job(args):
    dataset, config, index = args
    return run_replay(dataset, config, index)


def run_experiment(dataset: Dataset, config: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run ``config.repetitions`` independent replays and average them per cycle."""
    tasks = [(dataset, config, i) for i in range(config.repetitions)]
    if jobs > 1 and config.repetitions > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            series = list(pool.map(_replay_job, tasks))
    else:
        series = [_replay_job(t) for t in tasks]
    log.info("%s: %d repetitions done", config.label, config.repetitions)
    return ExperimentResult(config, tuple(series), aggregate(series))


def compare(dataset: Dataset, config_a: ExperimentConfig, config_b: ExperimentConfig,
            jobs: int = 1) -> List[BlockDifference]:
    a = run_experiment(dataset, config_a, jobs)
    b = run_experiment(dataset, config_b, jobs)
    return block_differences(a.summary, b.summary)


def sweep_history_length(dataset: Dataset, config: ExperimentConfig, lengths: Sequence[int],
                         jobs: int = 1) -> List[tuple]:
    if not lengths:
        raise ValueError("no history lengths to sweep")
    return [
        (n, run_experiment(dataset, replace(config, history_length=int(n)), jobs).overall_mean)
        for n in lengths
    ]


def sweep_schedule_ratio(dataset: Dataset, config: ExperimentConfig, ratios: Sequence[float],
                         jobs: int = 1) -> List[tuple]:
    if not ratios:
        raise ValueError("no ratios to sweep")
    return [
        (r, run_experiment(dataset, replace(config, schedule_ratio=float(r)), jobs).overall_mean)
        for r in ratios
    ]


# --------------------------------------------------------------------------
# CSV output


def write_evaluations(path, results: Sequence[ExperimentResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVALUATION_COLUMNS)
        for res in results:
            for rep, series in enumerate(res.series):
                for e in series:
                    writer.writerow((
                        res.config.method, res.config.reward, rep, e.cycle_id, repr(e.napfd),
                        e.detected_failures, e.total_failures, e.scheduled_count, e.suite_size,
                    ))


def write_blocks(path, blocks: Sequence[BlockDifference]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BLOCK_COLUMNS)
        for b in blocks:
            writer.writerow((b.block_start, b.block_end, repr(b.mean_napfd_a),
                             repr(b.mean_napfd_b), repr(b.difference)))


def write_sweep(path, param: str, rows: Sequence[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow((param, "mean_napfd"))
        for value, mean in rows:
            writer.writerow((value, repr(float(mean))))
