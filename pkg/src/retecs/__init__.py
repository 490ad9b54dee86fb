"""Reinforcement-learning test case prioritization and selection for CI replay."""

from .domain import (
    CycleLog,
    FeatureScaling,
    PrioritizedSuite,
    Schedule,
    ScheduleResult,
    TestCaseRecord,
    featurize,
    rank,
    update_record,
)
from .evaluation import CycleEvaluation, aggregate, apfd, block_differences, napfd
from .experiment import ExperimentConfig, run_experiment, run_replay
from .ingestion import Dataset, SyntheticSpec, generate_synthetic, load_csv, write_csv

__version__ = "0.1.0"
