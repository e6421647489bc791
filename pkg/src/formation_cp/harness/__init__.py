"""Experiment harness: schedules, campaigns, metrics, result files and CLI."""

from .campaign import (
    HashMismatchError,
    TableSet,
    coverage_table,
    run_calibration_campaign,
    run_evaluation,
    summarize,
)
from .config import METHODS, ConfigError, ExperimentConfig, InitialStateRanges
from .schedule import ScheduleSpec, leader_schedule
from .simulate import TrialOutcome, simulate_trial

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "HashMismatchError",
    "InitialStateRanges",
    "METHODS",
    "ScheduleSpec",
    "TableSet",
    "TrialOutcome",
    "coverage_table",
    "leader_schedule",
    "run_calibration_campaign",
    "run_evaluation",
    "simulate_trial",
    "summarize",
]
