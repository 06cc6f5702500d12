"""Reproducible Monte Carlo experiment driver with CSV/JSON emission."""

from otfs_lab.harness.config import ConfigError, ExperimentConfig
from otfs_lab.harness.runner import ResultRow, ResultTable, emit, run

__all__ = ["ConfigError", "ExperimentConfig", "ResultRow", "ResultTable", "emit", "run"]
