"""Experiment orchestration: configs, runs, manifests and reports."""

from .cli import main, run_experiment, run_suite
from .config import EXPERIMENTS, default_config, load_config, resolve_system
from .report import emit_report

__all__ = ["EXPERIMENTS", "default_config", "emit_report", "load_config", "main", "resolve_system",
           "run_experiment", "run_suite"]
