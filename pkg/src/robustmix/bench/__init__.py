"""Benchmark harness: experiment configs, cell runners, and file emission."""

from .config import ConfigError, ExperimentConfig, default_config, load_config
from .experiments import run_experiment, run_moments_check, run_pipeline_bench, run_subspace_bench
from .output import ResultRecord, emit_outputs, read_results

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "default_config",
    "ResultRecord",
    "emit_outputs",
    "load_config",
    "read_results",
    "run_experiment",
    "run_moments_check",
    "run_pipeline_bench",
    "run_subspace_bench",
]
