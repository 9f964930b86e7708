from .config import (EXPERIMENTS, ConfigError, Diagnostic, ExperimentConfig, has_errors,
                     load_config, parse_config, validate)
from .experiments import REGISTRY
from .runner import CSV_COLUMNS, THREADS_ENV, RunResult, run

__all__ = ["EXPERIMENTS", "ConfigError", "Diagnostic", "ExperimentConfig", "has_errors",
           "load_config", "parse_config", "validate", "REGISTRY", "CSV_COLUMNS", "THREADS_ENV",
           "RunResult", "run"]
