"""Command-line experiment runner."""

from .config import ConfigError, ExperimentConfig, ResourceGuard, load_config, validate
from .runner import RunResult, rerun_manifest, run

__all__ = ["ConfigError", "ExperimentConfig", "ResourceGuard", "RunResult", "load_config", "rerun_manifest", "run", "validate"]
