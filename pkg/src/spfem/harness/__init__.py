"""Experiment configuration, runners and report emission."""
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, make_config  # noqa: F401
from .report import ExperimentReport  # noqa: F401
