"""Configuration, experiment runners, outage analytics and the CLI."""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .outage import OutageEstimate, outage_analytic, outage_monte_carlo

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "config_from_dict",
    "load_config",
    "OutageEstimate",
    "outage_analytic",
    "outage_monte_carlo",
]
