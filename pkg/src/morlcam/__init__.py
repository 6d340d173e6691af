"""Multi-objective RL camera tuning against a simulated programmable camera."""

from ._kernels import BACKEND
from .core import DEFAULT_SETTINGS, Action, CameraSettings, SettingsGrid, enumerate_grid
from .camsim import CameraEnvironment, ScenarioConfig, load_scenario, preset_names
from .estimators import AuProfile, SyntheticEstimator, true_accuracy
from .morl import AgentConfig, AggregationStrategy, MorlAgent

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DEFAULT_SETTINGS", "Action", "CameraSettings", "SettingsGrid", "enumerate_grid",
    "CameraEnvironment", "ScenarioConfig", "load_scenario", "preset_names",
    "AuProfile", "SyntheticEstimator", "true_accuracy",
    "AgentConfig", "AggregationStrategy", "MorlAgent",
]
