"""Pedestrian-aware online safety monitoring for a path-following vehicle.

Intent estimation over a potential-field pedestrian model, data-driven reach tubes of a
bicycle-model vehicle, and a decision module that brakes when the two may intersect.
"""
from .config import ScenarioConfig, builtin_scenario, load_config
from .control import ConfigError, Mode, Path, PathController
from .decision import Decision, DecisionConfig, decide
from .intent import FilterConfig, estimate_step, init_filter
from .pedestrian import EnvironmentMap, GpfaParams, Obstacle, StateSpaceModel, rollout
from .reach import ReachContext, ReachTube, SensitivityFunction, learn_sensitivity, nested_tubes
from .sim import RunLog, evaluate_accuracy, load_betas, run_scenario, train_betas

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Decision", "DecisionConfig", "EnvironmentMap", "FilterConfig", "GpfaParams",
    "Mode", "Obstacle", "Path", "PathController", "ReachContext", "ReachTube", "RunLog",
    "ScenarioConfig", "SensitivityFunction", "StateSpaceModel", "builtin_scenario", "decide",
    "estimate_step", "evaluate_accuracy", "init_filter", "learn_sensitivity", "load_betas",
    "load_config", "nested_tubes", "rollout", "run_scenario", "train_betas",
]
