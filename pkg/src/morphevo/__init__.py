"""Evolving generalist neural-network controllers over 2-D morphology spaces."""

from .bandit import BanditState, compute_reward, thompson_select, update_posteriors
from .engine import RunConfig, RunRecord, run_batch, train, validate
from .envs import EpisodeResult, builtin_environments, get_env, run_episode
from .evalstats import evaluate_on_grid, mann_whitney_u
from .morphospace import (
    Interval,
    Morphology,
    MorphologyGrid,
    MorphologySpace,
    build_testing_grid,
    build_training_grid,
    build_validation_grid,
    builtin_presets,
)
from .neuro import ControllerSpec, forward
from .schedules import Schedule, next_morphology
from .xnes import XnesState, ask, best_of, tell

__version__ = "0.1.0"

__all__ = [
    "BanditState",
    "ControllerSpec",
    "EpisodeResult",
    "Interval",
    "Morphology",
    "MorphologyGrid",
    "MorphologySpace",
    "RunConfig",
    "RunRecord",
    "Schedule",
    "XnesState",
    "ask",
    "best_of",
    "build_testing_grid",
    "build_training_grid",
    "build_validation_grid",
    "builtin_environments",
    "builtin_presets",
    "compute_reward",
    "evaluate_on_grid",
    "forward",
    "get_env",
    "mann_whitney_u",
    "next_morphology",
    "run_batch",
    "run_episode",
    "tell",
    "thompson_select",
    "train",
    "update_posteriors",
    "validate",
]
