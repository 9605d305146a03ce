"""Synthetic demonstrations, resistance-profile execution and evaluation."""
from __future__ import annotations

from .config import SimConfig, default_config_dict
from .demo import EmptyDemo, InvalidScript, synthesize_demo
from .evaluate import (
    CONDITION_CASES,
    CSV_COLUMNS,
    TASK_KEYS,
    ConditionResult,
    EvalReport,
    SceneOutcome,
    demo_plan_for,
    evaluate_skill_conditions,
    reports_to_csv,
    run_config,
    run_grid,
    search_plan,
)
from .executor import SimExecutor, SimState, UnknownAction, execute_step
from .profiles import Episode, ProfileSet, ResistanceProfile, run_profile, run_profile_ticks
from .scenes import block_signature, demo_scene, ground_truth_script, library_for, random_scene, task_name

__all__ = [name for name in dir() if not name.startswith("_")]
