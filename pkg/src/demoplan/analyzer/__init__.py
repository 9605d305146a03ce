"""Demonstration analysis: keyframes, skill-sequence reasoning, grounding, demo plans."""
from __future__ import annotations

from .pipeline import (
    GROUPS,
    TASK_DESCRIPTIONS,
    AnalysisOptions,
    AnalysisTrace,
    RemoteBackend,
    RuleBasedBackend,
    TranscriptBackend,
    analyze_demo,
    keyframes_for,
    options_for_group,
    plan_from_transcript,
)
from .plan import INITIAL_STATE, DemoTaskPlan, InvalidSequence, build_demo_plan, ground_steps, validate_steps
from .records import (
    DIRECTION_WORDS,
    ENV_CLASSES,
    TARGET_CLASSES,
    CoverageGap,
    DemoRecord,
    KeyFrame,
    SceneAnnotation,
    SceneObject,
    annotate_keyframes,
    direction_word,
    strip_status,
    uniform_keyframes,
)
from .remote import RemoteConfig, RemoteUnavailable, build_messages, infer_skill_sequence_remote, post_chat
from .rules import NoMatchingSkill, RuleParams, infer_skill_sequence_rule_based, infer_step
from .steps import SkillStep, collapse_steps, fill_missing_targets, step_from_ground, step_objects, to_ground_action
from .transcript import TranscriptParseError, format_clock, format_transcript, parse_reasoner_transcript

__all__ = [name for name in dir() if not name.startswith("_")]
