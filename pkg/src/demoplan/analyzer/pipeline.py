"""Staged demonstration analysis: segment, annotate, reason, ground, assemble."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

from ..ftsig import GroundingParams
from ..pddl import PddlDomain, translate_library
from ..skill_model import SkillLibrary
from ..tactile import ClassifierParams, Segment, segment_sequence
from .plan import DemoTaskPlan, InvalidSequence, build_demo_plan, ground_steps, validate_steps
from .records import DemoRecord, KeyFrame, annotate_keyframes, strip_status, uniform_keyframes
from .remote import RemoteConfig, infer_skill_sequence_remote
from .rules import RuleParams, infer_skill_sequence_rule_based
from .steps import SkillStep, collapse_steps, fill_missing_targets
from .transcript import parse_reasoner_transcript

GROUPS = ("ours", "A", "B", "C", "D")

TASK_DESCRIPTIONS = {
    "cable_mounting": "Mount the cable into every clip, in order, and leave the hand open.",
    "cap_tightening": "Screw every cap onto the bottle and leave the hand open.",
}


class ReasonerBackend(Protocol):
    capability: str  # "deterministic" or "remote"

    def infer(self, domain: PddlDomain, keyframes: Sequence[KeyFrame],
              task_description: str) -> list[SkillStep]: ...


@dataclass(frozen=True)
class RuleBasedBackend:
    lib: SkillLibrary
    params: RuleParams = RuleParams()
    capability: str = "deterministic"

    def infer(self, domain, keyframes, task_description):
        return infer_skill_sequence_rule_based(domain, self.lib, keyframes, task_description, self.params)


@dataclass(frozen=True)
class RemoteBackend:
    config: RemoteConfig
    lib: Optional[SkillLibrary] = None
    capability: str = "remote"

    def infer(self, domain, keyframes, task_description):
        return infer_skill_sequence_remote(self.config, domain, keyframes, task_description, self.lib)


@dataclass(frozen=True)
class TranscriptBackend:
    """Replays a fixed transcript; stands in for the remote service offline."""

    text: str
    lib: Optional[SkillLibrary] = None
    capability: str = "deterministic"

    def infer(self, domain, keyframes, task_description):
        return parse_reasoner_transcript(self.text, self.lib)


@dataclass(frozen=True)
class AnalysisOptions:
    strip_status: bool = False
    uniform_frames: int = 0  # > 0: sample this many frames instead of key timestamps
    ground: bool = True
    classifier: ClassifierParams = ClassifierParams()
    grounding: GroundingParams = GroundingParams()
    rules: RuleParams = RuleParams()


def options_for_group(group: str, **overrides) -> AnalysisOptions:
    if group not in GROUPS:
        raise ValueError(f"unknown group {group!r}; expected one of {', '.join(GROUPS)}")
    if group == "D":
        raise ValueError("group D plans without a demonstration; there is nothing to analyze")
    base = {"A": dict(strip_status=True), "B": dict(strip_status=True, uniform_frames=8),
            "C": dict(ground=False)}.get(group, {})
    base.update(overrides)
    return AnalysisOptions(**base)


@dataclass
class AnalysisTrace:
    """Intermediate products, kept for inspection and the CLI."""

    segments: list = field(default_factory=list)
    keyframes: list = field(default_factory=list)
    raw_steps: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    groundings: dict = field(default_factory=dict)


def keyframes_for(demo: DemoRecord, options: AnalysisOptions, segments: Sequence[Segment]) -> list[KeyFrame]:
    if options.uniform_frames > 0:
        frames = uniform_keyframes(demo.scenes, float(demo.tactile.timestamps[0]),
                                   float(demo.tactile.timestamps[-1]) + demo.tactile.frame_period,
                                   options.uniform_frames)
    else:
        frames = annotate_keyframes(demo.scenes, segments)
    return strip_status(frames) if options.strip_status else frames


def analyze_demo(demo: DemoRecord, lib: SkillLibrary, options: AnalysisOptions = AnalysisOptions(),
                 backend: Optional[ReasonerBackend] = None, task_description: Optional[str] = None,
                 trace: Optional[AnalysisTrace] = None,
                 timer: Optional[Callable[[str], object]] = None) -> DemoTaskPlan:
    """Run every analysis stage on one demonstration.

    Raises the stage's own error (``EmptySequence``, ``CoverageGap``,
    ``NoMatchingSkill``, ``NoSeparation``, ``InvalidSequence`` ...).
    """
    trace = trace if trace is not None else AnalysisTrace()
    mark = timer or (lambda stage: None)
    domain = translate_library(lib)
    description = task_description or TASK_DESCRIPTIONS.get(demo.task, demo.task)
    trace.segments = segment_sequence(demo.tactile, options.classifier)
    mark("segment")
    trace.keyframes = keyframes_for(demo, options, trace.segments)
    mark("annotate")
    backend = backend or RuleBasedBackend(lib, options.rules)
    trace.raw_steps = list(backend.infer(domain, trace.keyframes, description))
    trace.steps = fill_missing_targets(collapse_steps(trace.raw_steps), lib)
    mark("reason")
    report = validate_steps(domain, lib, trace.steps)
    if not report.all_ok:
        raise InvalidSequence(report)
    if options.ground:
        trace.groundings = ground_steps(lib, trace.steps, demo.wrench.resistance(), demo.scenes,
                                        options.grounding)
    mark("ground")
    classes = {o.id: o.cls for o in (demo.scenes[0].objects if demo.scenes else ())}
    plan = build_demo_plan(lib, domain, trace.steps, trace.groundings, description, demo.task, classes)
    mark("assemble")
    return plan


def plan_from_transcript(text: str, lib: SkillLibrary, task: str = "cable_mounting",
                         task_description: Optional[str] = None) -> DemoTaskPlan:
    """Demo plan straight from a reasoning transcript (no signals, so no grounding)."""
    steps = fill_missing_targets(collapse_steps(parse_reasoner_transcript(text, lib)), lib)
    return build_demo_plan(lib, translate_library(lib), steps, {},
                           task_description or TASK_DESCRIPTIONS.get(task, task), task)
