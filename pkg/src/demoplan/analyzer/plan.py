"""Demonstration task plan: validated steps plus the grounded skill library."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from ..ftsig import GroundingParams, NoSeparation, ResistanceTrace, TraceCoverage, ground_skill, update_library
from ..pddl import Atom, PddlDomain, ValidationReport, emit, parse, validate_plan
from ..skill_model import SkillLibrary, library_from_dict, library_to_dict, resistance_of
from ..tactile import Segment
from .records import SceneAnnotation
from .steps import SkillStep, to_ground_action

INITIAL_STATE = frozenset({Atom("hand_open")})


class InvalidSequence(ValueError):
    def __init__(self, report: ValidationReport, message: str = ""):
        self.report = report
        failure = report.first_failure()
        detail = message or (failure.message if failure else "goal not satisfied")
        super().__init__(f"demonstrated sequence does not validate: {detail}")


def validate_steps(domain: PddlDomain, lib: SkillLibrary, steps: Sequence[SkillStep],
                   init: Iterable[Atom] = INITIAL_STATE, goal: Iterable[Atom] = ()) -> ValidationReport:
    """Validate steps against ``domain``; unknown skills or unbound slots fail the step."""
    ground = []
    for step in steps:
        try:
            ground.append(to_ground_action(step, lib))
        except (KeyError, ValueError) as exc:
            from ..pddl import GroundAction, StepCheck

            prefix = validate_plan(domain, init, ground, ())
            checks = list(prefix.steps) + [StepCheck(len(ground), GroundAction(step.skill, ()), False, (),
                                                     str(exc).strip('"'))]
            return ValidationReport(tuple(checks), False, prefix.final_state, tuple(goal))
    return validate_plan(domain, init, ground, goal)


@dataclass(frozen=True)
class DemoTaskPlan:
    steps: tuple
    grounded_library: SkillLibrary
    domain: PddlDomain
    task_description: str = ""
    task: str = ""
    groundings: Mapping[str, float] = field(default_factory=dict)
    object_classes: Mapping[str, str] = field(default_factory=dict)  # demo object id -> class

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "task_description": self.task_description,
            "steps": [s.to_dict() for s in self.steps],
            "groundings": {k: round(float(v), 6) for k, v in sorted(self.groundings.items())},
            "library": library_to_dict(self.grounded_library),
            "domain": emit(self.domain),
            "object_classes": dict(sorted(self.object_classes.items())),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DemoTaskPlan":
        plan = cls(
            tuple(SkillStep.from_dict(s) for s in doc["steps"]),
            library_from_dict(doc["library"]),
            parse(doc["domain"]),
            doc.get("task_description", ""),
            doc.get("task", ""),
            dict(doc.get("groundings") or {}),
            dict(doc.get("object_classes") or {}),
        )
        report = validate_steps(plan.domain, plan.grounded_library, plan.steps)
        if not report.all_ok:
            raise InvalidSequence(report)
        return plan


def build_demo_plan(lib: SkillLibrary, domain: PddlDomain, steps: Sequence[SkillStep],
                    groundings: Mapping[str, float], task_description: str = "",
                    task: str = "", object_classes: Optional[Mapping[str, str]] = None) -> DemoTaskPlan:
    """Fail closed: the steps must replay from the initial state without error."""
    report = validate_steps(domain, lib, steps)
    if not report.all_ok:
        raise InvalidSequence(report)
    return DemoTaskPlan(tuple(steps), update_library(lib, groundings), domain, task_description, task,
                        dict(groundings), dict(object_classes or {}))


def _class_of(env_id: Optional[str], scenes: Sequence[SceneAnnotation]) -> Optional[str]:
    if env_id is None:
        return None
    for scene in scenes[:1]:
        obj = scene.object(env_id)
        if obj is not None:
            return obj.cls
    return None


def ground_steps(lib: SkillLibrary, steps: Sequence[SkillStep], trace: ResistanceTrace,
                 scenes: Sequence[SceneAnnotation] = (),
                 params: GroundingParams = GroundingParams()) -> dict[str, float]:
    """Threshold per grounded skill from each step's evidence window.

    Skills bound to a contextual object get one key per object class
    (``insert@clip_U``) plus the base key (mean over all occurrences);
    unbound skills get the mean over their occurrences.
    """
    per_key: dict[str, list[float]] = defaultdict(list)
    for step in steps:
        skill = lib.resolve(step.skill)
        if resistance_of(skill.success) is None or step.span is None:
            continue
        segment = Segment(skill.status_signature, float(step.span[0]), float(step.span[1]))
        theta = ground_skill(trace, segment, skill, params)
        per_key[skill.name].append(theta)
        cls = _class_of(step.env, scenes) if skill.env_slot else None
        if cls is not None:
            per_key[f"{skill.name}@{cls}"].append(theta)
    return {k: float(np.mean(v)) for k, v in sorted(per_key.items())}


__all__ = [
    "DemoTaskPlan",
    "INITIAL_STATE",
    "InvalidSequence",
    "NoSeparation",
    "TraceCoverage",
    "build_demo_plan",
    "ground_steps",
    "validate_steps",
]
