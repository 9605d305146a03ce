"""Skill steps: a skill name bound to concrete objects and parameter values."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

from ..pddl import GroundAction, action_slots
from ..skill_model import SkillLibrary


@dataclass(frozen=True)
class SkillStep:
    skill: str
    target: Optional[str] = None
    env: Optional[str] = None
    params: Mapping[str, str] = field(default_factory=dict)
    reason: str = ""
    frame: Optional[int] = None
    timestamp: Optional[float] = None
    span: Optional[tuple] = None  # (t_start, t_end) of the evidence, seconds

    def __hash__(self) -> int:
        return hash((self.skill, self.target, self.env, tuple(sorted(self.params.items()))))

    @property
    def key(self) -> tuple:
        """Identity used for collapsing and comparing plans."""
        return (self.skill, self.target, self.env, tuple(sorted(self.params.items())))

    def describe(self) -> str:
        args = [a for a in (self.target, *self.params.values(), self.env) if a is not None]
        return f"({' '.join([self.skill, *args])})"

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {"skill": self.skill, "target": self.target, "env": self.env,
                               "params": dict(sorted(self.params.items())), "reason": self.reason}
        if self.frame is not None:
            doc["frame"] = self.frame
        if self.timestamp is not None:
            doc["timestamp"] = round(float(self.timestamp), 6)
        if self.span is not None:
            doc["span"] = [round(float(x), 6) for x in self.span]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SkillStep":
        span = doc.get("span")
        return cls(doc["skill"], doc.get("target"), doc.get("env"), dict(doc.get("params") or {}),
                   doc.get("reason", ""), doc.get("frame"), doc.get("timestamp"),
                   None if span is None else (float(span[0]), float(span[1])))


def collapse_steps(steps: Iterable[SkillStep]) -> list[SkillStep]:
    """Merge runs of consecutive steps with the same skill and bindings.

    The merged step keeps the first step's reason, frame and timestamp and
    spans the union of the run's evidence windows.
    """
    out: list[SkillStep] = []
    for step in steps:
        if out and out[-1].key == step.key:
            prev = out[-1]
            if prev.span and step.span:
                out[-1] = replace(prev, span=(prev.span[0], step.span[1]))
            continue
        out.append(step)
    return out


def fill_missing_targets(steps: Sequence[SkillStep], lib: SkillLibrary) -> list[SkillStep]:
    """Give target-taking steps without a target the most recent target seen."""
    out = []
    last: Optional[str] = None
    for step in steps:
        skill = lib.resolve(step.skill)
        if step.target is None and skill.target_class is not None and last is not None:
            step = replace(step, target=last)
        if step.target is not None:
            last = step.target
        out.append(step)
    return out


def to_ground_action(step: SkillStep, lib: SkillLibrary) -> GroundAction:
    """Ground PDDL action for a step; unbound symbolic parameters use the skill's defaults."""
    skill = lib.resolve(step.skill)
    args = []
    for slot in action_slots(skill):
        if slot.source == "target":
            value = step.target
        elif slot.source == "env":
            value = step.env
        else:
            value = step.params.get(slot.source)
            if value is None and slot.source in skill.params:
                value = str(skill.params[slot.source].value)
        if value is None:
            raise ValueError(f"step {step.describe()} leaves {slot.var} ({slot.source}) unbound")
        args.append(value)
    return GroundAction(step.skill, tuple(args))


def step_objects(steps: Sequence[SkillStep], lib: SkillLibrary) -> dict[str, str]:
    """Typed object universe mentioned by ``steps`` (constant -> PDDL type)."""
    objects: dict[str, str] = {}
    for step in steps:
        skill = lib.resolve(step.skill)
        ground = to_ground_action(step, lib)
        for slot, value in zip(action_slots(skill), ground.args):
            objects.setdefault(value, slot.type)
    return objects


def step_from_ground(action: GroundAction, lib: SkillLibrary) -> SkillStep:
    """Inverse of :func:`to_ground_action`."""
    skill = lib.resolve(action.name)
    slots = action_slots(skill)
    if len(slots) != len(action.args):
        raise ValueError(f"{action} has {len(action.args)} arguments, {skill.name} takes {len(slots)}")
    target = env = None
    params: dict[str, str] = {}
    for slot, value in zip(slots, action.args):
        if slot.source == "target":
            target = value
        elif slot.source == "env":
            env = value
        else:
            params[slot.source] = value
    return SkillStep(skill.name, target, env, params)
