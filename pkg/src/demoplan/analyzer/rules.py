"""Deterministic reasoner: maps annotated keyframes to skill steps.

Statuses are the only evidence for contact skills (grasp, stretch, insert,
tighten, release). Without statuses, only motion in the scene annotations
is available, which supports moves and a guess at the contact skill near an
object.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..pddl import PddlDomain
from ..skill_model import ObjectStatus, Skill, SkillLibrary, find_by_signature
from .records import KeyFrame, SceneObject, direction_word
from .steps import SkillStep, collapse_steps


class NoMatchingSkill(LookupError):
    pass


@dataclass(frozen=True)
class RuleParams:
    min_motion: float = 0.02  # m, displacement that counts as deliberate motion
    bind_radius: float = 0.10  # m, how close an object must be to be bound


def _approach(kf: KeyFrame, params: RuleParams) -> Optional[SceneObject]:
    """Env object the gripper moved toward during this keyframe's span, if any."""
    if kf.end_scene is None:
        return None
    end_obj, end_dist = kf.end_scene.nearest_env()
    if end_obj is None or end_dist > params.bind_radius:
        return None
    start_dist = float(np.linalg.norm(np.asarray(end_obj.position) - np.asarray(kf.scene.ee_position)))
    if start_dist - end_dist < params.min_motion:
        return None
    return end_obj


def _contact_object(kf: KeyFrame, params: RuleParams) -> Optional[SceneObject]:
    obj, dist = kf.scene.nearest_env()
    return obj if obj is not None and dist <= params.bind_radius else None


def _params_for(skill: Skill, obj: Optional[SceneObject]) -> dict[str, str]:
    out: dict[str, str] = {}
    for name, p in skill.symbolic_params():
        if p.kind == "direction" and obj is not None and obj.opening is not None:
            out[name] = direction_word(-np.asarray(obj.opening))
        else:
            out[name] = str(p.value)
    return out


def _pick(lib: SkillLibrary, status: ObjectStatus, holding: bool, kf: KeyFrame) -> Skill:
    hits = find_by_signature(lib, status, holding)
    if not hits:
        raise NoMatchingSkill(
            f"no skill in {lib.object_class!r} runs under {status.value} with holding={holding} "
            f"(keyframe at {kf.timestamp:.2f} s)"
        )
    return hits[0]


def _bind(skill: Skill, kf: KeyFrame, env: Optional[SceneObject], reason: str) -> SkillStep:
    target = kf.scene.target if skill.target_class is not None else None
    env_id = env.id if (skill.env_slot is not None and env is not None) else None
    if skill.env_slot is not None and env_id is None:
        raise NoMatchingSkill(f"{skill.name} needs a contextual object but none is within reach "
                              f"at {kf.timestamp:.2f} s")
    return SkillStep(skill.name, target, env_id, _params_for(skill, env), reason,
                     None, kf.timestamp, (kf.timestamp, kf.t_end if kf.t_end is not None else kf.timestamp))


def _move_step(lib: SkillLibrary, kf: KeyFrame, obj: SceneObject, evidence: str) -> Optional[SkillStep]:
    moves = [s for s in find_by_signature(lib, ObjectStatus.IDLE, kf.scene.holding) if s.env_slot]
    if moves and kf.scene.target is not None:
        return _bind(moves[0], kf, obj, f"approach to {obj.id}, {evidence}")
    plain = [s for s in find_by_signature(lib, ObjectStatus.IDLE, kf.scene.holding) if not s.env_slot]
    if plain:
        return SkillStep(plain[0].name, None, None, _params_for(plain[0], None),
                         f"approach to {obj.id}, {evidence}", None, kf.timestamp,
                         (kf.timestamp, kf.t_end if kf.t_end is not None else kf.timestamp))
    return None


def infer_step(lib: SkillLibrary, kf: KeyFrame, params: RuleParams = RuleParams()) -> Optional[SkillStep]:
    holding = kf.scene.holding
    status = kf.status
    if status is None:
        return _infer_without_status(lib, kf, params)
    if status is ObjectStatus.IDLE:
        obj = _approach(kf, params)
        if obj is None:
            return None
        return _move_step(lib, kf, obj, "status idle")
    if status is ObjectStatus.GRASPED:
        skill = _pick(lib, status, False, kf)
        return _bind(skill, kf, None, "status grasped (sourcing field)")
    if status is ObjectStatus.RELEASED:
        skill = _pick(lib, status, True, kf)
        return _bind(skill, kf, None, "status released (sinking field)")
    if status is ObjectStatus.LINEAR_FORCE:
        skill = _pick(lib, status, True, kf)
        env = _contact_object(kf, params) if skill.env_slot else None
        return _bind(skill, kf, env, "status linear_force (uniform flow) while holding")
    if status is ObjectStatus.TORQUE:
        skill = _pick(lib, status, True, kf)
        env = _contact_object(kf, params) if skill.env_slot else None
        where = f" at {env.id}" if env is not None else ""
        return _bind(skill, kf, env, f"status torque (twisted flow) while holding{where}")
    raise NoMatchingSkill(f"cannot reason about status {status.value}")


def _infer_without_status(lib: SkillLibrary, kf: KeyFrame, params: RuleParams) -> Optional[SkillStep]:
    near = _contact_object(kf, params)
    if near is None:
        obj = _approach(kf, params)
        return None if obj is None else _move_step(lib, kf, obj, "no status")
    if kf.scene.holding and kf.displacement() >= params.min_motion:
        contact = [s for s in lib.all_skills() if s.env_slot and s.status_signature is ObjectStatus.TORQUE]
        if contact:
            return _bind(contact[0], kf, near, f"holding, moving at {near.id}, no status")
    return None


def infer_skill_sequence_rule_based(domain: Optional[PddlDomain], lib: SkillLibrary,
                                    keyframes: Sequence[KeyFrame], task_description: str = "",
                                    params: RuleParams = RuleParams()) -> list[SkillStep]:
    """One candidate step per keyframe, adjacent duplicates collapsed.

    ``domain`` restricts output to actions it declares (when given).
    """
    if not keyframes:
        raise ValueError("no keyframes to reason about")
    raw = []
    for i, kf in enumerate(keyframes, 1):
        step = infer_step(lib, kf, params)
        if step is None:
            continue
        if domain is not None and step.skill not in {a.name for a in domain.actions}:
            raise NoMatchingSkill(f"{step.skill} is not an action of domain {domain.name}")
        raw.append(SkillStep(step.skill, step.target, step.env, step.params,
                             f"evidence: {step.reason}", i, step.timestamp, step.span))
    return collapse_steps(raw)
