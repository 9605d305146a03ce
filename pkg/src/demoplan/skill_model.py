"""Object-centric skills, interaction statuses and layered skill libraries.

A skill is the tuple (target object, contextual object, precondition,
success condition, action, return) plus named parameters. Libraries are
layered: an object-specific library inherits from the general one and may
shadow its skills.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator, Mapping, Optional, Union


class UnknownSkill(KeyError):
    """Raised when a skill name resolves in neither a library nor its parents."""

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else "unknown skill"


class ObjectStatus(str, enum.Enum):
    IDLE = "idle"
    GRASPED = "grasped"
    RELEASED = "released"
    LINEAR_FORCE = "linear_force"
    TORQUE = "torque"
    AMBIGUOUS = "ambiguous"


FINAL_STATUSES = (
    ObjectStatus.IDLE,
    ObjectStatus.GRASPED,
    ObjectStatus.RELEASED,
    ObjectStatus.LINEAR_FORCE,
    ObjectStatus.TORQUE,
)


# ---------------------------------------------------------------------------
# Condition expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GripperHolding:
    """The gripper holds ``obj`` (a slot name, ``"target"`` by default)."""

    obj: str = "target"


@dataclass(frozen=True)
class PoseReached:
    """The end effector reached ``pose``.

    ``pose`` is either ``"env"`` (the contextual object's pose) or the name of
    a pose parameter of the skill.
    """

    pose: str = "env"
    tolerance: float = 0.01

    def __post_init__(self) -> None:
        _check_threshold(self.tolerance, "tolerance")


def _check_threshold(value: float, what: str) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{what} must be finite and non-negative, got {value!r}")


@dataclass(frozen=True)
class _Resistance:
    threshold: float

    channel = "force"
    sense = "below"

    def __post_init__(self) -> None:
        _check_threshold(self.threshold, "threshold")

    @property
    def param_key(self) -> str:
        return f"{self.channel}_threshold"

    def holds(self, f_r: float, tau_r: float) -> bool:
        value = f_r if self.channel == "force" else tau_r
        if self.sense == "below":
            return value < self.threshold
        return value > self.threshold

    def with_threshold(self, threshold: float) -> "_Resistance":
        return type(self)(float(threshold))


class ResistanceForceBelow(_Resistance):
    channel, sense = "force", "below"


class ResistanceForceAbove(_Resistance):
    channel, sense = "force", "above"


class ResistanceTorqueAbove(_Resistance):
    channel, sense = "torque", "above"


class ResistanceTorqueBelow(_Resistance):
    channel, sense = "torque", "below"


@dataclass(frozen=True)
class And:
    items: tuple

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("And requires at least one operand")
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Not:
    inner: Any

    def __post_init__(self) -> None:
        if isinstance(self.inner, Not):
            raise ValueError("double negation is not in normal form; use negate()")


ConditionExpr = Union[
    GripperHolding, PoseReached, _Resistance, And, Not
]

RESISTANCE_KINDS = {
    cls.__name__: cls
    for cls in (ResistanceForceBelow, ResistanceForceAbove, ResistanceTorqueAbove, ResistanceTorqueBelow)
}


def negate(cond: ConditionExpr) -> ConditionExpr:
    """Negation that keeps the normal form (no ``Not(Not(x))``)."""
    if isinstance(cond, Not):
        return cond.inner
    return Not(cond)


def iter_conditions(cond: Optional[ConditionExpr]) -> Iterator[ConditionExpr]:
    """Depth-first walk over a condition tree."""
    if cond is None:
        return
    yield cond
    if isinstance(cond, And):
        for item in cond.items:
            yield from iter_conditions(item)
    elif isinstance(cond, Not):
        yield from iter_conditions(cond.inner)


def resistance_of(cond: Optional[ConditionExpr]) -> Optional[_Resistance]:
    for c in iter_conditions(cond):
        if isinstance(c, _Resistance):
            return c
    return None


def required_holding(cond: Optional[ConditionExpr]) -> Optional[bool]:
    """What ``cond`` demands of the gripper: True (holding), False (empty) or None."""
    if cond is None:
        return None
    if isinstance(cond, GripperHolding):
        return True
    if isinstance(cond, Not) and isinstance(cond.inner, GripperHolding):
        return False
    if isinstance(cond, And):
        for item in cond.items:
            req = required_holding(item)
            if req is not None:
                return req
    return None


def condition_to_dict(cond: Optional[ConditionExpr]) -> Optional[dict]:
    if cond is None:
        return None
    if isinstance(cond, GripperHolding):
        return {"kind": "GripperHolding", "object": cond.obj}
    if isinstance(cond, PoseReached):
        return {"kind": "PoseReached", "pose": cond.pose, "tolerance": cond.tolerance}
    if isinstance(cond, _Resistance):
        return {"kind": type(cond).__name__, "threshold": cond.threshold}
    if isinstance(cond, And):
        return {"kind": "And", "items": [condition_to_dict(c) for c in cond.items]}
    if isinstance(cond, Not):
        return {"kind": "Not", "inner": condition_to_dict(cond.inner)}
    raise TypeError(f"not a condition: {cond!r}")


def condition_from_dict(doc: Optional[Mapping[str, Any]]) -> Optional[ConditionExpr]:
    if doc is None:
        return None
    kind = doc["kind"]
    if kind == "GripperHolding":
        return GripperHolding(doc.get("object", "target"))
    if kind == "PoseReached":
        return PoseReached(doc.get("pose", "env"), float(doc.get("tolerance", 0.01)))
    if kind in RESISTANCE_KINDS:
        return RESISTANCE_KINDS[kind](float(doc["threshold"]))
    if kind == "And":
        return And(tuple(condition_from_dict(d) for d in doc["items"]))
    if kind == "Not":
        return Not(condition_from_dict(doc["inner"]))
    raise ValueError(f"unknown condition kind {kind!r}")


# ---------------------------------------------------------------------------
# Skills
# ---------------------------------------------------------------------------

PARAM_KINDS = ("pose", "direction", "threshold", "tolerance")
SYMBOLIC_PARAM_KINDS = ("direction", "pose")


@dataclass(frozen=True)
class Param:
    kind: str
    value: Union[float, str]

    def __post_init__(self) -> None:
        if self.kind not in PARAM_KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        if self.kind in ("threshold", "tolerance"):
            _check_threshold(float(self.value), self.kind)


@dataclass(frozen=True)
class SkillReturn:
    """Return value R of a skill execution: Success or Error(code)."""

    ok: bool
    code: Optional[str] = None

    @classmethod
    def success(cls) -> "SkillReturn":
        return cls(True)

    @classmethod
    def error(cls, code: str) -> "SkillReturn":
        return cls(False, code)

    def __str__(self) -> str:
        return "Success" if self.ok else f"Error({self.code})"


def override_key(key: str, env_class: str) -> str:
    return f"{key}@{env_class}"


@dataclass(frozen=True)
class Skill:
    name: str
    action: str
    status_signature: ObjectStatus
    target_class: Optional[str] = None
    env_slot: Optional[str] = None
    pre: Optional[ConditionExpr] = None
    success: Optional[ConditionExpr] = None
    params: Mapping[str, Param] = field(default_factory=dict)
    error_codes: tuple = ()
    description: str = ""

    def __post_init__(self) -> None:
        if self.status_signature not in FINAL_STATUSES:
            raise ValueError(f"{self.name}: status_signature must be a final status")
        object.__setattr__(self, "params", dict(self.params))
        res = resistance_of(self.success)
        if res is not None:
            stored = self.params.get(res.param_key)
            if stored is None:
                raise ValueError(f"{self.name}: success condition needs parameter {res.param_key!r}")
            if float(stored.value) != res.threshold:
                raise ValueError(f"{self.name}: {res.param_key} disagrees with the success condition")

    def __hash__(self) -> int:
        return hash((self.name, self.action, self.target_class, self.env_slot))

    @property
    def threshold_key(self) -> Optional[str]:
        res = resistance_of(self.success)
        return res.param_key if res else None

    def symbolic_params(self) -> list[tuple[str, Param]]:
        return [(k, p) for k, p in self.params.items() if p.kind in SYMBOLIC_PARAM_KINDS]

    def threshold_for(self, env_class: Optional[str] = None) -> Optional[float]:
        """Success threshold, honouring a per-contextual-class override."""
        key = self.threshold_key
        if key is None:
            return None
        if env_class is not None and override_key(key, env_class) in self.params:
            return float(self.params[override_key(key, env_class)].value)
        return float(self.params[key].value)

    def success_for(self, env_class: Optional[str] = None) -> Optional[ConditionExpr]:
        res = resistance_of(self.success)
        if res is None:
            return self.success
        return _replace_resistance(self.success, res.with_threshold(self.threshold_for(env_class)))

    def with_threshold(self, value: float, env_class: Optional[str] = None) -> "Skill":
        key = self.threshold_key
        if key is None:
            raise ValueError(f"{self.name} has no resistance success condition")
        params = dict(self.params)
        if env_class is None:
            params[key] = Param("threshold", float(value))
            res = resistance_of(self.success)
            success = _replace_resistance(self.success, res.with_threshold(float(value)))
            return replace(self, params=params, success=success)
        params[override_key(key, env_class)] = Param("threshold", float(value))
        return replace(self, params=params)


def _replace_resistance(cond: ConditionExpr, new: _Resistance) -> ConditionExpr:
    if isinstance(cond, _Resistance):
        return new
    if isinstance(cond, And):
        return And(tuple(_replace_resistance(c, new) for c in cond.items))
    if isinstance(cond, Not):
        return Not(_replace_resistance(cond.inner, new))
    return cond


@dataclass(frozen=True)
class SkillLibrary:
    object_class: str
    skills: tuple = ()
    parent: Optional["SkillLibrary"] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "skills", tuple(self.skills))
        names = [s.name for s in self.skills]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValueError(f"duplicate skill names in {self.object_class}: {sorted(dupes)}")

    def local(self, name: str) -> Optional[Skill]:
        for skill in self.skills:
            if skill.name == name:
                return skill
        return None

    def resolve(self, name: str) -> Skill:
        lib: Optional[SkillLibrary] = self
        while lib is not None:
            skill = lib.local(name)
            if skill is not None:
                return skill
            lib = lib.parent
        raise UnknownSkill(f"no skill {name!r} in library {self.object_class!r} or its parents")

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
        except UnknownSkill:
            return False
        return True

    def all_skills(self) -> list[Skill]:
        """Visible skills in library order, child before parent, shadowed ones dropped."""
        seen: set[str] = set()
        out: list[Skill] = []
        lib: Optional[SkillLibrary] = self
        while lib is not None:
            for skill in lib.skills:
                if skill.name not in seen:
                    seen.add(skill.name)
                    out.append(skill)
            lib = lib.parent
        return out

    def flatten(self) -> "SkillLibrary":
        return SkillLibrary(self.object_class, tuple(self.all_skills()))

    def with_skill(self, skill: Skill) -> "SkillLibrary":
        """Copy with ``skill`` replacing (or shadowing) the same-named skill in this layer."""
        if self.local(skill.name) is not None:
            skills = tuple(skill if s.name == skill.name else s for s in self.skills)
        else:
            skills = self.skills + (skill,)
        return replace(self, skills=skills)


def resolve_skill(lib: SkillLibrary, name: str) -> Skill:
    return lib.resolve(name)


def find_by_signature(lib: SkillLibrary, status: ObjectStatus, holding: bool) -> list[Skill]:
    """Skills expected to run under ``status`` whose precondition admits ``holding``."""
    out = []
    for skill in lib.all_skills():
        if skill.status_signature != status:
            continue
        need = required_holding(skill.pre)
        if need is None or need == holding:
            out.append(skill)
    return out


# ---------------------------------------------------------------------------
# Builtin libraries
# ---------------------------------------------------------------------------

TORQUE_LIMIT = "TorqueLimit"


def _general_library() -> SkillLibrary:
    empty_hand = Not(GripperHolding())
    skills = (
        Skill(
            "move", "move_to_pose", ObjectStatus.IDLE,
            pre=empty_hand,
            success=PoseReached("pose", 0.01),
            params={"pose": Param("pose", "home"), "tolerance": Param("tolerance", 0.01)},
            description="Move the end effector to a named pose.",
        ),
        Skill(
            "move_object", "move_to_object", ObjectStatus.IDLE,
            target_class="object", env_slot="env_object",
            pre=empty_hand,
            success=PoseReached("env", 0.01),
            params={"tolerance": Param("tolerance", 0.01)},
            description="Bring the end effector (and the target) to the contextual object.",
        ),
        Skill(
            "grasp", "close_gripper", ObjectStatus.GRASPED,
            target_class="object", pre=empty_hand, success=GripperHolding(),
            description="Close the gripper on the target object.",
        ),
        Skill(
            "release", "open_gripper", ObjectStatus.RELEASED,
            target_class="object", pre=GripperHolding(), success=empty_hand,
            description="Open the gripper and let go of the target.",
        ),
        Skill(
            "push", "push", ObjectStatus.LINEAR_FORCE,
            target_class="object", pre=GripperHolding(),
            success=ResistanceForceAbove(5.0),
            params={"force_threshold": Param("threshold", 5.0)},
            error_codes=(TORQUE_LIMIT,),
            description="Apply a linear force to the held object.",
        ),
    )
    return SkillLibrary("object", skills)


def _cable_library(general: SkillLibrary) -> SkillLibrary:
    skills = (
        Skill(
            "stretch", "stretch", ObjectStatus.LINEAR_FORCE,
            target_class="cable", pre=GripperHolding(),
            success=ResistanceForceAbove(10.0),
            params={"force_threshold": Param("threshold", 10.0)},
            error_codes=(TORQUE_LIMIT,),
            description="Pull the grasped cable taut.",
        ),
        Skill(
            "insert", "insert", ObjectStatus.TORQUE,
            target_class="cable", env_slot="clip",
            pre=And((GripperHolding(), PoseReached("env", 0.01))),
            success=ResistanceForceBelow(5.0),
            params={
                "direction": Param("direction", "downward"),
                "force_threshold": Param("threshold", 5.0),
                override_key("force_threshold", "clip_C"): Param("threshold", 10.0),
            },
            error_codes=(TORQUE_LIMIT,),
            description="Push the cable into the clip until it loses contact.",
        ),
        Skill(
            "open_hand", "open_gripper", ObjectStatus.RELEASED,
            target_class="cable", pre=GripperHolding(), success=Not(GripperHolding()),
            description="Open the hand holding the cable.",
        ),
    )
    return SkillLibrary("cable", skills, parent=general)


def _cap_library(general: SkillLibrary) -> SkillLibrary:
    skills = (
        Skill(
            "tighten", "screw", ObjectStatus.TORQUE,
            target_class="cap", env_slot="bottle",
            pre=And((GripperHolding(), PoseReached("env", 0.01))),
            success=ResistanceTorqueAbove(0.02),
            params={"torque_threshold": Param("threshold", 0.02)},
            error_codes=(TORQUE_LIMIT,),
            description="Screw the held cap onto the bottle.",
        ),
    )
    return SkillLibrary("cap", skills, parent=general)


def build_builtin_libraries() -> dict[str, SkillLibrary]:
    general = _general_library()
    return {
        "object": general,
        "cable": _cable_library(general),
        "cap": _cap_library(general),
    }


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def skill_to_dict(skill: Skill) -> dict:
    return {
        "name": skill.name,
        "action": skill.action,
        "target_class": skill.target_class,
        "env_slot": skill.env_slot,
        "pre": condition_to_dict(skill.pre),
        "success": condition_to_dict(skill.success),
        "params": {k: {"kind": p.kind, "value": p.value} for k, p in skill.params.items()},
        "return": {"success": True, "errors": list(skill.error_codes)},
        "status_signature": skill.status_signature.value,
        "description": skill.description,
    }


def skill_from_dict(doc: Mapping[str, Any]) -> Skill:
    return Skill(
        name=doc["name"],
        action=doc["action"],
        status_signature=ObjectStatus(doc["status_signature"]),
        target_class=doc.get("target_class"),
        env_slot=doc.get("env_slot"),
        pre=condition_from_dict(doc.get("pre")),
        success=condition_from_dict(doc.get("success")),
        params={k: Param(v["kind"], v["value"]) for k, v in doc.get("params", {}).items()},
        error_codes=tuple(doc.get("return", {}).get("errors", ())),
        description=doc.get("description", ""),
    )


def library_to_dict(lib: SkillLibrary) -> dict:
    return {
        "object_class": lib.object_class,
        "parent": library_to_dict(lib.parent) if lib.parent is not None else None,
        "skills": [skill_to_dict(s) for s in lib.skills],
    }


def library_from_dict(doc: Mapping[str, Any]) -> SkillLibrary:
    parent = doc.get("parent")
    return SkillLibrary(
        doc["object_class"],
        tuple(skill_from_dict(s) for s in doc.get("skills", ())),
        parent=library_from_dict(parent) if parent else None,
    )


def dumps_library(lib: SkillLibrary) -> str:
    return json.dumps(library_to_dict(lib), indent=2, sort_keys=True)


def loads_library(text: str) -> SkillLibrary:
    return library_from_dict(json.loads(text))


def builtin_library(name: str) -> SkillLibrary:
    libs = build_builtin_libraries()
    try:
        return libs[name]
    except KeyError:
        raise UnknownSkill(f"no builtin library {name!r}; choose from {sorted(libs)}") from None


def skill_names(skills: Iterable[Skill]) -> list[str]:
    return [s.name for s in skills]
