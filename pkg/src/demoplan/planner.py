"""Plan generalization from a demonstration and execution with return feedback.

The demo plan is cut into per-object blocks; a new scene gets one block per
object in its ordering, with the bindings and direction parameters
re-derived from the scene. Execution feeds every skill return back into a
small policy (retry with a relaxed threshold, skip, or abort).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Optional, Protocol, Sequence

from .analyzer.plan import INITIAL_STATE, DemoTaskPlan, validate_steps
from .analyzer.records import ENV_CLASSES, SceneObject, direction_word
from .analyzer.steps import SkillStep, to_ground_action
from .ftsig import ResistanceTrace
from .pddl import Atom, PddlDomain, ValidationReport, bind, emit, parse
from .skill_model import ObjectStatus, SkillLibrary, SkillReturn, library_from_dict, library_to_dict, resistance_of

TASKS = ("cable_mounting", "cap_tightening")
TASK_LIBRARY = {"cable_mounting": "cable", "cap_tightening": "cap"}
# skill whose effect is the per-object goal, and which binding identifies the object
TASK_GOAL_SKILL = {"cable_mounting": "insert", "cap_tightening": "tighten"}
TASK_BLOCK_KEY = {"cable_mounting": "env", "cap_tightening": "target"}
TARGET_OBJECT_CLASSES = {"cable_mounting": ("cable",), "cap_tightening": ("cap_inner", "cap_outer")}


class NoEnvObjects(ValueError):
    pass


class NoBlockForClass(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ValidationFailed(ValueError):
    def __init__(self, report: ValidationReport, message: str = ""):
        self.report = report
        super().__init__(message or "generated plan does not validate")


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SceneConfig:
    task: str
    objects: tuple
    ordering: tuple
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "ordering", tuple(self.ordering))
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {', '.join(TASKS)}")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"object ids must be unique: {ids}")
        missing = [oid for oid in self.ordering if oid not in ids]
        if missing:
            raise ValueError(f"ordering names unknown objects {missing}")
        if len(set(self.ordering)) != len(self.ordering):
            raise ValueError("ordering lists an object twice")

    def object(self, oid: str) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(f"scene has no object {oid!r}")

    def of_class(self, *classes: str) -> list[SceneObject]:
        return [o for o in self.objects if o.cls in classes]

    @property
    def target_ids(self) -> list[str]:
        return [o.id for o in self.of_class(*TARGET_OBJECT_CLASSES[self.task])]

    @property
    def env_ids(self) -> list[str]:
        return [o.id for o in self.objects if o.cls in ENV_CLASSES]

    def check(self) -> None:
        """Task-level invariants (a cable scene needs a clip, a cap scene caps and one bottle)."""
        if self.task == "cable_mounting":
            if not self.of_class("clip_U", "clip_C"):
                raise ValueError("cable scene needs at least one clip")
            if len(self.of_class("cable")) != 1:
                raise ValueError("cable scene needs exactly one cable")
        else:
            if not self.of_class("cap_inner", "cap_outer"):
                raise ValueError("cap scene needs at least one cap")
            if len(self.of_class("bottle")) != 1:
                raise ValueError("cap scene needs exactly one bottle")

    def to_dict(self) -> dict:
        return {"task": self.task, "seed": int(self.seed), "ordering": list(self.ordering),
                "objects": [o.to_dict() for o in self.objects]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SceneConfig":
        return cls(doc["task"], tuple(SceneObject.from_dict(o) for o in doc["objects"]),
                   tuple(doc["ordering"]), int(doc.get("seed", 0)))


def _ordered_binding(scene: SceneConfig, oid: str) -> tuple[str, str]:
    """(target id, env id) for the per-object block of ``oid``."""
    if TASK_BLOCK_KEY[scene.task] == "env":
        targets = scene.target_ids
        if not targets:
            raise ValueError("scene has no target object")
        return targets[0], oid
    bottles = scene.of_class("bottle")
    if not bottles:
        raise ValueError("scene has no bottle")
    return oid, bottles[0].id


def _direction_for(obj: SceneObject) -> Optional[str]:
    if obj.opening is None:
        return None
    return direction_word([-x for x in obj.opening])


def goal_step(scene: SceneConfig, oid: str, lib: SkillLibrary) -> SkillStep:
    target, env = _ordered_binding(scene, oid)
    skill = lib.resolve(TASK_GOAL_SKILL[scene.task])
    params = {}
    for name, p in skill.symbolic_params():
        value = _direction_for(scene.object(env)) if p.kind == "direction" else None
        params[name] = value or str(p.value)
    return SkillStep(skill.name, target, env, params)


def scene_goal(scene: SceneConfig, lib: SkillLibrary, domain: PddlDomain) -> tuple:
    """Per-object effect atoms in scene order, then an open hand."""
    atoms: list[Atom] = []
    for oid in scene.ordering:
        g = to_ground_action(goal_step(scene, oid, lib), lib)
        action = domain.action(g.name)
        for a in action.add_list:
            atoms.append(a.substitute(bind(action, g.args)))
    return tuple(atoms) + (Atom("hand_open"),)


# ---------------------------------------------------------------------------
# Templates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanBlock:
    key: str  # class of the object the block is about
    target: Optional[str]
    env: Optional[str]
    steps: tuple


@dataclass(frozen=True)
class PlanTemplate:
    task: str
    prologue: tuple
    blocks: tuple  # PlanBlock in demo order
    epilogue: tuple
    library: SkillLibrary
    domain: PddlDomain
    demo_id: str = "demo"

    def block_for(self, cls: str) -> PlanBlock:
        for block in self.blocks:
            if block.key == cls:
                return block
        if self.blocks:
            return self.blocks[0]  # same-task fallback
        raise NoBlockForClass(f"template has no block for class {cls!r}")

    @property
    def keys(self) -> list[str]:
        return [b.key for b in self.blocks]


def _is_lead_in(step: SkillStep, lib: SkillLibrary) -> bool:
    return step.env is None and lib.resolve(step.skill).status_signature in (ObjectStatus.IDLE, ObjectStatus.GRASPED)


def _is_trailing_move(step: SkillStep, lib: SkillLibrary) -> bool:
    skill = lib.resolve(step.skill)
    return step.env is None and skill.status_signature is ObjectStatus.IDLE


def extract_template(demo_plan: DemoTaskPlan, demo_id: str = "demo") -> PlanTemplate:
    """Cut the demo plan into prologue, per-object blocks and epilogue.

    A block is a maximal run of steps bound to the same (target, env) pair,
    extended backwards over unbound approach/grasp steps and forwards up to
    the next block; trailing unbound moves form the epilogue.
    """
    steps = list(demo_plan.steps)
    lib = demo_plan.grounded_library
    task = demo_plan.task or "cable_mounting"
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    runs: list[list] = []  # [(target, env), first, last]
    for i, step in enumerate(steps):
        if step.env is None:
            continue
        pair = (step.target, step.env)
        if runs and runs[-1][0] == pair:
            runs[-1][2] = i
        else:
            runs.append([pair, i, i])
    if not runs:
        raise NoEnvObjects("demo plan binds no contextual object, so there is nothing to generalize over")
    starts = []
    floor = 0
    for pair, first, last in runs:
        start = first
        while start - 1 >= floor and _is_lead_in(steps[start - 1], lib):
            start -= 1
        starts.append(start)
        floor = last + 1
    end = len(steps)
    while end - 1 > runs[-1][2] and _is_trailing_move(steps[end - 1], lib):
        end -= 1
    bounds = starts + [end]
    key_by = TASK_BLOCK_KEY[task]
    blocks = []
    for k, (pair, _, _) in enumerate(runs):
        oid = pair[1] if key_by == "env" else pair[0]
        cls = demo_plan.object_classes.get(oid)
        if cls is None:
            raise ValueError(f"demo plan does not record the class of {oid!r}")
        blocks.append(PlanBlock(cls, pair[0], pair[1], tuple(steps[bounds[k]:bounds[k + 1]])))
    return PlanTemplate(task, tuple(steps[:starts[0]]), tuple(blocks), tuple(steps[end:]), lib,
                        demo_plan.domain, demo_id)


def _rebind(step: SkillStep, mapping: Mapping[Optional[str], str], env_obj: Optional[SceneObject],
            lib: SkillLibrary) -> SkillStep:
    params = dict(step.params)
    if env_obj is not None and step.env is not None:
        skill = lib.resolve(step.skill)
        for name, p in skill.symbolic_params():
            if p.kind == "direction":
                params[name] = _direction_for(env_obj) or params.get(name, str(p.value))
    return SkillStep(step.skill, mapping.get(step.target, step.target), mapping.get(step.env, step.env), params,
                     step.reason)


# ---------------------------------------------------------------------------
# Task plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskPlan:
    steps: tuple
    library: SkillLibrary
    domain: PddlDomain
    scene: SceneConfig
    provenance: Mapping[str, str] = field(default_factory=dict)
    blocks: tuple = ()  # (start, stop) step-index range per scene object

    def to_dict(self) -> dict:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "blocks": [list(b) for b in self.blocks],
            "scene": self.scene.to_dict(),
            "provenance": dict(self.provenance),
            "library": library_to_dict(self.library),
            "domain": emit(self.domain),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TaskPlan":
        return cls(tuple(SkillStep.from_dict(s) for s in doc["steps"]), library_from_dict(doc["library"]),
                   parse(doc["domain"]), SceneConfig.from_dict(doc["scene"]), dict(doc.get("provenance") or {}),
                   tuple(tuple(b) for b in doc.get("blocks", ())))


def validate_task_plan(plan: TaskPlan) -> ValidationReport:
    goal = scene_goal(plan.scene, plan.library, plan.domain)
    return validate_steps(plan.domain, plan.library, plan.steps, INITIAL_STATE, goal)


def plan_new_task(template: PlanTemplate, scene: SceneConfig) -> TaskPlan:
    """One instantiated block per object in ``scene.ordering``; validated against the scene goal."""
    if scene.task != template.task:
        raise NoBlockForClass(f"template is for {template.task}, scene is {scene.task}")
    lib = template.library
    steps: list[SkillStep] = []
    demo_target = template.blocks[0].target if template.blocks else None
    scene_targets = scene.target_ids
    base = {demo_target: scene_targets[0]} if demo_target and scene_targets else {}
    steps.extend(_rebind(s, base, None, lib) for s in template.prologue)
    ranges = []
    for oid in scene.ordering:
        block = template.block_for(scene.object(oid).cls)
        target, env = _ordered_binding(scene, oid)
        mapping = {block.target: target, block.env: env}
        start = len(steps)
        steps.extend(_rebind(s, mapping, scene.object(env), lib) for s in block.steps)
        ranges.append((start, len(steps)))
    steps.extend(_rebind(s, base, None, lib) for s in template.epilogue)
    plan = TaskPlan(tuple(steps), lib, template.domain, scene,
                    {"demo_plan": template.demo_id, "scene": f"{scene.task}-{scene.seed}"}, tuple(ranges))
    report = validate_task_plan(plan)
    if not report.ok:
        failure = report.first_failure()
        detail = failure.message if failure else "missing goals " + ", ".join(map(str, report.missing_goals))
        raise ValidationFailed(report, f"generated plan does not validate: {detail}")
    return plan


# ---------------------------------------------------------------------------
# Execution with feedback
# ---------------------------------------------------------------------------

POLICIES = ("retry_relaxed", "skip", "abort")
NOT_EXECUTED = "NotExecuted"


@dataclass(frozen=True)
class ExecutionPolicy:
    on_error: str = "retry_relaxed"
    relax_factor: float = 1.2
    max_retries: int = 1

    def __post_init__(self) -> None:
        if self.on_error not in POLICIES:
            raise ValueError(f"on_error must be one of {', '.join(POLICIES)}")
        if not self.relax_factor > 1:
            raise ValueError("relax_factor must be > 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def relax(self, threshold: float, sense: str) -> float:
        return threshold * self.relax_factor if sense == "below" else threshold / self.relax_factor


@dataclass(frozen=True)
class StepOutcome:
    ret: SkillReturn
    elapsed: float = 0.0
    trace: Optional[ResistanceTrace] = None


class Executor(Protocol):
    def execute(self, step: SkillStep, library: SkillLibrary) -> StepOutcome: ...

    def achieved(self, atoms: Iterable[Atom]) -> bool: ...


@dataclass(frozen=True)
class StepRecord:
    step: SkillStep
    result: str  # "Success", "Error(code)" or "NotExecuted"
    retries: int = 0
    elapsed: float = 0.0
    threshold: Optional[float] = None  # threshold in force on the last attempt

    def to_dict(self) -> dict:
        doc = {"step": self.step.describe(), "skill": self.step.skill, "result": self.result,
               "retries": self.retries, "elapsed": round(self.elapsed, 6)}
        if self.threshold is not None:
            doc["threshold"] = round(self.threshold, 6)
        return doc


@dataclass(frozen=True)
class ExecResult:
    records: tuple
    executable: bool
    task_success: bool
    trace: Optional[ResistanceTrace] = None

    @property
    def retries(self) -> int:
        return sum(r.retries for r in self.records)

    def to_dict(self) -> dict:
        doc: dict[str, Any] = {"executable": self.executable, "task_success": self.task_success,
                               "retries": self.retries, "steps": [r.to_dict() for r in self.records]}
        if self.trace is not None:
            doc["trace"] = {"t": [round(float(x), 4) for x in self.trace.t],
                            "f_r": [round(float(x), 4) for x in self.trace.f_r],
                            "tau_r": [round(float(x), 4) for x in self.trace.tau_r]}
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _env_class(plan: TaskPlan, step: SkillStep) -> Optional[str]:
    if step.env is None:
        return None
    try:
        return plan.scene.object(step.env).cls
    except KeyError:
        return None


def _relaxed_library(lib: SkillLibrary, step: SkillStep, env_class: Optional[str],
                     policy: ExecutionPolicy, current: float) -> tuple[SkillLibrary, float]:
    skill = lib.resolve(step.skill)
    res = resistance_of(skill.success)
    value = policy.relax(current, res.sense)
    return lib.with_skill(skill.with_threshold(value, env_class)), value


def execute_with_feedback(plan: TaskPlan, executor: Executor,
                          policy: ExecutionPolicy = ExecutionPolicy()) -> ExecResult:
    """Run the plan step by step, reacting to each return; never raises on skill errors."""
    records: list[StepRecord] = []
    traces: list[ResistanceTrace] = []
    executable = True
    stopped = False
    for step in plan.steps:
        if stopped:
            records.append(StepRecord(step, NOT_EXECUTED))
            continue
        lib = plan.library
        env_class = _env_class(plan, step)
        skill = lib.resolve(step.skill)
        threshold = skill.threshold_for(env_class)
        outcome = executor.execute(step, lib)
        elapsed = outcome.elapsed
        retries = 0
        if outcome.trace is not None:
            traces.append(outcome.trace)
        while (not outcome.ret.ok and policy.on_error == "retry_relaxed" and retries < policy.max_retries
               and threshold is not None):
            lib, threshold = _relaxed_library(lib, step, env_class, policy, threshold)
            outcome = executor.execute(step, lib)
            elapsed += outcome.elapsed
            retries += 1
            if outcome.trace is not None:
                traces.append(outcome.trace)
        records.append(StepRecord(step, str(outcome.ret), retries, elapsed, threshold))
        if not outcome.ret.ok:
            executable = False
            if policy.on_error != "skip":
                stopped = True
    trace = None
    if traces:
        trace = traces[0]
        for frag in traces[1:]:
            trace = trace.concat(frag)
    goal = scene_goal(plan.scene, plan.library, plan.domain)
    return ExecResult(tuple(records), executable, bool(executor.achieved(goal)), trace)
