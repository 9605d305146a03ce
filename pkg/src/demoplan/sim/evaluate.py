"""Ablation evaluation: reasonableness, executability and success per (group, task)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from ..analyzer.pipeline import GROUPS, analyze_demo, options_for_group
from ..analyzer.plan import INITIAL_STATE, DemoTaskPlan
from ..analyzer.steps import SkillStep, step_from_ground
from ..pddl import forward_search, translate_library
from ..planner import (
    ExecResult,
    ExecutionPolicy,
    SceneConfig,
    TaskPlan,
    execute_with_feedback,
    extract_template,
    plan_new_task,
    scene_goal,
)
from ..skill_model import SkillLibrary
from .config import SimConfig
from .demo import synthesize_demo
from .executor import SimExecutor, SimState, execute_step
from .scenes import block_signature, demo_scene, ground_truth_script, library_for, random_scene, task_name

TASK_KEYS = ("cable", "cap")
CSV_COLUMNS = ("group", "task", "reasonableness", "executability", "success", "overall")


@dataclass(frozen=True)
class SceneOutcome:
    scene_seed: int
    reasonable: bool
    executable: bool
    success: bool
    error: str = ""


@dataclass(frozen=True)
class EvalReport:
    group: str
    task: str
    reasonableness: float
    executability: float
    success: float
    scenes: tuple = ()
    demo_error: str = ""

    @property
    def overall(self) -> float:
        return (self.reasonableness + self.executability + self.success) / 3.0

    def row(self) -> dict:
        return {"group": self.group, "task": self.task, "reasonableness": self.reasonableness,
                "executability": self.executability, "success": self.success, "overall": self.overall}


def _short_task(task: str) -> str:
    return "cable" if task_name(task) == "cable_mounting" else "cap"


def demo_plan_for(group: str, task: str, seed: int, config: SimConfig) -> DemoTaskPlan:
    """Synthesize the task's demonstration and analyze it with the group's ablation."""
    scene = demo_scene(task, seed, config)
    lib = library_for(task)
    demo = synthesize_demo(scene, ground_truth_script(scene, lib), seed, config, lib)
    options = options_for_group(group, **({"uniform_frames": int(config.eval["uniform_frames"])}
                                         if group == "B" else {}))
    return analyze_demo(demo, lib, options)


def search_plan(scene: SceneConfig, lib: SkillLibrary) -> TaskPlan:
    """Plan from the translated domain alone (no demonstration)."""
    domain = translate_library(lib)
    objects = {oid: ("env_object" if oid in scene.env_ids else "object") for oid in (o.id for o in scene.objects)}
    if "direction" in domain.types:
        for skill in lib.all_skills():
            for _, p in skill.symbolic_params():
                if p.kind == "direction":
                    objects.setdefault(str(p.value), "direction")
    goal = scene_goal(scene, lib, domain)
    plan = forward_search(domain, INITIAL_STATE, goal, objects)
    steps = tuple(step_from_ground(g, lib) for g in plan)
    return TaskPlan(steps, lib, domain, scene, {"demo_plan": "none", "scene": f"{scene.task}-{scene.seed}"})


def _scene_seed(seed: int, task: str, i: int) -> int:
    return int(np.random.default_rng([int(seed), TASK_KEYS.index(_short_task(task)), i]).integers(0, 2**31 - 1))


def evaluate_scene(plan: Optional[TaskPlan], scene: SceneConfig, config: SimConfig,
                   policy: ExecutionPolicy) -> tuple[bool, bool, bool, Optional[ExecResult]]:
    reference = block_signature(ground_truth_script(scene))
    if plan is None:
        return False, False, False, None
    result = execute_with_feedback(plan, SimExecutor.for_scene(scene, scene.seed, config), policy)
    return block_signature(plan.steps) == reference, result.executable, result.task_success, result


def run_config(group: str, task: str, n_scenes: int = 20, seed: int = 0,
               config: Optional[SimConfig] = None, policy: Optional[ExecutionPolicy] = None) -> EvalReport:
    """Analyze the demonstration under the group's ablation, then plan and execute random scenes."""
    if group not in GROUPS:
        raise ValueError(f"unknown group {group!r}")
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    config = config or SimConfig.load()
    policy = policy or config.policy
    task = task_name(task)
    template = None
    demo_error = ""
    if group != "D":
        try:
            template = extract_template(demo_plan_for(group, task, seed, config))
        except Exception as exc:  # the ablated pipeline may fail at any stage
            demo_error = f"{type(exc).__name__}: {exc}"
    outcomes = []
    for i in range(n_scenes):
        scene = random_scene(task, _scene_seed(seed, task, i), config)
        plan, error = None, demo_error
        if group == "D":
            try:
                plan = search_plan(scene, library_for(task))
            except Exception as exc:
                error = f"{type(exc).__name__}: {exc}"
        elif template is not None:
            try:
                plan = plan_new_task(template, scene)
            except Exception as exc:
                error = f"{type(exc).__name__}: {exc}"
        r, e, s, _ = evaluate_scene(plan, scene, config, policy)
        outcomes.append(SceneOutcome(scene.seed, r, e, s, error))
    n = float(len(outcomes))
    return EvalReport(group, _short_task(task),
                      sum(o.reasonable for o in outcomes) / n,
                      sum(o.executable for o in outcomes) / n,
                      sum(o.success for o in outcomes) / n,
                      tuple(outcomes), demo_error)


def run_grid(groups: Sequence[str] = GROUPS, tasks: Sequence[str] = TASK_KEYS, n_scenes: int = 20,
             seed: int = 0, config: Optional[SimConfig] = None) -> list[EvalReport]:
    config = config or SimConfig.load()
    return [run_config(g, t, n_scenes, seed, config) for g in groups for t in tasks]


def reports_to_csv(reports: Iterable[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        writer.writerow([rep.group, rep.task] + [f"{x:.4f}" for x in
                        (rep.reasonableness, rep.executability, rep.success, rep.overall)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Skill-condition trials
# ---------------------------------------------------------------------------

CONDITION_CASES = ("stretch+insert_U", "stretch+insert_C", "tighten")


@dataclass(frozen=True)
class ConditionResult:
    case: str
    before: float
    after: float
    trials: int
    thresholds_before: dict = field(default_factory=dict)
    thresholds_after: dict = field(default_factory=dict)


def _trial_scene(case: str, seed: int, config: SimConfig) -> tuple[SceneConfig, list[SkillStep]]:
    if case == "tighten":
        scene = random_scene("cap", seed, config)
        scene = SceneConfig(scene.task, scene.objects, ("cap1",), scene.seed)
        return scene, [SkillStep("tighten", "cap1", "bottle1")]
    cls = "clip_U" if case.endswith("_U") else "clip_C"
    base = random_scene("cable", seed, config, n_objects=1)
    clip = base.object("clip1")
    scene = SceneConfig(base.task, (base.object("cable"), replace(clip, cls=cls)), ("clip1",), base.seed)
    return scene, [SkillStep("stretch", "cable"), SkillStep("insert", "cable", "clip1", {"direction": "downward"})]


def _trial(scene: SceneConfig, steps: Sequence[SkillStep], lib: SkillLibrary, config: SimConfig) -> bool:
    """One attempt per step from a held, positioned object; success needs R and the physical effect."""
    target = steps[0].target
    env = next(s.env for s in steps if s.env)
    state = SimState(scene, scene.seed, holding=target, at=((target, env),))
    for step in steps:
        state, ret, _ = execute_step(state, step, lib, config)
        if not ret.ok:
            return False
    goal = scene_goal(scene, lib, translate_library(lib))
    have = state.atoms()
    return all(a in have or a.predicate == "hand_open" for a in goal)


def _thresholds(lib: SkillLibrary, case: str) -> dict:
    if case == "tighten":
        return {"tighten": lib.resolve("tighten").threshold_for("bottle")}
    cls = "clip_U" if case.endswith("_U") else "clip_C"
    return {"stretch": lib.resolve("stretch").threshold_for(), "insert": lib.resolve("insert").threshold_for(cls)}


def evaluate_skill_conditions(n_trials: int = 20, seed: int = 0,
                              config: Optional[SimConfig] = None) -> list[ConditionResult]:
    """Success rate of each contact skill chain with initial vs. demonstration-grounded thresholds."""
    config = config or SimConfig.load()
    grounded = {t: demo_plan_for("ours", t, seed, config).grounded_library for t in TASK_KEYS}
    out = []
    for k, case in enumerate(CONDITION_CASES):
        task = "cap" if case == "tighten" else "cable"
        before_lib, after_lib = library_for(task), grounded[task]
        counts = [0, 0]
        for i in range(n_trials):
            scene, steps = _trial_scene(case, int(np.random.default_rng([seed, 99, k, i]).integers(0, 2**31 - 1)),
                                        config)
            counts[0] += _trial(scene, steps, before_lib, config)
            counts[1] += _trial(scene, steps, after_lib, config)
        out.append(ConditionResult(case, counts[0] / n_trials, counts[1] / n_trials, n_trials,
                                   _thresholds(before_lib, case), _thresholds(after_lib, case)))
    return out
