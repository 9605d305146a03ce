from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import pytest
from hypothesis import given, settings, strategies as st

from demoplan.analyzer import SceneObject, SkillStep, analyze_demo, build_demo_plan
from demoplan.pddl import translate_library
from demoplan.planner import (
    NOT_EXECUTED,
    ExecutionPolicy,
    NoBlockForClass,
    NoEnvObjects,
    SceneConfig,
    StepOutcome,
    TaskPlan,
    execute_with_feedback,
    extract_template,
    plan_new_task,
    scene_goal,
    validate_task_plan,
)
from demoplan.sim import SimConfig, block_signature, demo_scene, ground_truth_script, library_for, random_scene
from demoplan.sim.demo import synthesize_demo
from demoplan.skill_model import SkillReturn

CONFIG = SimConfig.load()


def _demo_plan(task):
    scene = demo_scene(task, 0, CONFIG)
    lib = library_for(task)
    return analyze_demo(synthesize_demo(scene, ground_truth_script(scene, lib), 0, CONFIG, lib), lib)


@pytest.fixture(scope="module")
def cable_template():
    return extract_template(_demo_plan("cable"), "cable-demo")


@pytest.fixture(scope="module")
def cap_template():
    return extract_template(_demo_plan("cap"), "cap-demo")


def _cable_scene(kinds, seed=0):
    clips = tuple(SceneObject(f"clip{i + 1}", k, (0.1 * i, 0.4, 0.05), (0.0, 0.0, 1.0)) for i, k in enumerate(kinds))
    return SceneConfig("cable_mounting", (SceneObject("cable", "cable", (-0.3, 0.3, 0.05)),) + clips,
                       tuple(c.id for c in clips), seed)


# -- templates -----------------------------------------------------------------


def test_cable_template_blocks(cable_template):
    t = cable_template
    assert t.keys == ["clip_C", "clip_U"]
    assert t.prologue == () and t.epilogue == ()
    for block in t.blocks:
        assert [s.skill for s in block.steps] == ["move_object", "grasp", "stretch", "insert", "open_hand"]
        assert block.target == "cable"
    assert t.block_for("clip_U").env == "clip2"
    assert t.block_for("clip_X") is t.blocks[0]


def test_cap_template_keyed_by_target(cap_template):
    assert cap_template.keys == ["cap_inner"]
    assert [s.skill for s in cap_template.blocks[0].steps] == ["move_object", "grasp", "tighten", "release"]


def test_template_needs_env_objects():
    lib = library_for("cable")
    plan = build_demo_plan(lib, translate_library(lib), [SkillStep("grasp", "cable"), SkillStep("open_hand", "cable")],
                           {}, task="cable_mounting")
    with pytest.raises(NoEnvObjects):
        extract_template(plan)


# -- planning new scenes -------------------------------------------------------


def test_three_clip_scene(cable_template):
    scene = _cable_scene(["clip_U", "clip_C", "clip_U"])
    plan = plan_new_task(cable_template, scene)
    assert block_signature(plan.steps) == block_signature(ground_truth_script(scene))
    assert [plan.steps[a].env for a, _ in plan.blocks] == ["clip1", "clip2", "clip3"]
    inserts = [s for s in plan.steps if s.skill == "insert"]
    assert all(s.params["direction"] == "downward" for s in inserts)
    assert validate_task_plan(plan).ok


def test_direction_follows_opening(cable_template):
    scene = _cable_scene(["clip_U"])
    clip = replace(scene.object("clip1"), opening=(1.0, 0.0, 0.0))
    scene = SceneConfig(scene.task, (scene.object("cable"), clip), ("clip1",))
    plan = plan_new_task(cable_template, scene)
    assert next(s for s in plan.steps if s.skill == "insert").params["direction"] == "backward"


def test_zero_clip_scene_gives_empty_plan(cable_template):
    scene = SceneConfig("cable_mounting", (SceneObject("cable", "cable", (0, 0.4, 0.05)),), ())
    plan = plan_new_task(cable_template, scene)
    assert plan.steps == () and validate_task_plan(plan).ok
    with pytest.raises(ValueError):
        scene.check()


def test_cap_scene_tightens_both(cap_template):
    scene = random_scene("cap", 3, CONFIG)
    plan = plan_new_task(cap_template, scene)
    tightens = [(s.target, s.env) for s in plan.steps if s.skill == "tighten"]
    assert tightens == [("cap1", "bottle1"), ("cap2", "bottle1")]


def test_task_mismatch(cable_template):
    with pytest.raises(NoBlockForClass):
        plan_new_task(cable_template, random_scene("cap", 0, CONFIG))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from(["clip_U", "clip_C"]), min_size=1, max_size=4), st.randoms(use_true_random=False))
def test_plan_equivariant_under_reordering(cable_template, kinds, rnd):
    scene = _cable_scene(kinds)
    order = list(scene.ordering)
    rnd.shuffle(order)
    shuffled = SceneConfig(scene.task, scene.objects, tuple(order))
    a, b = plan_new_task(cable_template, scene), plan_new_task(cable_template, shuffled)
    blocks_a = {a.steps[i].env: a.steps[i:j] for i, j in a.blocks}
    blocks_b = [b.steps[i:j] for i, j in b.blocks]
    assert blocks_b == [blocks_a[oid] for oid in order]
    assert validate_task_plan(b).ok


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["cable", "cap"]))
def test_every_random_plan_validates(cable_template, cap_template, seed, task):
    scene = random_scene(task, seed, CONFIG)
    plan = plan_new_task(cable_template if task == "cable" else cap_template, scene)
    assert validate_task_plan(plan).ok
    assert block_signature(plan.steps) == block_signature(ground_truth_script(scene))


def test_task_plan_roundtrip(cable_template):
    plan = plan_new_task(cable_template, random_scene("cable", 11, CONFIG))
    back = TaskPlan.from_dict(json.loads(plan.dumps()))
    assert back.dumps() == plan.dumps()


def test_scene_validation():
    obj = SceneObject("a", "cable", (0, 0, 0))
    with pytest.raises(ValueError):
        SceneConfig("cable_mounting", (obj, obj), ())
    with pytest.raises(ValueError):
        SceneConfig("cable_mounting", (obj,), ("b",))
    with pytest.raises(ValueError):
        SceneConfig("weaving", (obj,), ())


def test_scene_goal_ends_with_open_hand():
    scene = _cable_scene(["clip_U", "clip_C"])
    lib = library_for("cable")
    goal = scene_goal(scene, lib, translate_library(lib))
    assert [str(a) for a in goal] == ["(inserted cable downward clip1)", "(inserted cable downward clip2)",
                                      "(hand_open)"]


# -- execution with feedback ---------------------------------------------------


@dataclass
class ScriptedExecutor:
    """Returns a fixed sequence of returns per skill name; success otherwise."""

    script: dict
    calls: list = field(default_factory=list)
    success: bool = True

    def execute(self, step, library):
        threshold = library.resolve(step.skill).threshold_for("clip_U" if step.env else None)
        self.calls.append((step.skill, threshold))
        queue = self.script.get(step.skill)
        ret = queue.pop(0) if queue else SkillReturn.success()
        return StepOutcome(ret, 0.5)

    def achieved(self, atoms):
        return self.success


@pytest.fixture
def one_clip_plan(cable_template):
    return plan_new_task(cable_template, _cable_scene(["clip_U"]))


def test_retry_relaxes_threshold(one_clip_plan):
    before = one_clip_plan.dumps()
    ex = ScriptedExecutor({"insert": [SkillReturn.error("TorqueLimit")]})
    result = execute_with_feedback(one_clip_plan, ex, ExecutionPolicy("retry_relaxed", 1.2, 1))
    inserts = [c for c in ex.calls if c[0] == "insert"]
    assert len(inserts) == 2
    assert inserts[1][1] == pytest.approx(inserts[0][1] * 1.2)
    record = next(r for r in result.records if r.step.skill == "insert")
    assert record.retries == 1 and record.result == "Success" and record.elapsed == 1.0
    assert result.executable and result.task_success and result.retries == 1
    assert one_clip_plan.dumps() == before


def test_above_condition_relaxes_downward(one_clip_plan):
    ex = ScriptedExecutor({"stretch": [SkillReturn.error("TorqueLimit")]})
    execute_with_feedback(one_clip_plan, ex)
    first, second = [c[1] for c in ex.calls if c[0] == "stretch"]
    assert second == pytest.approx(first / 1.2)


def test_abort_marks_rest_not_executed(one_clip_plan):
    ex = ScriptedExecutor({"stretch": [SkillReturn.error("TorqueLimit")] * 2}, success=False)
    result = execute_with_feedback(one_clip_plan, ex)
    results = [r.result for r in result.records]
    assert results == ["Success", "Success", "Error(TorqueLimit)", NOT_EXECUTED, NOT_EXECUTED]
    assert not result.executable and not result.task_success


def test_skip_continues(one_clip_plan):
    ex = ScriptedExecutor({"stretch": [SkillReturn.error("TorqueLimit")]})
    result = execute_with_feedback(one_clip_plan, ex, ExecutionPolicy("skip"))
    assert [r.result for r in result.records][2:] == ["Error(TorqueLimit)", "Success", "Success"]
    assert not result.executable and len(ex.calls) == 5


def test_policy_validation():
    with pytest.raises(ValueError):
        ExecutionPolicy("pray")
    with pytest.raises(ValueError):
        ExecutionPolicy(relax_factor=1.0)
    with pytest.raises(ValueError):
        ExecutionPolicy(max_retries=-1)
