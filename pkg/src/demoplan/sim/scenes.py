"""Scene layouts (demonstration and randomized evaluation scenes) and ground-truth scripts."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..analyzer.records import SceneObject
from ..analyzer.steps import SkillStep
from ..planner import SceneConfig, goal_step
from ..skill_model import SkillLibrary, builtin_library
from .config import SimConfig

UP = (0.0, 0.0, 1.0)
TASK_OF = {"cable": "cable_mounting", "cap": "cap_tightening",
           "cable_mounting": "cable_mounting", "cap_tightening": "cap_tightening"}


def task_name(task: str) -> str:
    try:
        return TASK_OF[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}; expected cable or cap") from None


def _positions(rng: np.random.Generator, n: int, config: SimConfig) -> list[tuple]:
    (x0, x1), (y0, y1), (z0, z1) = config.scenes["workspace"]
    sep = float(config.scenes["min_separation"])
    out: list[np.ndarray] = []
    for _ in range(10_000):
        if len(out) == n:
            break
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1), rng.uniform(z0, z1) if z1 > z0 else z0])
        if all(np.linalg.norm(p - q) >= sep for q in out):
            out.append(p)
    if len(out) < n:
        raise ValueError(f"cannot place {n} objects {sep} m apart in the workspace")
    return [tuple(round(float(x), 4) for x in p) for p in out]


def random_scene(task: str, seed: int, config: Optional[SimConfig] = None,
                 n_objects: Optional[int] = None) -> SceneConfig:
    """Cable: 1-4 clips of random type, all opening upward. Cap: inner and outer cap plus one bottle."""
    config = config or SimConfig.load()
    task = task_name(task)
    rng = np.random.default_rng(seed)
    if task == "cable_mounting":
        lo, hi = int(config.scenes["min_clips"]), int(config.scenes["max_clips"])
        n = int(n_objects) if n_objects is not None else int(rng.integers(lo, hi + 1))
        kinds = rng.choice(["clip_U", "clip_C"], size=n)
        pos = _positions(rng, n + 1, config)
        clips = tuple(SceneObject(f"clip{i + 1}", str(kinds[i]), pos[i + 1], UP) for i in range(n))
        objects = (SceneObject("cable", "cable", pos[0]),) + clips
        return SceneConfig(task, objects, tuple(c.id for c in clips), seed)
    pos = _positions(rng, 3, config)
    objects = (SceneObject("cap1", "cap_inner", pos[0]), SceneObject("cap2", "cap_outer", pos[1]),
               SceneObject("bottle1", "bottle", pos[2]))
    return SceneConfig(task, objects, ("cap1", "cap2"), seed)


def demo_scene(task: str, seed: int = 0, config: Optional[SimConfig] = None) -> SceneConfig:
    """The demonstration layout: a C clip then a U clip, or the inner cap alone."""
    config = config or SimConfig.load()
    task = task_name(task)
    rng = np.random.default_rng([seed, 1])
    if task == "cable_mounting":
        pos = _positions(rng, 3, config)
        objects = (SceneObject("cable", "cable", pos[0]), SceneObject("clip1", "clip_C", pos[1], UP),
                   SceneObject("clip2", "clip_U", pos[2], UP))
        return SceneConfig(task, objects, ("clip1", "clip2"), seed)
    pos = _positions(rng, 2, config)
    objects = (SceneObject("cap1", "cap_inner", pos[0]), SceneObject("bottle1", "bottle", pos[1]))
    return SceneConfig(task, objects, ("cap1",), seed)


def library_for(task: str) -> SkillLibrary:
    return builtin_library("cable" if task_name(task) == "cable_mounting" else "cap")


def ground_truth_script(scene: SceneConfig, lib: Optional[SkillLibrary] = None) -> list[SkillStep]:
    """The per-object block a competent operator performs, for every object in order."""
    lib = lib or library_for(scene.task)
    steps: list[SkillStep] = []
    for oid in scene.ordering:
        g = goal_step(scene, oid, lib)
        if scene.task == "cable_mounting":
            steps += [SkillStep("move_object", g.target, g.env), SkillStep("grasp", g.target),
                      SkillStep("stretch", g.target), g, SkillStep("open_hand", g.target)]
        else:
            steps += [SkillStep("move_object", g.target, g.env), SkillStep("grasp", g.target), g,
                      SkillStep("release", g.target)]
    return steps


def block_signature(steps) -> tuple:
    """Structure used to judge a plan: (skill, target, env) per step."""
    return tuple((s.skill, s.target, s.env) for s in steps)
