"""Synthetic demonstrations: tactile frames, wrench trace and scene annotations for a script."""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..analyzer.plan import validate_steps
from ..analyzer.records import DIRECTION_WORDS, DemoRecord, SceneAnnotation
from ..analyzer.steps import SkillStep
from ..ftsig import WrenchTrace
from ..pddl import translate_library
from ..planner import SceneConfig
from ..skill_model import ObjectStatus, SkillLibrary
from ..tactile import synthesize_schedule
from .config import SimConfig
from .profiles import curve, demo_episode
from .scenes import library_for

PULL = np.array([0.0, -1.0, 0.0])  # stretching pulls the cable along -y
TWIST = np.array([0.0, 0.0, -1.0])  # screwing turns about -z
HOLD_DELAY = 0.05  # gripper state changes this long after a grasp/release starts


class InvalidScript(ValueError):
    pass


class EmptyDemo(ValueError):
    pass


def _direction(step: SkillStep) -> np.ndarray:
    word = step.params.get("direction", "downward")
    return np.array(DIRECTION_WORDS.get(word, DIRECTION_WORDS["downward"]), dtype=float)


def _rest(config: SimConfig) -> float:
    """Idle time recorded after the last skill."""
    return float(config.raw.get("rest_after", 0.0))


def _timeline(script: Sequence[SkillStep], config: SimConfig) -> list[tuple[SkillStep, float, float]]:
    out, t = [], 0.0
    for step in script:
        d = config.duration(step.skill)
        out.append((step, t, t + d))
        t = round(t + d, 9)
    return out


def _scene_stream(scene: SceneConfig, timeline, config: SimConfig) -> list[SceneAnnotation]:
    motion = config.motion
    home = np.array(motion["home"], dtype=float)
    ee = home.copy()
    waypoints = []  # (t0, t1, start, end)
    for step, t0, t1 in timeline:
        start = ee.copy()
        if step.skill == "move_object" and step.env is not None:
            ee = np.array(scene.object(step.env).position) + np.array([0.0, 0.0, motion["hover"]])
        elif step.skill == "move":
            ee = home.copy()
        elif step.skill == "stretch":
            ee = ee + PULL * motion["stretch_pull"]
        elif step.skill == "insert":
            ee = ee + _direction(step) * motion["insert_push"]
        elif step.skill == "tighten":
            ee = ee + np.array([0.0, 0.0, -motion["tighten_descent"]])
        waypoints.append((t0, t1, start, ee.copy()))
    end = timeline[-1][2] + _rest(config)
    n = int(np.floor(end * config.scene_rate + 1e-9)) + 1
    objects = scene.objects
    out = []
    holding = False
    targets = [s.target for s, _, _ in timeline]
    for i in range(n):
        t = round(i / config.scene_rate, 9)
        k = next((j for j, (_, a, b) in enumerate(timeline) if a - 1e-9 <= t < b - 1e-9), len(timeline) - 1)
        t0, t1, a, b = waypoints[k]
        frac = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        pos = a + (b - a) * frac
        holding = False
        for step, s0, _ in timeline:  # replay gripper events up to t
            if s0 + HOLD_DELAY <= t + 1e-9:
                if step.skill == "grasp":
                    holding = True
                elif step.skill in ("release", "open_hand"):
                    holding = False
        target = targets[k] or next((x for x in targets if x), None)
        out.append(SceneAnnotation(t, tuple(round(float(x), 6) for x in pos), holding, objects, target))
    return out


def _wrench(scene: SceneConfig, lib: SkillLibrary, timeline, config: SimConfig,
            rng: np.random.Generator) -> WrenchTrace:
    dt = config.dt
    end = timeline[-1][2] + _rest(config)
    n = int(np.floor(end / dt + 1e-9))
    t = np.round(np.arange(n) * dt, 9)
    f_r = np.zeros(n)
    tau_r = np.zeros(n)
    direction = np.full((n, 3), np.nan)
    omega = np.full((n, 3), np.nan)
    profiles = config.profiles
    for k, (step, t0, t1) in enumerate(timeline):
        env_class = scene.object(step.env).cls if step.env else None
        profile = profiles.lookup(step.skill, env_class)
        if profile is None:
            continue
        ep = demo_episode(profile, t1 - t0)
        # a level left behind by a drop persists while the hand stays on the object
        hold_end = t1
        if profile.has_drop and k + 1 < len(timeline) and timeline[k + 1][0].skill in ("release", "open_hand"):
            hold_end = timeline[k + 1][2]
        mask = (t >= t0 - 1e-9) & (t < hold_end - 1e-9)
        values = curve(profile, t[mask] - t0, ep)
        if profile.channel == "force":
            f_r[mask] = values
            direction[mask] = _direction(step) if step.skill == "insert" else PULL
        else:
            tau_r[mask] = values
            omega[mask] = TWIST
    noise = config.raw["wrench_noise"]
    f_meas = f_r + rng.normal(0.0, noise["force"], n)
    tau_meas = tau_r + rng.normal(0.0, noise["torque"], n)
    stretch_cap = profiles.lookup("stretch")
    if stretch_cap is not None and stretch_cap.clip_at_peak:
        pulling = np.all(direction == PULL, axis=1)
        f_meas[pulling] = np.minimum(f_meas[pulling], stretch_cap.peak)
    # opposing components along the commanded axis; small isotropic noise elsewhere
    has_d = np.all(np.isfinite(direction), axis=1)
    has_w = np.all(np.isfinite(omega), axis=1)
    force = rng.normal(0.0, noise["force"] / 4, (n, 3))
    torque = rng.normal(0.0, noise["torque"] / 4, (n, 3))
    force[has_d] = -np.maximum(f_meas[has_d], 0.0)[:, None] * direction[has_d]
    torque[has_w] = -np.maximum(tau_meas[has_w], 0.0)[:, None] * omega[has_w]
    return WrenchTrace(t, force, torque, direction, omega)


def synthesize_demo(scene: SceneConfig, script: Sequence[SkillStep], seed: int = 0,
                    config: Optional[SimConfig] = None, lib: Optional[SkillLibrary] = None) -> DemoRecord:
    """Deterministic demonstration of ``script`` in ``scene``."""
    if not script:
        raise EmptyDemo("script has no steps")
    config = config or SimConfig.load()
    lib = lib or library_for(scene.task)
    report = validate_steps(translate_library(lib), lib, script)
    if not report.all_ok:
        failure = report.first_failure()
        raise InvalidScript(f"script step {failure.index + 1} {failure.action}: {failure.message}")
    timeline = _timeline(script, config)
    tac = config.tactile
    schedule = [(lib.resolve(step.skill).status_signature, t1 - t0) for step, t0, t1 in timeline]
    if _rest(config) > 0:
        schedule.append((ObjectStatus.IDLE, _rest(config)))
    tactile = synthesize_schedule(schedule, float(tac["fps"]), float(tac["noise_sigma"]), int(seed),
                                  float(tac["amplitude"]))
    rng = np.random.default_rng([int(seed), 17])
    wrench = _wrench(scene, lib, timeline, config, rng)
    scenes = _scene_stream(scene, timeline, config)
    return DemoRecord(scene.task, tactile, wrench, scenes, scene.to_dict(), [s.to_dict() for s in script])
