from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demoplan.analyzer import DemoRecord, SkillStep
from demoplan.ftsig import FORCE, ground_threshold
from demoplan.planner import SceneConfig
from demoplan.sim import (
    EmptyDemo,
    Episode,
    InvalidScript,
    ResistanceProfile,
    SimConfig,
    SimExecutor,
    SimState,
    UnknownAction,
    demo_scene,
    execute_step,
    ground_truth_script,
    library_for,
    random_scene,
    run_config,
    run_profile,
    run_profile_ticks,
    synthesize_demo,
)
from demoplan.sim.profiles import curve, demo_episode, level
from demoplan.skill_model import TORQUE_LIMIT
from demoplan.tactile import Segment, segment_sequence

CONFIG = SimConfig.load()
PROFILES = CONFIG.profiles


# -- profiles ------------------------------------------------------------------


@pytest.mark.parametrize("key", PROFILES.keys())
def test_curve_matches_scalar_level(key):
    p = PROFILES.profiles[key]
    ep = Episode(onset=0.4, t_drop=1.3 if p.has_drop else math.inf, offset=0.7)
    t = np.arange(0, 4.0, 0.01)
    np.testing.assert_allclose(curve(p, t, ep), [level(p, x, ep) for x in t], atol=1e-9)


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(sorted(PROFILES.profiles)), st.sampled_from(["below", "above"]), st.floats(0.2, 12.0),
       st.floats(0.0, 1.5), st.floats(0.3, 3.0), st.floats(0.0, 3.0), st.integers(0, 10**6),
       st.one_of(st.none(), st.floats(0.0, 3.0)))
def test_vectorized_run_matches_tick_oracle(key, sense, threshold, onset, t_drop, offset, seed, flat):
    p = PROFILES.profiles[key].with_noise(0.2)
    ep = Episode(onset, onset + t_drop if p.has_drop else math.inf, offset)
    noise = np.random.default_rng(seed).normal(0, 0.2, int(p.limit_time / 0.01) + 5)
    a = run_profile(p, sense, threshold, ep, noise, 0.01, flat)
    b = run_profile_ticks(p, sense, threshold, ep, noise, 0.01, flat)
    assert (a.satisfied, a.stop_index, a.achieved) == (b.satisfied, b.stop_index, b.achieved)
    np.testing.assert_allclose(a.measured, b.measured)


def test_limit_time_and_cap():
    p = PROFILES.lookup("stretch")
    assert p.limit_time == pytest.approx(4.0)
    run = run_profile(p, "above", 100.0, Episode(), np.zeros(500))
    assert not run.satisfied and run.t[-1] == pytest.approx(4.0)


def test_profile_validation():
    with pytest.raises(ValueError):
        ResistanceProfile("x", peak=1.0, post_plateau=2.0)
    with pytest.raises(ValueError):
        ResistanceProfile("x", peak=20.0)
    with pytest.raises(ValueError):
        ResistanceProfile("x", channel="heat")


@pytest.mark.parametrize("key, sense", [("insert@clip_U", "below"), ("insert@clip_C", "below"),
                                        ("stretch", "above"), ("tighten", "above")])
def test_noiseless_grounding_lies_between_post_and_peak(key, sense):
    p = PROFILES.profiles[key]
    dur = 2.0
    pre = 1.0
    t = np.arange(0, pre + dur + 1.5, 0.01)
    ep = demo_episode(p, dur)
    values = np.where(t < pre, 0.0, curve(p, t - pre, replace(ep, t_drop=ep.t_drop)))
    if not p.has_drop:
        values[t >= pre + dur] = 0.0
    zeros = np.zeros_like(t)
    from demoplan.ftsig import ResistanceTrace

    trace = ResistanceTrace(t, values, zeros) if p.channel == "force" else ResistanceTrace(t, zeros, values)
    theta = ground_threshold(trace, Segment(None, pre, pre + dur), sense, p.channel)
    assert p.post_plateau < theta < p.peak


# -- demonstrations ------------------------------------------------------------


@pytest.mark.parametrize("task", ["cable", "cap"])
def test_demo_segments_match_schedule(task):
    scene = demo_scene(task, 0, CONFIG)
    lib = library_for(task)
    script = ground_truth_script(scene, lib)
    demo = synthesize_demo(scene, script, 4, CONFIG, lib)
    segs = segment_sequence(demo.tactile)
    want = []
    t = 0.0
    for step in script:
        status = lib.resolve(step.skill).status_signature
        if not want or want[-1][0] is not status:
            want.append((status, t))
        t += CONFIG.duration(step.skill)
    want.append((lib.resolve("move").status_signature, t))  # recorded rest after the last skill
    assert [s.status for s in segs] == [s for s, _ in want]
    frame = 1 / CONFIG.tactile["fps"]
    for seg, (_, start) in zip(segs, want):
        assert abs(seg.t_start - start) <= 2 * frame + 1e-9


def test_demo_bundle_is_byte_deterministic(tmp_path):
    scene = demo_scene("cable", 2, CONFIG)
    paths = []
    for d in ("a", "b"):
        demo = synthesize_demo(scene, ground_truth_script(scene), 2, CONFIG)
        paths.append(demo.save(tmp_path / d))
    for name in ("demo.json", "demo_tactile.jsonl", "demo_wrench.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    back = DemoRecord.load(paths[0])
    assert back.task == "cable_mounting" and len(back.scenes) == len(demo.scenes)
    np.testing.assert_allclose(back.wrench.force, demo.wrench.force, atol=1e-6)


def test_demo_errors():
    scene = demo_scene("cable", 0, CONFIG)
    with pytest.raises(EmptyDemo):
        synthesize_demo(scene, [])
    with pytest.raises(InvalidScript, match="step 1"):
        synthesize_demo(scene, [SkillStep("stretch", "cable")])


# -- executor ------------------------------------------------------------------


def _held(scene, target, env):
    return SimState(scene, scene.seed, holding=target, at=((target, env),))


def _one_clip(kind, seed=0):
    base = random_scene("cable", seed, CONFIG, n_objects=1)
    clip = replace(base.object("clip1"), cls=kind)
    return SceneConfig(base.task, (base.object("cable"), clip), ("clip1",), seed)


def test_initial_insert_threshold_never_succeeds():
    lib = library_for("cable")
    scene = _one_clip("clip_U")
    state = _held(scene, "cable", "clip1")
    state, ret, _ = execute_step(state, SkillStep("stretch", "cable"), lib, CONFIG)
    assert ret.code == TORQUE_LIMIT and state.holding is None and not state.stretched


def test_grounded_u_insert_succeeds():
    lib = library_for("cable").with_skill(library_for("cable").resolve("stretch").with_threshold(8.9)) \
        .with_skill(library_for("cable").resolve("insert").with_threshold(3.2, "clip_U"))
    scene = _one_clip("clip_U", 5)
    state = _held(scene, "cable", "clip1")
    state, r1, frag = execute_step(state, SkillStep("stretch", "cable"), lib, CONFIG)
    assert r1.ok and "cable" in state.stretched and frag.f_r.max() <= 10.0 + 1e-9
    state, r2, frag = execute_step(state, SkillStep("insert", "cable", "clip1", {"direction": "downward"}), lib,
                                   CONFIG)
    assert r2.ok and any(a.predicate == "inserted" for a in state.achieved)
    assert frag.tau_r.max() == 0.0


def test_tighten_premature_threshold_stops_before_seating():
    lib = library_for("cap")
    low = lib.with_skill(lib.resolve("tighten").with_threshold(0.5))
    scene = random_scene("cap", 1, CONFIG)
    state = _held(scene, "cap1", "bottle1")
    state, ret, _ = execute_step(state, SkillStep("tighten", "cap1", "bottle1"), low, CONFIG)
    assert ret.ok and not state.achieved


def test_unknown_action():
    lib = library_for("cable")
    scene = _one_clip("clip_U")
    with pytest.raises(UnknownAction):
        execute_step(_held(scene, "cable", "clip1"), SkillStep("push", "cable", "clip1"), lib, CONFIG)


def test_kinematic_errors():
    lib = library_for("cable")
    scene = _one_clip("clip_U")
    _, ret, _ = execute_step(SimState(scene), SkillStep("open_hand", "cable"), lib, CONFIG)
    assert ret.code == "NotHolding"
    _, ret, _ = execute_step(_held(scene, "cable", "clip1"), SkillStep("grasp", "cable"), lib, CONFIG)
    assert ret.code == "HandOccupied"


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.lists(st.sampled_from(["grasp", "stretch", "insert", "open_hand", "move_object"]),
                                       min_size=1, max_size=12))
def test_achieved_atoms_are_monotone(seed, skills):
    lib = library_for("cable")
    scene = _one_clip("clip_C", seed)
    ex = SimExecutor.for_scene(scene, seed, CONFIG)
    seen = frozenset()
    for name in skills:
        step = SkillStep(name, "cable", "clip1" if name in ("insert", "move_object") else None,
                         {"direction": "downward"} if name == "insert" else {})
        ex.execute(step, lib)
        assert seen <= ex.state.achieved
        seen = ex.state.achieved


# -- evaluation ----------------------------------------------------------------


def test_run_config_deterministic_and_bounded():
    a = run_config("ours", "cable", 4, seed=3, config=CONFIG)
    b = run_config("ours", "cable", 4, seed=3, config=CONFIG)
    assert a == b
    for rep in (a, run_config("C", "cap", 4, seed=3, config=CONFIG)):
        for x in (rep.reasonableness, rep.executability, rep.success, rep.overall):
            assert 0.0 <= x <= 1.0
        assert rep.overall == (rep.reasonableness + rep.executability + rep.success) / 3


def test_run_config_rejects_bad_input():
    with pytest.raises(ValueError):
        run_config("Z", "cable", 1)
    with pytest.raises(ValueError):
        run_config("ours", "cable", 0)


def test_config_overrides(tmp_path):
    cfg = SimConfig.load(overrides={"profiles": {"stretch": {"peak": 11.0}}})
    assert cfg.profiles.lookup("stretch").peak == 11.0
    assert cfg.profiles.lookup("stretch").rise_time == CONFIG.profiles.lookup("stretch").rise_time
    path = tmp_path / "c.json"
    path.write_text('{"eval": {"n_scenes": 3}}')
    assert SimConfig.load(path).eval["n_scenes"] == 3
