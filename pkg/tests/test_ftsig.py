from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from demoplan.ftsig import (
    ABOVE,
    BELOW,
    FORCE,
    TORQUE,
    GroundingParams,
    NonUnitDirection,
    NoSeparation,
    NoTemplate,
    ResistanceTrace,
    TraceCoverage,
    WrenchSample,
    WrenchTrace,
    ground_skill,
    ground_threshold,
    propose_condition,
    read_wrench_csv,
    resistance,
    update_library,
    write_wrench_csv,
)
from demoplan.skill_model import (
    GripperHolding,
    ObjectStatus,
    PoseReached,
    ResistanceForceAbove,
    ResistanceForceBelow,
    ResistanceTorqueAbove,
    Skill,
    UnknownSkill,
    build_builtin_libraries,
    resolve_skill,
)
from demoplan.tactile import Segment
from oracles import sweep_band

HZ = 100


def _trace(levels, noise=0.0, seed=0, channel=FORCE):
    """Piecewise-constant trace from (duration, level) pieces at 100 Hz."""
    rng = np.random.default_rng(seed)
    vals = np.concatenate([np.full(int(round(d * HZ)), lvl, float) for d, lvl in levels])
    vals = np.maximum(0.0, vals + rng.normal(0, noise, len(vals)))
    t = np.arange(len(vals)) / HZ
    zeros = np.zeros_like(vals)
    return ResistanceTrace(t, vals, zeros) if channel == FORCE else ResistanceTrace(t, zeros, vals)


def test_resistance_examples():
    assert resistance(WrenchSample((-3, 0, 0), (0, 0, 0)), (1, 0, 0))[0] == 3
    assert resistance(WrenchSample((0, 4, 0), (0, 0, 0)), (1, 0, 0))[0] == 0
    assert resistance(WrenchSample((0, 0, 0), (0, 0, -2)), None, (0, 0, 1))[1] == 2
    assert resistance(WrenchSample((3, 4, 0), (0, 0, 0)))[0] == pytest.approx(5)
    with pytest.raises(NonUnitDirection):
        resistance(WrenchSample((1, 0, 0), (0, 0, 0)), (2, 0, 0))


unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: tuple(np.asarray(v) / np.linalg.norm(v)))
vec = st.tuples(*[st.floats(-50, 50)] * 3)


@given(vec, vec, unit, unit, st.floats(-20, 20))
def test_resistance_nonnegative_and_orthogonal_invariant(force, torque, d, w, extra):
    f_r, t_r = resistance(WrenchSample(force, torque), d, w)
    assert f_r >= 0 and t_r >= 0
    # add a component orthogonal to d
    d_arr = np.asarray(d)
    helper = np.array([1.0, 0, 0]) if abs(d_arr[0]) < 0.9 else np.array([0, 1.0, 0])
    ortho = np.cross(d_arr, helper)
    ortho /= np.linalg.norm(ortho)
    f2, _ = resistance(WrenchSample(tuple(np.asarray(force) + extra * ortho), torque), d, w)
    assert f2 == pytest.approx(f_r, abs=1e-9)


def test_wrench_trace_matches_per_sample():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(20, 3))
    tq = rng.normal(size=(20, 3))
    d = np.tile([0, 0, -1.0], (20, 1))
    d[:5] = np.nan
    tr = WrenchTrace(np.arange(20) / HZ, f, tq, d, None).resistance()
    for i in range(20):
        want = resistance(WrenchSample(f[i], tq[i]), None if i < 5 else d[i], None)
        assert (tr.f_r[i], tr.tau_r[i]) == pytest.approx(want)


def test_insert_u_like_trace():
    trace = _trace([(1.0, 2.0), (2.0, 9.0), (1.5, 1.0)], noise=0.2, seed=1)
    seg = Segment(ObjectStatus.TORQUE, 1.0, 3.0)
    theta = ground_threshold(trace, seg, BELOW, FORCE)
    assert 1 < theta < 9
    band = sweep_band(trace.window(2.4, 3.0, FORCE), trace.window(3.0, 4.0, FORCE))
    assert band[0] <= theta <= band[1]
    active = trace.window(2.4, 3.0, FORCE)
    post = trace.window(3.0, 4.0, FORCE)
    assert np.mean(np.concatenate([active >= theta, post < theta])) == 1.0


def test_tighten_like_trace_default_gain():
    trace = _trace([(1.0, 0.0), (3.0, 2.5), (0.5, 0.0)], channel=TORQUE)
    seg = Segment(ObjectStatus.TORQUE, 1.0, 4.0)
    theta = ground_threshold(trace, seg, ABOVE, TORQUE, GroundingParams(above_gain=0.8))
    assert theta == pytest.approx(2.0, abs=0.1)


def test_constant_trace_has_no_separation():
    trace = _trace([(5.0, 3.0)])
    seg = Segment(ObjectStatus.TORQUE, 1.0, 3.0)
    with pytest.raises(NoSeparation):
        ground_threshold(trace, seg, BELOW)
    with pytest.raises(NoSeparation):
        ground_threshold(trace, seg, ABOVE)


def test_coverage_errors():
    trace = _trace([(2.0, 3.0)])
    with pytest.raises(TraceCoverage):
        ground_threshold(trace, Segment(ObjectStatus.TORQUE, 1.0, 2.0), BELOW)
    with pytest.raises(TraceCoverage):
        ground_threshold(trace, Segment(ObjectStatus.TORQUE, 0.0, 1.0), ABOVE)


@st.composite
def separated(draw):
    lo = draw(st.floats(0.0, 5.0))
    gap = draw(st.floats(0.5, 10.0))
    noise = draw(st.floats(0.0, 0.3))
    seed = draw(st.integers(0, 10**6))
    return lo, lo + gap + 3 * noise, noise, seed


@settings(max_examples=80, deadline=None)
@given(separated())
def test_below_inside_quantile_gap_and_sweep_band(case):
    lo, hi, noise, seed = case
    trace = _trace([(1.0, lo), (2.0, hi), (1.5, lo)], noise, seed)
    seg = Segment(ObjectStatus.TORQUE, 1.0, 3.0)
    try:
        theta = ground_threshold(trace, seg, BELOW)
    except NoSeparation:
        assume(False)
    a, b = trace.window(2.4, 3.0, FORCE), trace.window(3.0, 4.0, FORCE)
    assert np.quantile(b, 0.9) < theta < np.quantile(a, 0.1)
    band = sweep_band(a, b)
    assert band is not None and band[0] <= theta <= band[1]


@settings(max_examples=80, deadline=None)
@given(separated())
def test_above_inside_quantile_gap_and_sweep_band(case):
    lo, hi, noise, seed = case
    trace = _trace([(1.0, lo), (2.0, hi), (1.5, lo)], noise, seed)
    seg = Segment(ObjectStatus.LINEAR_FORCE, 1.0, 3.0)
    try:
        theta = ground_threshold(trace, seg, ABOVE)
    except NoSeparation:
        assume(False)
    a, b = trace.window(2.4, 3.0, FORCE), trace.window(0.0, 1.0, FORCE)
    assert np.quantile(b, 0.9) < theta < np.quantile(a, 0.1)
    band = sweep_band(a, b)
    assert band is not None and band[0] <= theta <= band[1]


@settings(max_examples=60, deadline=None)
@given(separated(), st.floats(0.1, 20.0), st.sampled_from([BELOW, ABOVE]))
def test_theta_scales_with_channel(case, alpha, sense):
    lo, hi, noise, seed = case
    trace = _trace([(1.0, lo), (2.0, hi), (1.5, lo)], noise, seed)
    seg = Segment(ObjectStatus.TORQUE, 1.0, 3.0)
    try:
        theta = ground_threshold(trace, seg, sense)
    except NoSeparation:
        assume(False)
    assert ground_threshold(trace.scaled(alpha, FORCE), seg, sense) == pytest.approx(alpha * theta, rel=1e-9)


def test_propose_condition():
    libs = build_builtin_libraries()
    assert propose_condition(resolve_skill(libs["cable"], "insert")) == ResistanceForceBelow(5.0)
    assert propose_condition(resolve_skill(libs["cable"], "stretch")) == ResistanceForceAbove(10.0)
    assert propose_condition(resolve_skill(libs["cap"], "tighten")) == ResistanceTorqueAbove(0.02)
    assert propose_condition(resolve_skill(libs["cap"], "grasp")) == GripperHolding()
    assert isinstance(propose_condition(resolve_skill(libs["cap"], "move")), PoseReached)
    with pytest.raises(NoTemplate):
        propose_condition(Skill("wave", "wave", ObjectStatus.IDLE))


def test_update_library():
    cable = build_builtin_libraries()["cable"]
    up = update_library(cable, {"insert": 2.5, "stretch": 9.5})
    assert up.resolve("insert").success == ResistanceForceBelow(2.5)
    assert up.resolve("stretch").success == ResistanceForceAbove(9.5)
    assert cable.resolve("insert").success == ResistanceForceBelow(5.0)
    assert update_library(cable, {}) == cable
    assert update_library(up, {"insert": 2.5, "stretch": 9.5}) == up
    per = update_library(cable, {"insert@clip_C": 4.5, "insert": 2.5})
    assert per.resolve("insert").threshold_for("clip_C") == 4.5
    assert per.resolve("insert").threshold_for("clip_U") == 2.5
    with pytest.raises(UnknownSkill):
        update_library(cable, {"tighten": 2.0})


def test_update_inherited_skill_shadows():
    cap = build_builtin_libraries()["cap"]
    up = update_library(cap, {"push": 7.0})
    assert up.resolve("push").success == ResistanceForceAbove(7.0)
    assert cap.parent.resolve("push").success == ResistanceForceAbove(5.0)


def test_ground_skill_uses_condition():
    libs = build_builtin_libraries()
    trace = _trace([(1.0, 0.0), (3.0, 2.5), (1.5, 0.0)], channel=TORQUE)
    seg = Segment(ObjectStatus.TORQUE, 1.0, 4.0)
    assert ground_skill(trace, seg, resolve_skill(libs["cap"], "tighten")) == pytest.approx(2.25)


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    d = np.tile([1.0, 0, 0], (10, 1))
    d[3] = np.nan
    tr = WrenchTrace(np.arange(10) / HZ, rng.normal(size=(10, 3)), rng.normal(size=(10, 3)), d, None)
    path = tmp_path / "w.csv"
    write_wrench_csv(tr, path)
    back = read_wrench_csv(path)
    np.testing.assert_allclose(back.force, tr.force, atol=1e-6)
    assert np.isnan(back.direction[3]).all() and np.isnan(back.omega).all()
    np.testing.assert_allclose(back.resistance().f_r, tr.resistance().f_r, atol=1e-5)


def test_trace_validation():
    with pytest.raises(ValueError):
        ResistanceTrace(np.array([0.0, 0.0]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        ResistanceTrace(np.array([0.0]), np.array([-1.0]), np.zeros(1))
