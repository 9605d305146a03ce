from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from demoplan.skill_model import ObjectStatus as S
from demoplan.tactile import (
    ClassifierParams,
    EmptySequence,
    TactileFrame,
    TactileSequence,
    classify,
    classify_sequence,
    default_grid_coords,
    features,
    majority_filter,
    pattern_field,
    read_jsonl,
    resolve_ambiguous,
    segment_labels,
    segment_sequence,
    synthesize_pattern,
    synthesize_schedule,
    write_jsonl,
)

COORDS = default_grid_coords()
ACTIVE = [S.GRASPED, S.RELEASED, S.LINEAR_FORCE, S.TORQUE]


def _features_oracle(grid, coords):
    """Cell-by-cell loop over off-centre cells."""
    vs, rs, ts = [], [], []
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            x, y = coords[i, j]
            r = math.hypot(x, y)
            if r == 0:
                continue
            vs.append(grid[i, j])
            rs.append((x / r, y / r))
            ts.append((-y / r, x / r))
    vs = np.array(vs)
    m = float(np.mean([math.hypot(*v) for v in vs]))
    if m == 0:
        return 0.0, 0.0, 0.0, 0.0
    d = float(np.mean([v @ r for v, r in zip(vs, rs)])) / m
    k = float(np.mean([v @ t for v, t in zip(vs, ts)])) / m
    c = math.hypot(*vs.mean(axis=0)) / m
    return m, d, k, c


def test_radial_field_scores():
    f = features(TactileFrame(COORDS.copy()))
    assert f.radial_score == pytest.approx(1.0, abs=1e-9)
    assert f.tangential_score == pytest.approx(0.0, abs=1e-12)
    assert f.coherence == pytest.approx(0.0, abs=1e-12)


def test_uniform_field_scores():
    f = features(TactileFrame(np.broadcast_to([1.0, 0.0], COORDS.shape).copy()))
    assert f.coherence == pytest.approx(1.0)
    assert f.radial_score == pytest.approx(0.0, abs=1e-12)
    assert f.tangential_score == pytest.approx(0.0, abs=1e-12)


def test_rotational_field_scores():
    g = np.stack([-COORDS[..., 1], COORDS[..., 0]], axis=-1)
    f = features(TactileFrame(g))
    assert f.tangential_score == pytest.approx(1.0, abs=1e-9)
    assert f.radial_score == pytest.approx(0.0, abs=1e-12)
    assert f.coherence == pytest.approx(0.0, abs=1e-12)


def test_zero_field():
    f = features(TactileFrame(np.zeros_like(COORDS)))
    assert (f.mean_magnitude, f.radial_score, f.tangential_score, f.coherence) == (0, 0, 0, 0)
    assert classify(TactileFrame(np.zeros_like(COORDS))) is S.IDLE


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 9), st.integers(3, 9))
def test_features_match_loop_oracle(seed, h, w):
    grid = np.random.default_rng(seed).normal(size=(h, w, 2))
    coords = default_grid_coords(h, w)
    got = features(TactileFrame(grid, grid_coords=coords))
    want = _features_oracle(grid, coords)
    np.testing.assert_allclose(
        [got.mean_magnitude, got.radial_score, got.tangential_score, got.coherence], want, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feature_ranges(seed):
    grid = np.random.default_rng(seed).normal(size=(11, 11, 2)) * 3
    f = features(TactileFrame(grid))
    assert -1 <= f.radial_score <= 1 and -1 <= f.tangential_score <= 1 and 0 <= f.coherence <= 1


def test_classifier_ladder():
    assert classify(TactileFrame(pattern_field(S.GRASPED))) is S.GRASPED
    assert classify(TactileFrame(pattern_field(S.RELEASED))) is S.RELEASED
    assert classify(TactileFrame(pattern_field(S.TORQUE))) is S.TORQUE
    assert classify(TactileFrame(-pattern_field(S.TORQUE))) is S.TORQUE
    assert classify(TactileFrame(pattern_field(S.LINEAR_FORCE, direction=1.0))) is S.LINEAR_FORCE
    # equal radial and tangential parts: tangential does not dominate, radial wins
    mix = pattern_field(S.GRASPED) + pattern_field(S.TORQUE)
    assert classify(TactileFrame(mix)) is S.GRASPED
    # outward on the right half, inward on the left: no pattern reaches its threshold
    split = pattern_field(S.GRASPED) * np.sign(COORDS[..., :1])
    assert classify(TactileFrame(split)) is S.AMBIGUOUS


def test_classifier_params_positive():
    with pytest.raises(ValueError):
        ClassifierParams(idle_magnitude=0)


@pytest.mark.parametrize("status", ACTIVE + [S.IDLE])
def test_noiseless_patterns(status):
    seq = synthesize_pattern(status, 1.0, 30, 0.0, seed=3)
    assert len(seq) == 30
    assert set(classify_sequence(seq)) == {status}


def test_idle_noise_floor():
    assert set(classify_sequence(synthesize_pattern(S.IDLE, 1.0, 30, 0.01, seed=1))) == {S.IDLE}


def test_generator_is_deterministic():
    a = synthesize_pattern(S.LINEAR_FORCE, 1.0, noise_sigma=0.1, seed=5)
    b = synthesize_pattern(S.LINEAR_FORCE, 1.0, noise_sigma=0.1, seed=5)
    c = synthesize_pattern(S.LINEAR_FORCE, 1.0, noise_sigma=0.1, seed=6)
    assert np.array_equal(a.grids, b.grids) and not np.array_equal(a.grids, c.grids)


def test_pattern_amplitude():
    for status in ACTIVE:
        assert features(TactileFrame(pattern_field(status, 2.5))).mean_magnitude == pytest.approx(2.5)


def test_accuracy_non_increasing_in_noise():
    accs = []
    for frac in (0.0, 0.05, 0.1, 0.2):
        hits = total = 0
        for status in ACTIVE:
            labels = classify_sequence(synthesize_pattern(status, 20.0, 30, frac, seed=11))
            hits += sum(l is status for l in labels)
            total += len(labels)
        accs.append(hits / total)
    assert accs[0] == 1.0
    assert all(a >= b for a, b in zip(accs, accs[1:]))


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(ACTIVE), st.floats(0.1, 5.0), st.floats(0.05, 20.0), st.integers(0, 10**6))
def test_scale_invariance(status, amp, alpha, seed):
    rng = np.random.default_rng(seed)
    frame = TactileFrame(pattern_field(status, amp, rng.uniform(0, 6.3)) + rng.normal(0, 0.2 * amp, COORDS.shape))
    assume_above_floor = alpha * features(frame).mean_magnitude >= 0.05
    if assume_above_floor:
        assert classify(frame.scaled(alpha)) is classify(frame)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 2 * math.pi))
def test_rotation_equivariance(seed, angle):
    rng = np.random.default_rng(seed)
    frame = TactileFrame(rng.normal(size=COORDS.shape))
    a, b = features(frame), features(frame.rotated(angle))
    np.testing.assert_allclose(
        [a.mean_magnitude, a.radial_score, a.tangential_score, a.coherence],
        [b.mean_magnitude, b.radial_score, b.tangential_score, b.coherence], atol=1e-9)


# -- segmentation --------------------------------------------------------------


def test_reference_schedule():
    schedule = [(S.IDLE, 2), (S.GRASPED, 2), (S.LINEAR_FORCE, 2), (S.TORQUE, 2), (S.RELEASED, 1)]
    seq = synthesize_schedule(schedule, 30, noise_sigma=0.02, seed=2)
    segs = segment_sequence(seq)
    assert [s.status for s in segs] == [s for s, _ in schedule]
    for seg, want in zip(segs[1:], [2, 4, 6, 8]):
        assert abs(seg.t_start - want) <= 2 / 30 + 1e-9
    assert segs[0].t_start == 0 and segs[-1].t_end == pytest.approx(9.0)


def test_constant_sequence_single_segment():
    segs = segment_sequence(synthesize_pattern(S.GRASPED, 3.0, noise_sigma=0.05, seed=0))
    assert [s.status for s in segs] == [S.GRASPED]


def test_glitch_absorbed():
    seq = synthesize_pattern(S.LINEAR_FORCE, 2.0, seed=0)
    seq.grids[30] = pattern_field(S.TORQUE)
    labels = classify_sequence(seq)
    assert labels[30] is S.TORQUE
    assert [s.status for s in segment_sequence(seq)] == [S.LINEAR_FORCE]


def test_short_run_merged_without_vote():
    times = np.arange(40) / 30
    labels = [S.IDLE] * 15 + [S.TORQUE] * 5 + [S.GRASPED] * 20
    segs = segment_labels(labels, times, window=1, min_duration=0.3)
    assert [s.status for s in segs] == [S.IDLE, S.GRASPED]


def test_ambiguous_resolution():
    A = S.AMBIGUOUS
    assert resolve_ambiguous([A, S.TORQUE, A, S.IDLE, A]) == [S.TORQUE, S.TORQUE, S.TORQUE, S.IDLE, S.IDLE]
    assert resolve_ambiguous([A, A]) == [S.IDLE, S.IDLE]


def test_majority_filter_ties_keep_centre():
    labels = [S.IDLE, S.IDLE, S.TORQUE, S.TORQUE, S.GRASPED]
    assert majority_filter(labels, 5)[2] is S.TORQUE


def test_empty_sequence():
    with pytest.raises(EmptySequence):
        segment_sequence(TactileSequence(np.zeros((0, 11, 11, 2)), np.zeros(0)))


@st.composite
def schedules(draw):
    n = draw(st.integers(3, 8))
    statuses = [draw(st.sampled_from(list(S)[:5]))]
    while len(statuses) < n:
        nxt = draw(st.sampled_from([s for s in list(S)[:5] if s is not statuses[-1]]))
        statuses.append(nxt)
    durs = [draw(st.sampled_from([0.5, 0.7, 1.0, 1.3, 2.0])) for _ in statuses]
    return list(zip(statuses, durs))


@settings(max_examples=40, deadline=None)
@given(schedules(), st.integers(0, 10**6))
def test_segmentation_idempotent(schedule, seed):
    segs = segment_sequence(synthesize_schedule(schedule, 30, 0.02, seed))
    rebuilt = segment_sequence(synthesize_schedule([(s.status, s.duration) for s in segs], 30, 0.0, seed))
    assert [(s.status, round(s.t_start, 6)) for s in rebuilt] == [(s.status, round(s.t_start, 6)) for s in segs]


@settings(max_examples=40, deadline=None)
@given(schedules(), st.integers(0, 10**6))
def test_segments_tile(schedule, seed):
    segs = segment_sequence(synthesize_schedule(schedule, 30, 0.02, seed))
    assert all(a.t_end == b.t_start and a.status is not b.status for a, b in zip(segs, segs[1:]))
    assert all(s.t_start < s.t_end for s in segs)
    assert S.AMBIGUOUS not in {s.status for s in segs}


def test_jsonl_roundtrip(tmp_path):
    seq = synthesize_pattern(S.TORQUE, 0.5, noise_sigma=0.1, seed=1)
    path = tmp_path / "t.jsonl"
    write_jsonl(seq, path)
    back = read_jsonl(path)
    np.testing.assert_allclose(back.grids, seq.grids, atol=1e-8)
    np.testing.assert_allclose(back.timestamps, seq.timestamps)


def test_jsonl_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"timestamp": 0, "H": 3, "W": 3, "vectors": [1, 2]}\n')
    with pytest.raises(ValueError, match=":1:"):
        read_jsonl(path)


def test_frame_validation():
    with pytest.raises(ValueError):
        TactileFrame(np.zeros((2, 5, 2)))
    with pytest.raises(ValueError):
        TactileFrame(np.full((3, 3, 2), np.nan))
