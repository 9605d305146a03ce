"""Tactile vector-field analytics.

Each tactile frame is a grid of 2-D marker displacements. Four scalar
scores summarize a frame:

* ``m`` – mean displacement magnitude,
* ``d`` – radial score, mean projection onto the outward unit vector over ``m``,
* ``k`` – tangential score, mean projection onto the counter-clockwise unit
  vector over ``m``,
* ``c`` – coherence, magnitude of the mean vector over ``m``.

All four use the same cell set (every cell except the grid centre, where the
radial direction is undefined), so by Cauchy–Schwarz ``d, k ∈ [-1, 1]`` and
``c ∈ [0, 1]``. A fixed decision ladder maps scores to an object status, and
a smoothing/merging pass turns per-frame statuses into segments.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .skill_model import ObjectStatus

DEFAULT_GRID = 11
DEFAULT_FPS = 30.0
_CENTER_EPS = 1e-12


class EmptySequence(ValueError):
    pass


def default_grid_coords(h: int = DEFAULT_GRID, w: int = DEFAULT_GRID) -> np.ndarray:
    """Cell centres on [-1, 1]², shape (h, w, 2) as (x, y)."""
    xs = np.linspace(-1.0, 1.0, w)
    ys = np.linspace(-1.0, 1.0, h)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


@dataclass(frozen=True)
class TactileFrame:
    grid: np.ndarray  # (H, W, 2) displacement vectors, mm
    timestamp: float = 0.0
    grid_coords: Optional[np.ndarray] = None  # (H, W, 2); default linspace(-1, 1)

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 3 or grid.shape[2] != 2 or grid.shape[0] < 3 or grid.shape[1] < 3:
            raise ValueError(f"grid must be (H>=3, W>=3, 2), got {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ValueError("grid contains non-finite components")
        coords = self.grid_coords
        coords = default_grid_coords(*grid.shape[:2]) if coords is None else np.asarray(coords, float)
        if coords.shape != grid.shape:
            raise ValueError("grid_coords must match the grid shape")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "grid_coords", coords)

    def scaled(self, alpha: float) -> "TactileFrame":
        return TactileFrame(self.grid * alpha, self.timestamp, self.grid_coords)

    def rotated(self, angle: float) -> "TactileFrame":
        """Rotate both vectors and cell positions by ``angle`` radians."""
        rot = _rotation(angle)
        return TactileFrame(self.grid @ rot.T, self.timestamp, self.grid_coords @ rot.T)


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass
class TactileSequence:
    """Time-ordered frames stored as one array for vectorized processing."""

    grids: np.ndarray  # (N, H, W, 2)
    timestamps: np.ndarray  # (N,)
    grid_coords: np.ndarray = field(default=None)  # (H, W, 2)

    def __post_init__(self) -> None:
        self.grids = np.asarray(self.grids, dtype=float)
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if self.grids.ndim != 4 or self.grids.shape[3] != 2:
            raise ValueError(f"grids must be (N, H, W, 2), got {self.grids.shape}")
        if len(self.timestamps) != len(self.grids):
            raise ValueError("one timestamp per frame required")
        if self.grid_coords is None:
            self.grid_coords = default_grid_coords(*self.grids.shape[1:3])

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, i: int) -> TactileFrame:
        return TactileFrame(self.grids[i], float(self.timestamps[i]), self.grid_coords)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_frames(cls, frames: Sequence[TactileFrame]) -> "TactileSequence":
        if not frames:
            return cls(np.zeros((0, DEFAULT_GRID, DEFAULT_GRID, 2)), np.zeros(0))
        return cls(
            np.stack([f.grid for f in frames]),
            np.array([f.timestamp for f in frames]),
            frames[0].grid_coords,
        )

    @property
    def frame_period(self) -> float:
        if len(self) < 2:
            return 1.0 / DEFAULT_FPS
        return float(np.median(np.diff(self.timestamps)))

    def concat(self, other: "TactileSequence") -> "TactileSequence":
        return TactileSequence(
            np.concatenate([self.grids, other.grids]),
            np.concatenate([self.timestamps, other.timestamps]),
            self.grid_coords,
        )


@dataclass(frozen=True)
class FieldFeatures:
    mean_magnitude: float
    radial_score: float
    tangential_score: float
    coherence: float


@dataclass(frozen=True)
class ClassifierParams:
    idle_magnitude: float = 0.05  # mm
    coherence: float = 0.8
    tangential: float = 0.5
    radial: float = 0.5

    def __post_init__(self) -> None:
        for name in ("idle_magnitude", "coherence", "tangential", "radial"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Segment:
    status: ObjectStatus
    t_start: float
    t_end: float

    @property
    def key_timestamp(self) -> float:
        return self.t_start

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


# ---------------------------------------------------------------------------
# Features and classification
# ---------------------------------------------------------------------------


def _unit_frames(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mask of off-centre cells plus radial and tangential unit vectors there."""
    flat = coords.reshape(-1, 2)
    norms = np.linalg.norm(flat, axis=1)
    mask = norms > _CENTER_EPS
    r_hat = flat[mask] / norms[mask, None]
    t_hat = np.stack([-r_hat[:, 1], r_hat[:, 0]], axis=1)
    return mask, r_hat, t_hat


def feature_matrix(grids: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Scores for a stack of grids: array (N, 4) of (m, d, k, c)."""
    grids = np.asarray(grids, dtype=float)
    n = grids.shape[0]
    mask, r_hat, t_hat = _unit_frames(coords)
    v = grids.reshape(n, -1, 2)[:, mask, :]
    mags = np.linalg.norm(v, axis=2)
    m = mags.mean(axis=1)
    radial = np.einsum("ncj,cj->nc", v, r_hat).mean(axis=1)
    tangential = np.einsum("ncj,cj->nc", v, t_hat).mean(axis=1)
    coherent = np.linalg.norm(v.mean(axis=1), axis=1)
    out = np.zeros((n, 4))
    out[:, 0] = m
    nz = m > 0
    out[nz, 1] = np.clip(radial[nz] / m[nz], -1.0, 1.0)
    out[nz, 2] = np.clip(tangential[nz] / m[nz], -1.0, 1.0)
    out[nz, 3] = np.clip(coherent[nz] / m[nz], 0.0, 1.0)
    return out


def features(frame: TactileFrame) -> FieldFeatures:
    m, d, k, c = feature_matrix(frame.grid[None], frame.grid_coords)[0]
    return FieldFeatures(float(m), float(d), float(k), float(c))


def classify_features(feat: FieldFeatures, params: ClassifierParams = ClassifierParams()) -> ObjectStatus:
    if feat.mean_magnitude < params.idle_magnitude:
        return ObjectStatus.IDLE
    if feat.coherence >= params.coherence:
        return ObjectStatus.LINEAR_FORCE
    if abs(feat.tangential_score) >= params.tangential and abs(feat.tangential_score) > abs(feat.radial_score):
        return ObjectStatus.TORQUE
    if feat.radial_score >= params.radial:
        return ObjectStatus.GRASPED
    if feat.radial_score <= -params.radial:
        return ObjectStatus.RELEASED
    return ObjectStatus.AMBIGUOUS


def classify(frame: TactileFrame, params: ClassifierParams = ClassifierParams()) -> ObjectStatus:
    return classify_features(features(frame), params)


def classify_sequence(seq: TactileSequence, params: ClassifierParams = ClassifierParams()) -> list[ObjectStatus]:
    feats = feature_matrix(seq.grids, seq.grid_coords)
    return [classify_features(FieldFeatures(*row), params) for row in feats]


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def majority_filter(labels: Sequence[ObjectStatus], window: int = 5) -> list[ObjectStatus]:
    """Centred sliding majority vote; ties keep the centre label when it is tied,
    otherwise the tied label seen first in the window."""
    if window < 1:
        raise ValueError("window must be >= 1")
    half = window // 2
    out = []
    n = len(labels)
    for i in range(n):
        win = labels[max(0, i - half): min(n, i + half + 1)]
        counts = Counter(win)
        best = max(counts.values())
        tied = [lab for lab, cnt in counts.items() if cnt == best]
        out.append(labels[i] if labels[i] in tied else next(l for l in win if l in tied))
    return out


def resolve_ambiguous(labels: Sequence[ObjectStatus]) -> list[ObjectStatus]:
    """Ambiguous frames take the previous definite status (the next one at the start)."""
    out = list(labels)
    first = next((l for l in out if l is not ObjectStatus.AMBIGUOUS), ObjectStatus.IDLE)
    prev = first
    for i, lab in enumerate(out):
        if lab is ObjectStatus.AMBIGUOUS:
            out[i] = prev
        else:
            prev = lab
    return out


def _runs(labels: Sequence[ObjectStatus]) -> list[list]:
    runs: list[list] = []  # [status, start_index, end_index_exclusive]
    for i, lab in enumerate(labels):
        if runs and runs[-1][0] == lab:
            runs[-1][2] = i + 1
        else:
            runs.append([lab, i, i + 1])
    return runs


def _coalesce(runs: list[list]) -> list[list]:
    out: list[list] = []
    for r in runs:
        if out and out[-1][0] == r[0]:
            out[-1][2] = r[2]
        else:
            out.append(list(r))
    return out


def merge_short_runs(labels: Sequence[ObjectStatus], times: np.ndarray, end_time: float,
                     min_duration: float) -> list[list]:
    """Absorb runs shorter than ``min_duration`` into a neighbour, shortest first.

    The run joins a neighbour with the same status as the other side when the
    two neighbours agree, otherwise the longer neighbour (earlier on ties).
    """
    runs = _runs(labels)

    def dur(r) -> float:
        stop = times[r[2]] if r[2] < len(times) else end_time
        return float(stop - times[r[1]])

    while len(runs) > 1:
        shortest = min(range(len(runs)), key=lambda i: (dur(runs[i]), i))
        if dur(runs[shortest]) >= min_duration - 1e-9:
            break
        r = runs[shortest]
        if shortest == 0:
            target = 1
        elif shortest == len(runs) - 1:
            target = shortest - 1
        else:
            before, after = runs[shortest - 1], runs[shortest + 1]
            target = shortest - 1 if dur(before) >= dur(after) else shortest + 1
        runs[shortest] = [runs[target][0], r[1], r[2]]
        runs = _coalesce(runs)
    return runs


def segment_labels(labels: Sequence[ObjectStatus], timestamps: Sequence[float], *,
                   window: int = 5, min_duration: float = 0.3,
                   frame_period: Optional[float] = None) -> list[Segment]:
    if len(labels) == 0:
        raise EmptySequence("cannot segment an empty sequence")
    times = np.asarray(timestamps, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("frames must be time-ordered")
    if frame_period is None:
        frame_period = float(np.median(np.diff(times))) if len(times) > 1 else 1.0 / DEFAULT_FPS
    end_time = float(times[-1] + frame_period)
    smoothed = resolve_ambiguous(majority_filter(labels, window))
    runs = merge_short_runs(smoothed, times, end_time, min_duration)
    segments = []
    for status, start, stop in runs:
        t_end = float(times[stop]) if stop < len(times) else end_time
        segments.append(Segment(status, float(times[start]), t_end))
    return segments


def segment_sequence(seq: TactileSequence, params: ClassifierParams = ClassifierParams(), *,
                     window: int = 5, min_duration: float = 0.3) -> list[Segment]:
    """Per-frame classification, majority smoothing, ambiguity hysteresis and
    short-run merging; the result tiles the sequence with distinct neighbours."""
    if len(seq) == 0:
        raise EmptySequence("cannot segment an empty sequence")
    return segment_labels(classify_sequence(seq, params), seq.timestamps, window=window,
                          min_duration=min_duration, frame_period=seq.frame_period)


# ---------------------------------------------------------------------------
# Synthetic patterns
# ---------------------------------------------------------------------------


def pattern_field(status: ObjectStatus, amplitude: float = 1.0, direction: float = 0.0,
                  coords: Optional[np.ndarray] = None) -> np.ndarray:
    """Noise-free field for ``status`` whose mean off-centre magnitude is ``amplitude``.

    Grasped: outward (source); Released: inward (sink); LinearForce: uniform
    flow at angle ``direction``; Torque: counter-clockwise swirl; Idle: zero.
    """
    coords = default_grid_coords() if coords is None else coords
    if status is ObjectStatus.IDLE:
        return np.zeros_like(coords)
    if status is ObjectStatus.LINEAR_FORCE:
        field_ = np.broadcast_to(np.array([np.cos(direction), np.sin(direction)]), coords.shape).copy()
    elif status in (ObjectStatus.GRASPED, ObjectStatus.RELEASED):
        field_ = coords.copy() * (1.0 if status is ObjectStatus.GRASPED else -1.0)
    elif status is ObjectStatus.TORQUE:
        field_ = np.stack([-coords[..., 1], coords[..., 0]], axis=-1)
    else:
        raise ValueError(f"no pattern for {status}")
    mask, _, _ = _unit_frames(coords)
    mean_mag = np.linalg.norm(field_.reshape(-1, 2)[mask], axis=1).mean()
    return field_ * (amplitude / mean_mag)


def synthesize_schedule(
    schedule: Sequence[tuple[ObjectStatus, float]],
    fps: float = DEFAULT_FPS,
    noise_sigma: float = 0.0,
    seed: int = 0,
    amplitude: float = 1.0,
    grid: int = DEFAULT_GRID,
    t0: float = 0.0,
) -> TactileSequence:
    """Frames for consecutive (status, duration) pieces; frame i sits at t0 + i/fps.

    A frame belongs to the piece whose half-open time interval contains it.
    """
    if not schedule:
        raise ValueError("schedule is empty")
    rng = np.random.default_rng(seed)
    coords = default_grid_coords(grid, grid)
    bounds = np.cumsum([0.0] + [float(d) for _, d in schedule])
    if np.any(np.diff(bounds) <= 0):
        raise ValueError("durations must be positive")
    n = int(np.floor(bounds[-1] * fps + 1e-9))
    times = t0 + np.arange(n) / fps
    rel = np.arange(n) / fps
    piece = np.searchsorted(bounds, rel + 1e-9, side="right") - 1
    piece = np.clip(piece, 0, len(schedule) - 1)
    directions = rng.uniform(0.0, 2 * np.pi, size=len(schedule))
    templates = [pattern_field(s, amplitude, directions[i], coords) for i, (s, _) in enumerate(schedule)]
    grids = np.stack([templates[p] for p in piece]) if n else np.zeros((0, grid, grid, 2))
    if noise_sigma > 0 and n:
        grids = grids + rng.normal(0.0, noise_sigma, size=grids.shape)
    return TactileSequence(grids, times, coords)


def synthesize_pattern(status: ObjectStatus, duration: float, fps: float = DEFAULT_FPS,
                       noise_sigma: float = 0.0, seed: int = 0, amplitude: float = 1.0,
                       grid: int = DEFAULT_GRID) -> TactileSequence:
    if duration <= 0:
        raise ValueError("duration must be positive")
    return synthesize_schedule([(status, duration)], fps, noise_sigma, seed, amplitude, grid)


def schedule_of(segments: Iterable[Segment]) -> list[tuple[ObjectStatus, float]]:
    return [(s.status, s.duration) for s in segments]


# ---------------------------------------------------------------------------
# JSON lines
# ---------------------------------------------------------------------------


def write_jsonl(seq: TactileSequence, path: Union[str, Path]) -> None:
    h, w = seq.grids.shape[1:3]
    with open(path, "w", encoding="utf-8") as fh:
        for t, g in zip(seq.timestamps, seq.grids):
            row = {"timestamp": round(float(t), 9), "H": int(h), "W": int(w),
                   "vectors": [round(float(x), 9) for x in g.reshape(-1)]}
            fh.write(json.dumps(row) + "\n")


def read_jsonl(path: Union[str, Path]) -> TactileSequence:
    grids, times = [], []
    shape = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                h, w = int(row["H"]), int(row["W"])
                vec = np.asarray(row["vectors"], dtype=float).reshape(h, w, 2)
                t = float(row["timestamp"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad tactile frame ({exc})") from None
            if shape is None:
                shape = (h, w)
            elif shape != (h, w):
                raise ValueError(f"{path}:{lineno}: grid shape changed")
            grids.append(vec)
            times.append(t)
    if not grids:
        raise EmptySequence(f"{path}: no frames")
    return TactileSequence(np.stack(grids), np.array(times))
