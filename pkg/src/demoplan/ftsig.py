"""Force/torque signals: resistance extraction and success-threshold grounding.

A wrench is reduced to two non-negative scalars: the force opposing the
commanded linear motion and the torque opposing the commanded rotation.
Thresholds are grounded from quantile gaps between the tail of the active
segment and a reference window (after the segment for "below" conditions,
before it for "above" conditions).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .skill_model import (
    GripperHolding,
    Not,
    PoseReached,
    ResistanceForceAbove,
    ResistanceForceBelow,
    ResistanceTorqueAbove,
    Skill,
    SkillLibrary,
    UnknownSkill,
    resistance_of,
)
from .tactile import Segment

BELOW, ABOVE = "below", "above"
FORCE, TORQUE = "force", "torque"
_UNIT_TOL = 1e-6


class NonUnitDirection(ValueError):
    pass


class NoSeparation(ValueError):
    """The demonstration signal cannot separate active from reference samples."""


class NoTemplate(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "no template"


class TraceCoverage(ValueError):
    pass


@dataclass(frozen=True)
class WrenchSample:
    force: tuple
    torque: tuple
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench components must be finite")


def _check_unit(v: Optional[np.ndarray], what: str) -> None:
    if v is None:
        return
    norms = np.linalg.norm(np.atleast_2d(v), axis=1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise NonUnitDirection(f"{what} must be a unit vector (norm {norms.min():.6g}..{norms.max():.6g})")


def resistance(sample: WrenchSample, direction: Optional[Sequence[float]] = None,
               omega: Optional[Sequence[float]] = None) -> tuple[float, float]:
    """(f_r, tau_r): opposing components, clamped at zero; magnitudes when no direction."""
    force = np.asarray(sample.force, dtype=float)
    torque = np.asarray(sample.torque, dtype=float)
    d = None if direction is None else np.asarray(direction, dtype=float)
    w = None if omega is None else np.asarray(omega, dtype=float)
    _check_unit(d, "linear direction")
    _check_unit(w, "angular direction")
    f_r = float(np.linalg.norm(force)) if d is None else max(0.0, float(-force @ d))
    t_r = float(np.linalg.norm(torque)) if w is None else max(0.0, float(-torque @ w))
    return f_r, t_r


def _opposing(values: np.ndarray, dirs: Optional[np.ndarray]) -> np.ndarray:
    if dirs is None:
        return np.linalg.norm(values, axis=1)
    dirs = np.asarray(dirs, dtype=float)
    has = np.all(np.isfinite(dirs), axis=1)
    out = np.linalg.norm(values, axis=1)
    if np.any(has):
        _check_unit(dirs[has], "direction")
        out[has] = np.maximum(0.0, -np.einsum("ij,ij->i", values[has], dirs[has]))
    return out


@dataclass(frozen=True)
class WrenchTrace:
    """Raw 6-D samples plus per-sample commanded directions (NaN rows = absent)."""

    t: np.ndarray
    force: np.ndarray  # (N, 3)
    torque: np.ndarray  # (N, 3)
    direction: Optional[np.ndarray] = None  # (N, 3)
    omega: Optional[np.ndarray] = None  # (N, 3)

    def resistance(self) -> "ResistanceTrace":
        return ResistanceTrace(
            np.asarray(self.t, float),
            _opposing(np.asarray(self.force, float), self.direction),
            _opposing(np.asarray(self.torque, float), self.omega),
        )


@dataclass(frozen=True)
class ResistanceTrace:
    t: np.ndarray
    f_r: np.ndarray
    tau_r: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, float)
        f = np.asarray(self.f_r, float)
        tau = np.asarray(self.tau_r, float)
        if not (len(t) == len(f) == len(tau)):
            raise ValueError("trace arrays must have equal length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(f < 0) or np.any(tau < 0):
            raise ValueError("resistance values must be non-negative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f_r", f)
        object.__setattr__(self, "tau_r", tau)

    def channel(self, name: str) -> np.ndarray:
        if name == FORCE:
            return self.f_r
        if name == TORQUE:
            return self.tau_r
        raise ValueError(f"unknown channel {name!r}")

    def window(self, start: float, stop: float, name: str) -> np.ndarray:
        mask = (self.t >= start - 1e-9) & (self.t < stop - 1e-9)
        return self.channel(name)[mask]

    def scaled(self, alpha: float, name: str) -> "ResistanceTrace":
        f = self.f_r * alpha if name == FORCE else self.f_r
        tau = self.tau_r * alpha if name == TORQUE else self.tau_r
        return ResistanceTrace(self.t, f, tau)

    def concat(self, other: "ResistanceTrace") -> "ResistanceTrace":
        return ResistanceTrace(np.concatenate([self.t, other.t]), np.concatenate([self.f_r, other.f_r]),
                               np.concatenate([self.tau_r, other.tau_r]))


@dataclass(frozen=True)
class GroundingParams:
    tail_fraction: float = 0.3  # rho
    below_gain: float = 0.25  # gamma
    above_gain: float = 0.9  # beta
    post_window: float = 1.0  # seconds
    low_quantile: float = 0.10
    high_quantile: float = 0.90

    def __post_init__(self) -> None:
        if not 0 < self.tail_fraction <= 1:
            raise ValueError("tail_fraction must be in (0, 1]")
        if not 0 < self.below_gain < 1 or not 0 < self.above_gain < 1:
            raise ValueError("gains must be in (0, 1)")
        if self.post_window <= 0:
            raise ValueError("post_window must be positive")


@dataclass(frozen=True)
class GroundingWindows:
    active: np.ndarray
    reference: np.ndarray
    q_active: float
    q_reference: float


def grounding_windows(trace: ResistanceTrace, active: Segment, sense: str, channel: str,
                      params: GroundingParams = GroundingParams()) -> GroundingWindows:
    tail_start = active.t_end - params.tail_fraction * (active.t_end - active.t_start)
    a = trace.window(tail_start, active.t_end, channel)
    if sense == BELOW:
        b = trace.window(active.t_end, active.t_end + params.post_window, channel)
        where = "after"
    elif sense == ABOVE:
        b = trace.window(active.t_start - params.post_window, active.t_start, channel)
        where = "before"
    else:
        raise ValueError(f"sense must be {BELOW!r} or {ABOVE!r}")
    if len(a) == 0:
        raise TraceCoverage(f"no {channel} samples in the tail of the active segment")
    if len(b) == 0:
        raise TraceCoverage(f"no {channel} samples in the reference window {where} the active segment")
    return GroundingWindows(a, b, float(np.quantile(a, params.low_quantile)),
                            float(np.quantile(b, params.high_quantile)))


def ground_threshold(trace: ResistanceTrace, active: Segment, sense: str, channel: str = FORCE,
                     params: GroundingParams = GroundingParams()) -> float:
    """Threshold separating the active tail from the reference window.

    below: q_hi(post) + gamma * (q_lo(tail) - q_hi(post))
    above: beta * q_lo(tail), which must still exceed q_hi(baseline)
    """
    w = grounding_windows(trace, active, sense, channel, params)
    if not w.q_active > w.q_reference:
        raise NoSeparation(
            f"{channel}: active tail q{params.low_quantile:g}={w.q_active:.4g} does not exceed "
            f"reference q{params.high_quantile:g}={w.q_reference:.4g}"
        )
    if sense == BELOW:
        return w.q_reference + params.below_gain * (w.q_active - w.q_reference)
    theta = params.above_gain * w.q_active
    if not theta > w.q_reference:
        raise NoSeparation(
            f"{channel}: scaled active level {theta:.4g} does not exceed reference {w.q_reference:.4g}"
        )
    return theta


def ground_skill(trace: ResistanceTrace, active: Segment, skill: Skill,
                 params: GroundingParams = GroundingParams()) -> float:
    res = resistance_of(skill.success)
    if res is None:
        raise NoTemplate(f"skill {skill.name} has no resistance condition to ground")
    return ground_threshold(trace, active, res.sense, res.channel, params)


_TEMPLATES = {
    "insert": ResistanceForceBelow,
    "stretch": ResistanceForceAbove,
    "push": ResistanceForceAbove,
    "tighten": ResistanceTorqueAbove,
}


def propose_condition(skill: Skill):
    """Initial success condition from a fixed per-skill template and the stored parameters."""
    name = skill.name
    if name in _TEMPLATES:
        key = "torque_threshold" if _TEMPLATES[name] is ResistanceTorqueAbove else "force_threshold"
        if key not in skill.params:
            raise NoTemplate(f"skill {name} lacks parameter {key!r}")
        return _TEMPLATES[name](float(skill.params[key].value))
    if name == "grasp":
        return GripperHolding()
    if name in ("release", "open_hand"):
        return Not(GripperHolding())
    if name == "move":
        tol = skill.params["tolerance"].value if "tolerance" in skill.params else 0.01
        return PoseReached("pose", float(tol))
    if name == "move_object":
        tol = skill.params["tolerance"].value if "tolerance" in skill.params else 0.01
        return PoseReached("env", float(tol))
    raise NoTemplate(f"no condition template for skill {name!r}")


def update_library(lib: SkillLibrary, groundings: Mapping[str, float]) -> SkillLibrary:
    """New library with grounded thresholds; keys are ``skill`` or ``skill@env_class``.

    Skills inherited from a parent library are shadowed in the child so the
    shared parent is never modified.
    """
    out = lib
    for key in sorted(groundings, key=lambda k: ("@" in k, k)):
        name, _, env_class = key.partition("@")
        skill = out.resolve(name)
        if resistance_of(skill.success) is None:
            raise NoTemplate(f"skill {name} has no resistance condition")
        out = out.with_skill(skill.with_threshold(float(groundings[key]), env_class or None))
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_HEADER = ["t", "fx", "fy", "fz", "tx", "ty", "tz", "dx", "dy", "dz", "wx", "wy", "wz"]


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else f"{x:.6f}"


def write_wrench_csv(trace: WrenchTrace, path: Union[str, Path]) -> None:
    n = len(trace.t)
    nan3 = np.full((n, 3), np.nan)
    d = nan3 if trace.direction is None else trace.direction
    w = nan3 if trace.omega is None else trace.omega
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for i in range(n):
            row = [trace.t[i], *trace.force[i], *trace.torque[i], *d[i], *w[i]]
            writer.writerow([_fmt(float(x)) for x in row])


def read_wrench_csv(path: Union[str, Path]) -> WrenchTrace:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_HEADER[:7] if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, 2):
            try:
                rows.append([float(row.get(c) or "nan") for c in CSV_HEADER])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
    data = np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))
    if np.any(~np.isfinite(data[:, :7])):
        raise ValueError(f"{path}: time and wrench columns must be filled")
    return WrenchTrace(data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7:10], data[:, 10:13])
