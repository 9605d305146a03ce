"""Scalar resistance profiles for contact skills.

A profile is a noise-free curve of the resistance a skill meets over time:

* before ``onset`` the level is ``contact_level`` (spinning a loose cap,
  touching the clip);
* it then ramps linearly to ``peak`` over ``rise_time``;
* profiles with a drop fall to ``post_plateau + offset`` at ``t_drop``,
  either linearly over ``drop_duration`` (gradual) or at once (abrupt),
  optionally with a sinusoidal ringing on the new level.

The commanded effort grows at ``effort_rate``; when it reaches the cap the
executor stops with a torque-limit error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

DROP_STYLES = ("none", "gradual", "abrupt")


@dataclass(frozen=True)
class ResistanceProfile:
    skill: str
    channel: str = "force"  # "force" or "torque"
    contact_level: float = 0.0
    peak: float = 1.0
    rise_time: float = 0.5
    post_plateau: float = 0.0
    drop_style: str = "none"
    drop_duration: float = 0.0
    demo_drop_delay: float = 0.0  # demo: drop starts this long after the segment ends
    drop_range: tuple = (0.8, 1.6)  # execution: drop time drawn uniformly from this range
    ringing_amplitude: float = 0.0
    ringing_hz: float = 0.0
    offset_range: tuple = (0.0, 0.0)  # execution: extra post level per object
    achieve_level: Optional[float] = None  # physical effect once the true level reaches this
    clip_at_peak: bool = False  # measured value saturates at the peak (grip slip)
    slip_on_limit: bool = False  # the grip is lost when the effort cap is hit
    slack_level: float = 1.5  # level when the geometry is wrong (nothing to push against)
    seated_level: float = 1.5  # level when the effect is already achieved
    demo_onset: float = 0.0
    onset_range: tuple = (0.0, 0.0)
    noise_sigma: float = 0.0
    force_cap: float = 15.0
    torque_cap: float = 4.0
    effort_rate: float = 3.75  # cap units per second

    def __post_init__(self) -> None:
        if self.channel not in ("force", "torque"):
            raise ValueError(f"{self.skill}: channel must be force or torque")
        if self.drop_style not in DROP_STYLES:
            raise ValueError(f"{self.skill}: drop_style must be one of {DROP_STYLES}")
        if not self.peak > self.post_plateau >= 0:
            raise ValueError(f"{self.skill}: need peak > post_plateau >= 0")
        if not self.cap > self.peak:
            raise ValueError(f"{self.skill}: the effort cap must exceed the peak")
        if self.rise_time <= 0 or self.effort_rate <= 0:
            raise ValueError(f"{self.skill}: rise_time and effort_rate must be positive")
        object.__setattr__(self, "drop_range", tuple(self.drop_range))
        object.__setattr__(self, "offset_range", tuple(self.offset_range))
        object.__setattr__(self, "onset_range", tuple(self.onset_range))

    @property
    def cap(self) -> float:
        return self.force_cap if self.channel == "force" else self.torque_cap

    @property
    def limit_time(self) -> float:
        """Time for the commanded effort to reach the cap."""
        return self.cap / self.effort_rate

    @property
    def has_drop(self) -> bool:
        return self.drop_style != "none"

    def with_noise(self, sigma: float) -> "ResistanceProfile":
        return _replace(self, noise_sigma=float(sigma))

    @classmethod
    def from_dict(cls, skill: str, doc: Mapping) -> "ResistanceProfile":
        return cls(skill=skill, **dict(doc))


def _replace(p: ResistanceProfile, **kw) -> ResistanceProfile:
    from dataclasses import replace

    return replace(p, **kw)


@dataclass(frozen=True)
class Episode:
    """Random draws that fix one execution (or demonstration) of a profile."""

    onset: float = 0.0
    t_drop: float = math.inf
    offset: float = 0.0


def level(p: ResistanceProfile, t: float, ep: Episode) -> float:
    """Noise-free resistance at time ``t`` (scalar reference implementation)."""
    if t < ep.onset:
        value = p.contact_level
    else:
        value = p.contact_level + (p.peak - p.contact_level) * min((t - ep.onset) / p.rise_time, 1.0)
    if p.has_drop and t >= ep.t_drop:
        post = p.post_plateau + ep.offset
        dt = t - ep.t_drop
        if p.drop_style == "gradual" and p.drop_duration > 0 and dt < p.drop_duration:
            start = level(p, ep.t_drop - 1e-12, ep)
            value = start + (post - start) * dt / p.drop_duration
        else:
            value = post
        if p.ringing_amplitude:
            value += p.ringing_amplitude * math.sin(2 * math.pi * p.ringing_hz * dt)
    return max(value, 0.0)


def curve(p: ResistanceProfile, t: np.ndarray, ep: Episode) -> np.ndarray:
    """Vectorized :func:`level`."""
    t = np.asarray(t, dtype=float)
    ramp = np.clip((t - ep.onset) / p.rise_time, 0.0, 1.0)
    value = np.where(t < ep.onset, p.contact_level, p.contact_level + (p.peak - p.contact_level) * ramp)
    if p.has_drop and math.isfinite(ep.t_drop):
        post = p.post_plateau + ep.offset
        dt = t - ep.t_drop
        start = level(p, ep.t_drop - 1e-12, ep)
        if p.drop_style == "gradual" and p.drop_duration > 0:
            dropped = np.where(dt < p.drop_duration, start + (post - start) * dt / p.drop_duration, post)
        else:
            dropped = np.full_like(t, post)
        if p.ringing_amplitude:
            dropped = dropped + p.ringing_amplitude * np.sin(2 * np.pi * p.ringing_hz * dt)
        value = np.where(t >= ep.t_drop, dropped, value)
    return np.maximum(value, 0.0)


def measure(p: ResistanceProfile, true: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Sensor reading: true level plus noise, clamped at zero (and at the peak when slipping)."""
    out = np.maximum(true + noise, 0.0)
    if p.clip_at_peak:
        out = np.minimum(out, p.peak)
    return out


def achieve_time(p: ResistanceProfile, ep: Episode, t: np.ndarray) -> float:
    """Earliest time the skill's physical effect is in place (inf if never within ``t``)."""
    if p.has_drop:
        return ep.t_drop
    if p.achieve_level is None:
        return math.inf
    hit = np.nonzero(curve(p, t, ep) >= p.achieve_level - 1e-12)[0]
    return float(t[hit[0]]) if len(hit) else math.inf


def demo_episode(p: ResistanceProfile, duration: float) -> Episode:
    """The demonstrator's run: drop just after the segment ends, no extra offset."""
    return Episode(onset=p.demo_onset, t_drop=duration + p.demo_drop_delay if p.has_drop else math.inf)


def draw_episode(p: ResistanceProfile, rng: np.random.Generator, offset: Optional[float] = None) -> Episode:
    onset = float(rng.uniform(*p.onset_range)) if p.onset_range[1] > p.onset_range[0] else float(p.onset_range[0])
    t_drop = float(rng.uniform(*p.drop_range)) if p.has_drop else math.inf
    if offset is None:
        lo, hi = p.offset_range
        offset = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return Episode(onset, t_drop + onset if p.has_drop else t_drop, offset)


@dataclass(frozen=True)
class ProfileRun:
    """Outcome of integrating one profile against a success condition."""

    t: np.ndarray  # sample times relative to the skill start, up to the stop sample
    measured: np.ndarray
    satisfied: bool
    stop_index: int
    achieved: bool


def _check(sense: str, value: float, threshold: float) -> bool:
    return value < threshold if sense == "below" else value > threshold


def run_profile(p: ResistanceProfile, sense: str, threshold: float, ep: Episode, noise: np.ndarray,
                dt: float = 0.01, flat: Optional[float] = None) -> ProfileRun:
    """Vectorized integration: stop at the first sample meeting the condition or at the effort cap.

    ``flat`` replaces the curve by a constant level (slack or seated contact).
    """
    n = int(round(p.limit_time / dt))
    t = np.arange(n + 1) * dt
    true = np.full_like(t, flat) if flat is not None else curve(p, t, ep)
    meas = measure(p, true, noise[: n + 1])
    ok = meas[:n] < threshold if sense == "below" else meas[:n] > threshold
    hits = np.nonzero(ok)[0]
    satisfied = len(hits) > 0
    stop = int(hits[0]) if satisfied else n
    achieved = flat is None and achieve_time(p, ep, t[: stop + 1]) <= t[stop] + 1e-12
    return ProfileRun(t[: stop + 1], meas[: stop + 1], satisfied, stop, achieved)


def run_profile_ticks(p: ResistanceProfile, sense: str, threshold: float, ep: Episode, noise: np.ndarray,
                      dt: float = 0.01, flat: Optional[float] = None) -> ProfileRun:
    """Tick-by-tick reference for :func:`run_profile` (slow, used as an oracle)."""
    ts, values = [], []
    achieved = False
    k = 0
    while True:
        t = k * dt
        true = flat if flat is not None else level(p, t, ep)
        value = max(true + float(noise[k]), 0.0)
        if p.clip_at_peak:
            value = min(value, p.peak)
        ts.append(t)
        values.append(value)
        if flat is None:
            if p.has_drop:
                achieved = achieved or t >= ep.t_drop - 1e-12
            elif p.achieve_level is not None:
                achieved = achieved or true >= p.achieve_level - 1e-12
        effort = p.effort_rate * t
        if effort >= p.cap - 1e-9:
            return ProfileRun(np.array(ts), np.array(values), False, k, achieved)
        if _check(sense, value, threshold):
            return ProfileRun(np.array(ts), np.array(values), True, k, achieved)
        k += 1


def noise_for(p: ResistanceProfile, rng: np.random.Generator, dt: float = 0.01, extra: float = 0.0) -> np.ndarray:
    n = int(round((p.limit_time + extra) / dt)) + 2
    return rng.normal(0.0, p.noise_sigma, n) if p.noise_sigma > 0 else np.zeros(n)


@dataclass(frozen=True)
class ProfileSet:
    profiles: Mapping[str, ResistanceProfile] = field(default_factory=dict)

    def lookup(self, skill: str, env_class: Optional[str] = None) -> Optional[ResistanceProfile]:
        if env_class is not None and f"{skill}@{env_class}" in self.profiles:
            return self.profiles[f"{skill}@{env_class}"]
        return self.profiles.get(skill)

    def keys(self) -> Sequence[str]:
        return sorted(self.profiles)
