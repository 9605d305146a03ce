"""Demonstration records: scene annotations, keyframes and the on-disk demo bundle."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from ..ftsig import WrenchTrace, read_wrench_csv, write_wrench_csv
from ..skill_model import ObjectStatus
from ..tactile import Segment, TactileSequence, read_jsonl, write_jsonl

TARGET_CLASSES = ("cable", "cap_inner", "cap_outer")
ENV_CLASSES = ("clip_U", "clip_C", "bottle")

DIRECTION_WORDS = {
    "downward": (0.0, 0.0, -1.0),
    "upward": (0.0, 0.0, 1.0),
    "forward": (1.0, 0.0, 0.0),
    "backward": (-1.0, 0.0, 0.0),
    "left": (0.0, 1.0, 0.0),
    "right": (0.0, -1.0, 0.0),
}


def direction_word(vector: Sequence[float]) -> str:
    """Name of the axis direction closest to ``vector``."""
    v = np.asarray(vector, dtype=float)
    return max(DIRECTION_WORDS, key=lambda w: float(np.dot(DIRECTION_WORDS[w], v)))


class CoverageGap(ValueError):
    pass


@dataclass(frozen=True)
class SceneObject:
    id: str
    cls: str
    position: tuple
    opening: Optional[tuple] = None

    @property
    def is_env(self) -> bool:
        return self.cls in ENV_CLASSES

    def to_dict(self) -> dict:
        doc = {"id": self.id, "class": self.cls, "position": [round(float(x), 6) for x in self.position]}
        if self.opening is not None:
            doc["opening"] = [round(float(x), 6) for x in self.opening]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SceneObject":
        opening = doc.get("opening")
        return cls(str(doc["id"]), str(doc["class"]), tuple(float(x) for x in doc["position"]),
                   None if opening is None else tuple(float(x) for x in opening))


@dataclass(frozen=True)
class SceneAnnotation:
    """Symbolic stand-in for a camera frame: gripper pose, gripper state, objects."""

    timestamp: float
    ee_position: tuple
    holding: bool
    objects: tuple = ()
    target: Optional[str] = None  # object currently handled by the gripper

    def env_objects(self) -> list[SceneObject]:
        return [o for o in self.objects if o.is_env]

    def object(self, oid: str) -> Optional[SceneObject]:
        return next((o for o in self.objects if o.id == oid), None)

    def nearest_env(self, point: Optional[Sequence[float]] = None) -> tuple[Optional[SceneObject], float]:
        p = np.asarray(self.ee_position if point is None else point, dtype=float)
        best, dist = None, float("inf")
        for o in self.env_objects():
            d = float(np.linalg.norm(np.asarray(o.position) - p))
            if d < dist - 1e-12:
                best, dist = o, d
        return best, dist

    def to_dict(self) -> dict:
        return {
            "t": round(float(self.timestamp), 6),
            "ee": [round(float(x), 6) for x in self.ee_position],
            "holding": bool(self.holding),
            "target": self.target,
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], objects: Optional[tuple] = None) -> "SceneAnnotation":
        objs = objects if "objects" not in doc else tuple(SceneObject.from_dict(o) for o in doc["objects"])
        return cls(float(doc["t"]), tuple(float(x) for x in doc["ee"]), bool(doc["holding"]),
                   objs or (), doc.get("target"))


@dataclass(frozen=True)
class KeyFrame:
    timestamp: float
    status: Optional[ObjectStatus]  # None when statuses are withheld
    scene: SceneAnnotation
    end_scene: Optional[SceneAnnotation] = None  # scene at the end of this keyframe's span
    t_end: Optional[float] = None
    caption: str = ""

    def displacement(self) -> float:
        if self.end_scene is None:
            return 0.0
        return float(np.linalg.norm(np.asarray(self.end_scene.ee_position) - np.asarray(self.scene.ee_position)))


def _nearest_sample(scenes: Sequence[SceneAnnotation], times: np.ndarray, t: float,
                    tolerance: float) -> SceneAnnotation:
    if len(scenes) == 0 or t < times[0] - tolerance or t > times[-1] + tolerance:
        lo = times[0] if len(times) else float("nan")
        hi = times[-1] if len(times) else float("nan")
        raise CoverageGap(f"no scene annotation covers t={t:.3f} s (stream spans {lo:.3f}..{hi:.3f} s)")
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > tolerance + 1e-9:
        raise CoverageGap(f"nearest scene annotation to t={t:.3f} s is {abs(times[i] - t):.3f} s away")
    return scenes[i]


def annotate_keyframes(scenes: Sequence[SceneAnnotation], segments: Sequence[Segment],
                       tolerance: float = 0.05) -> list[KeyFrame]:
    """One keyframe per segment, sampled at its key timestamp (nearest annotation)."""
    times = np.array([s.timestamp for s in scenes])
    out = []
    for seg in segments:
        start = _nearest_sample(scenes, times, seg.key_timestamp, tolerance)
        end_t = min(seg.t_end, float(times[-1])) if len(times) else seg.t_end
        end = _nearest_sample(scenes, times, end_t, tolerance)
        out.append(KeyFrame(seg.key_timestamp, seg.status, start, end, seg.t_end,
                            f"status {seg.status.value}"))
    return out


def uniform_keyframes(scenes: Sequence[SceneAnnotation], t_start: float, t_end: float, n: int = 8,
                      tolerance: float = 0.05) -> list[KeyFrame]:
    """``n`` evenly spaced keyframes without status information."""
    if n < 1:
        raise ValueError("n must be >= 1")
    times = np.array([s.timestamp for s in scenes])
    edges = np.linspace(t_start, t_end, n + 1)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        a_s = _nearest_sample(scenes, times, float(a), max(tolerance, (b - a) / 2))
        b_s = _nearest_sample(scenes, times, min(float(b), float(times[-1])), max(tolerance, (b - a) / 2))
        out.append(KeyFrame(float(a), None, a_s, b_s, float(b), "uniform frame"))
    return out


def strip_status(frames: Sequence[KeyFrame]) -> list[KeyFrame]:
    return [replace(f, status=None, caption="") for f in frames]


@dataclass
class DemoRecord:
    """One demonstration: tactile frames, wrench trace and scene annotations."""

    task: str
    tactile: TactileSequence
    wrench: WrenchTrace
    scenes: list = field(default_factory=list)
    scene_config: Optional[dict] = None
    script: Optional[list] = None  # ground-truth step dicts, when synthesized

    def save(self, directory: Union[str, Path], stem: str = "demo") -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        write_jsonl(self.tactile, d / f"{stem}_tactile.jsonl")
        write_wrench_csv(self.wrench, d / f"{stem}_wrench.csv")
        doc = {
            "task": self.task,
            "tactile": f"{stem}_tactile.jsonl",
            "wrench": f"{stem}_wrench.csv",
            "scene_config": self.scene_config,
            "script": self.script,
            "objects": [o.to_dict() for o in (self.scenes[0].objects if self.scenes else ())],
            "scenes": [{k: v for k, v in s.to_dict().items() if k != "objects"} for s in self.scenes],
        }
        path = d / f"{stem}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DemoRecord":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        objects = tuple(SceneObject.from_dict(o) for o in doc.get("objects", []))
        scenes = [SceneAnnotation.from_dict(s, objects) for s in doc["scenes"]]
        return cls(
            doc["task"],
            read_jsonl(path.parent / doc["tactile"]),
            read_wrench_csv(path.parent / doc["wrench"]),
            scenes,
            doc.get("scene_config"),
            doc.get("script"),
        )
