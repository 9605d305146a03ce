"""Simulator configuration: the bundled JSON defaults, optionally overridden by a user file."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from ..planner import ExecutionPolicy
from .profiles import ProfileSet, ResistanceProfile


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def default_config_dict() -> dict:
    text = resources.files("demoplan").joinpath("data/default_config.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class SimConfig:
    raw: Mapping[str, Any]

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping] = None) -> "SimConfig":
        doc = default_config_dict()
        if path is not None:
            doc = _merge(doc, json.loads(Path(path).read_text(encoding="utf-8")))
        if overrides:
            doc = _merge(doc, overrides)
        return cls(doc)

    @property
    def dt(self) -> float:
        return 1.0 / float(self.raw["sample_rate"])

    @property
    def tactile(self) -> Mapping[str, float]:
        return self.raw["tactile"]

    @property
    def scene_rate(self) -> float:
        return float(self.raw["scene_rate"])

    def duration(self, skill: str) -> float:
        try:
            return float(self.raw["durations"][skill])
        except KeyError:
            raise KeyError(f"no demo duration configured for skill {skill!r}") from None

    @property
    def motion(self) -> Mapping[str, Any]:
        return self.raw["motion"]

    @property
    def scenes(self) -> Mapping[str, Any]:
        return self.raw["scenes"]

    @property
    def eval(self) -> Mapping[str, Any]:
        return self.raw["eval"]

    @cached_property
    def profiles(self) -> ProfileSet:
        noise = self.raw["wrench_noise"]
        out = {}
        for key, doc in self.raw["profiles"].items():
            skill = key.partition("@")[0]
            p = ResistanceProfile.from_dict(skill, doc)
            if "noise_sigma" not in doc:
                p = p.with_noise(noise[p.channel])
            out[key] = p
        return ProfileSet(out)

    @property
    def policy(self) -> ExecutionPolicy:
        return ExecutionPolicy(**self.raw["policy"])

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"
