"""Client for a chat-completions style reasoning service.

The request carries the PDDL domain, the task description and one text
line per keyframe (timestamp, object status, nearby objects); the reply is
expected in the frame transcript format and is parsed with
:func:`parse_reasoner_transcript`.
"""
from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from ..pddl import PddlDomain, emit
from ..skill_model import SkillLibrary
from .records import KeyFrame
from .steps import SkillStep
from .transcript import TranscriptParseError, format_clock, parse_reasoner_transcript

ENDPOINT_ENV = "ANALYZER_ENDPOINT"
KEY_ENV = "ANALYZER_KEY"
MODEL_ENV = "ANALYZER_MODEL"


class RemoteUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    api_key: Optional[str] = None
    model: str = "default"
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5

    @classmethod
    def from_env(cls, **overrides) -> "RemoteConfig":
        endpoint = os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise RemoteUnavailable(f"set {ENDPOINT_ENV} to use the remote reasoner")
        fields = {"endpoint": endpoint, "api_key": os.environ.get(KEY_ENV),
                  "model": os.environ.get(MODEL_ENV, "default")}
        fields.update(overrides)
        return cls(**fields)


SYSTEM_PROMPT = (
    "You label robot demonstrations with skills. Every label must be one action of the "
    "PDDL domain given by the user, written as a PDDL call with constant arguments."
)


def describe_keyframe(index: int, kf: KeyFrame) -> str:
    status = kf.status.value if kf.status is not None else "unknown"
    objects = ", ".join(
        f"{o.id} ({o.cls}) at [{', '.join(f'{x:.3f}' for x in o.position)}]" for o in kf.scene.objects
    )
    ee = ", ".join(f"{x:.3f}" for x in kf.scene.ee_position)
    gripper = "closed on " + str(kf.scene.target) if kf.scene.holding else "open"
    return (f"Frame {index} ({format_clock(kf.timestamp)}): object status {status}; gripper {gripper}; "
            f"end effector at [{ee}]; objects: {objects or 'none'}")


def build_messages(domain: PddlDomain, keyframes: Sequence[KeyFrame], task_description: str) -> list[dict]:
    frames = "\n".join(describe_keyframe(i, kf) for i, kf in enumerate(keyframes, 1))
    user = (
        "Domain:\n" + emit(domain) + "\n"
        "Task: " + task_description.strip() + "\n\n"
        "Keyframes:\n" + frames + "\n\n"
        "For each keyframe write one line exactly as\n"
        "Frame N (HH:MM:SS.mmm): (action arg ...) ; short justification\n"
        "using the object status and the motion between frames as evidence."
    )
    return [{"role": "system", "content": SYSTEM_PROMPT}, {"role": "user", "content": user}]


def post_chat(config: RemoteConfig, messages: list[dict],
              opener: Callable = urllib.request.urlopen, sleep: Callable = time.sleep) -> str:
    """POST ``{model, messages}``; return ``choices[0].message.content``.

    Transport failures are retried ``config.retries`` times.
    """
    body = json.dumps({"model": config.model, "messages": messages}).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    last: Optional[Exception] = None
    for attempt in range(config.retries + 1):
        request = urllib.request.Request(config.endpoint, data=body, headers=headers, method="POST")
        try:
            with opener(request, timeout=config.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            last = exc
            if attempt < config.retries:
                sleep(config.backoff * (2 ** attempt))
            continue
        except json.JSONDecodeError as exc:
            raise TranscriptParseError(f"response is not JSON: {exc}") from None
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TranscriptParseError("response has no choices[0].message.content") from None
        return content or ""
    raise RemoteUnavailable(f"{config.endpoint}: {last} (after {config.retries + 1} attempts)")


def infer_skill_sequence_remote(config: RemoteConfig, domain: PddlDomain, keyframes: Sequence[KeyFrame],
                                task_description: str, lib: Optional[SkillLibrary] = None) -> list[SkillStep]:
    """Per-frame steps as returned by the service (not collapsed)."""
    content = post_chat(config, build_messages(domain, keyframes, task_description))
    return parse_reasoner_transcript(content, lib)
