"""Frame-by-frame reasoning transcripts.

Line format::

    Frame <n> (<HH:MM:SS.mmm>): (<skill> <arg> ...) ; <reason>

Blank lines and lines that do not start with ``Frame`` are ignored; a line
that starts with ``Frame`` but does not match the format is an error.
"""
from __future__ import annotations

import re
from typing import Optional

from ..pddl import action_slots
from ..skill_model import SkillLibrary, UnknownSkill
from .records import DIRECTION_WORDS
from .steps import SkillStep

_LINE = re.compile(
    r"^Frame\s+(?P<n>\d+)\s*\((?P<h>\d{1,2}):(?P<m>\d{2}):(?P<s>\d{2})(?:\.(?P<ms>\d{1,3}))?\)\s*:\s*"
    r"\((?P<call>[^()]*)\)\s*(?:;\s*(?P<reason>.*?))?\s*$",
    re.IGNORECASE,
)
_EXTRA_DIRECTIONS = {"down", "up", "clockwise", "counterclockwise"}


class TranscriptParseError(ValueError):
    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _seconds(h: str, m: str, s: str, ms: Optional[str]) -> float:
    millis = int((ms or "0").ljust(3, "0"))
    return (int(h) * 3_600_000 + int(m) * 60_000 + int(s) * 1000 + millis) / 1000.0


def format_clock(t: float) -> str:
    total = int(round(t * 1000))
    h, rem = divmod(total, 3_600_000)
    m, rem = divmod(rem, 60_000)
    s, ms = divmod(rem, 1000)
    return f"{h:02d}:{m:02d}:{s:02d}.{ms:03d}"


def _is_direction(word: str) -> bool:
    return word.lower() in DIRECTION_WORDS or word.lower() in _EXTRA_DIRECTIONS


def _bind_args(skill_name: str, args: list[str], lib: Optional[SkillLibrary], lineno: int) -> tuple:
    target = env = None
    params: dict[str, str] = {}
    if lib is not None:
        try:
            skill = lib.resolve(skill_name)
        except UnknownSkill as exc:
            raise TranscriptParseError(str(exc), lineno) from None
        slots = action_slots(skill)
        objects = [s for s in slots if s.source in ("target", "env")]
        directions = [s for s in slots if s.type == "direction"]
        others = [s for s in slots if s.source not in ("target", "env") and s.type != "direction"]
        bound: dict[str, str] = {}
        for a in args:
            if _is_direction(a) and directions:
                slot = directions.pop(0)
            elif objects:
                slot = objects.pop(0)
            elif others:
                slot = others.pop(0)
            else:
                raise TranscriptParseError(f"too many arguments for {skill_name}", lineno)
            bound[slot.source] = a
        target, env = bound.pop("target", None), bound.pop("env", None)
        return target, env, bound
    objects = []
    for a in args:
        if _is_direction(a):
            if "direction" in params:
                raise TranscriptParseError("more than one direction argument", lineno)
            params["direction"] = a
        else:
            objects.append(a)
    if len(objects) > 2:
        raise TranscriptParseError(f"too many object arguments in ({skill_name} {' '.join(args)})", lineno)
    if objects:
        target = objects[0]
    if len(objects) == 2:
        env = objects[1]
    return target, env, params


def parse_reasoner_transcript(text: str, lib: Optional[SkillLibrary] = None) -> list[SkillStep]:
    """Parse every frame line into a step (no collapsing), ordered by frame number.

    With ``lib``, direction words fill the skill's direction slot and the
    other arguments fill its object slots (target, then contextual object);
    otherwise direction words become the ``direction`` parameter and the
    remaining arguments are the target then the contextual object.
    """
    steps = []
    for lineno, raw in enumerate((text or "").splitlines(), 1):
        line = raw.strip()
        if not line or not line.lower().startswith("frame"):
            continue
        m = _LINE.match(line)
        if m is None:
            raise TranscriptParseError(f"expected 'Frame N (HH:MM:SS.mmm): (skill args) ; reason', got {line!r}",
                                       lineno)
        tokens = m.group("call").split()
        if not tokens:
            raise TranscriptParseError("empty skill call", lineno)
        name, args = tokens[0].lower(), tokens[1:]
        target, env, params = _bind_args(name, args, lib, lineno)
        steps.append(SkillStep(
            name, target, env, params, (m.group("reason") or "").strip(),
            int(m.group("n")), _seconds(m.group("h"), m.group("m"), m.group("s"), m.group("ms")),
        ))
    if not steps:
        raise TranscriptParseError("transcript contains no frame lines")
    return sorted(steps, key=lambda s: s.frame)


def format_transcript(steps: list[SkillStep]) -> str:
    """Inverse of :func:`parse_reasoner_transcript` (library-free argument order)."""
    lines = []
    for i, step in enumerate(steps, 1):
        frame = step.frame if step.frame is not None else i
        stamp = format_clock(step.timestamp or 0.0)
        args = [a for a in (step.target, step.params.get("direction"), step.env) if a is not None]
        extra = sorted(k for k in step.params if k != "direction")
        if extra:
            raise ValueError(f"only the direction parameter can be written to a transcript, got {extra}")
        call = " ".join([step.skill, *args])
        reason = step.reason.replace("\n", " ").strip()
        lines.append(f"Frame {frame} ({stamp}): ({call})" + (f" ; {reason}" if reason else ""))
    return "\n\n".join(lines) + "\n"
