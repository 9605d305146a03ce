"""Discrete skill executor over resistance profiles.

Kinematic skills (moves, grasp, release) act instantly on the symbolic
state. Contact skills integrate their profile at the sample rate, check the
success condition at every sample and stop at the first sample that meets it,
or with ``Error(TorqueLimit)`` when the commanded effort reaches its cap.
Whether the physical effect happened is tracked separately from the return.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from ..analyzer.steps import SkillStep, to_ground_action
from ..ftsig import ResistanceTrace
from ..pddl import Atom, past_participle
from ..planner import SceneConfig, StepOutcome
from ..skill_model import TORQUE_LIMIT, SkillLibrary, SkillReturn, resistance_of
from .config import SimConfig
from .profiles import Episode, ResistanceProfile, draw_episode, noise_for, run_profile

KINEMATIC = ("move", "move_object", "grasp", "release", "open_hand")
NOT_HOLDING = "NotHolding"
HAND_OCCUPIED = "HandOccupied"


class UnknownAction(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class SimState:
    scene: SceneConfig
    seed: int = 0
    clock: float = 0.0
    holding: Optional[str] = None
    at: tuple = ()  # ((target, env), ...): where each target currently is
    stretched: frozenset = frozenset()
    achieved: frozenset = frozenset()  # goal atoms physically in place (monotone)
    attempts: int = 0

    def location(self, target: Optional[str]) -> Optional[str]:
        return dict(self.at).get(target)

    def atoms(self) -> frozenset:
        out = set(self.achieved)
        out |= {Atom("at", pair) for pair in self.at}
        out |= {Atom("stretched", (o,)) for o in self.stretched}
        out.add(Atom("holding", (self.holding,)) if self.holding else Atom("hand_open"))
        return frozenset(out)


def _rng(state: SimState, *salt: int) -> np.random.Generator:
    return np.random.default_rng([int(state.seed) & 0xFFFFFFFF, *salt])


def _object_index(scene: SceneConfig, oid: Optional[str]) -> int:
    ids = [o.id for o in scene.objects]
    return ids.index(oid) if oid in ids else len(ids)


def _env_class(scene: SceneConfig, oid: Optional[str]) -> Optional[str]:
    if oid is None:
        return None
    try:
        return scene.object(oid).cls
    except KeyError:
        return None


def object_episode(state: SimState, profile: ResistanceProfile, env: Optional[str]) -> Episode:
    """Per-attempt draws; the extra post level is fixed per object for the whole run."""
    offset_rng = _rng(state, 1, _object_index(state.scene, env))
    lo, hi = profile.offset_range
    offset = float(offset_rng.uniform(lo, hi)) if hi > lo else float(lo)
    return draw_episode(profile, _rng(state, 2, state.attempts), offset)


def _kinematic(state: SimState, step: SkillStep) -> tuple[SimState, SkillReturn]:
    name = step.skill
    if name == "move":
        if state.holding is not None:
            return state, SkillReturn.error(HAND_OCCUPIED)
        return state, SkillReturn.success()
    if name == "move_object":
        if state.holding is not None:
            return state, SkillReturn.error(HAND_OCCUPIED)
        at = dict(state.at)
        at[step.target] = step.env
        return replace(state, at=tuple(sorted(at.items()))), SkillReturn.success()
    if name == "grasp":
        if state.holding is not None:
            return state, SkillReturn.error(HAND_OCCUPIED)
        return replace(state, holding=step.target), SkillReturn.success()
    if state.holding is None:  # release / open_hand
        return state, SkillReturn.error(NOT_HOLDING)
    return replace(state, holding=None), SkillReturn.success()


def execute_step(state: SimState, step: SkillStep, library: SkillLibrary,
                 config: Optional[SimConfig] = None) -> tuple[SimState, SkillReturn, Optional[ResistanceTrace]]:
    """Advance the simulation by one skill; returns the new state, R and the trace fragment."""
    config = config or SimConfig.load()
    skill = library.resolve(step.skill)
    if skill.name in KINEMATIC:
        new, ret = _kinematic(state, step)
        elapsed = config.duration(skill.name)
        return replace(new, clock=state.clock + elapsed, attempts=state.attempts + 1), ret, None
    env_class = _env_class(state.scene, step.env)
    profile = config.profiles.lookup(skill.name, env_class)
    res = resistance_of(skill.success)
    if profile is None or res is None:
        raise UnknownAction(f"no resistance profile for {skill.name!r}"
                            + (f" at {env_class}" if env_class else ""))
    if state.holding != step.target:
        return replace(state, attempts=state.attempts + 1), SkillReturn.error(NOT_HOLDING), None
    threshold = skill.threshold_for(env_class)
    effect = to_ground_action(step, library)
    goal_atom = Atom(past_participle(skill.name), effect.args)
    episode = object_episode(state, profile, step.env)
    noise = noise_for(profile, _rng(state, 3, state.attempts), config.dt)
    flat = None
    if skill.env_slot is not None:
        if goal_atom in state.achieved:
            flat = profile.seated_level
        elif state.location(step.target) != step.env or (profile.has_drop and step.target not in state.stretched):
            flat = profile.slack_level
    run = run_profile(profile, res.sense, threshold, episode, noise, config.dt, flat)
    t = state.clock + run.t
    frag = ResistanceTrace(t, run.measured, np.zeros_like(run.measured)) if profile.channel == "force" \
        else ResistanceTrace(t, np.zeros_like(run.measured), run.measured)
    new = replace(state, clock=state.clock + float(run.t[-1]) + config.dt, attempts=state.attempts + 1)
    if run.achieved:
        if skill.env_slot is not None:
            new = replace(new, achieved=new.achieved | {goal_atom})
        else:
            new = replace(new, stretched=new.stretched | {step.target})
    if not run.satisfied:
        if profile.slip_on_limit:
            new = replace(new, holding=None, stretched=new.stretched - {step.target})
        return new, SkillReturn.error(TORQUE_LIMIT), frag
    return new, SkillReturn.success(), frag


@dataclass
class SimExecutor:
    """Stateful adapter for :func:`demoplan.planner.execute_with_feedback`."""

    state: SimState
    config: SimConfig = field(default_factory=SimConfig.load)
    history: list = field(default_factory=list)

    @classmethod
    def for_scene(cls, scene: SceneConfig, seed: int, config: Optional[SimConfig] = None) -> "SimExecutor":
        return cls(SimState(scene, seed), config or SimConfig.load())

    def execute(self, step: SkillStep, library: SkillLibrary) -> StepOutcome:
        before = self.state.clock
        self.state, ret, frag = execute_step(self.state, step, library, self.config)
        self.history.append((step, str(ret)))
        return StepOutcome(ret, self.state.clock - before, frag)

    def achieved(self, atoms: Iterable[Atom]) -> bool:
        have = self.state.atoms()
        return all(a in have for a in atoms)
