"""STRIPS + typing PDDL: domain/problem parsing and emission, state semantics,
plan validation, breadth-first search, and translation of skill libraries.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Optional, Sequence, Union

from .skill_model import (
    And,
    GripperHolding,
    Not,
    PoseReached,
    Skill,
    SkillLibrary,
    _Resistance,
)

REQUIREMENTS = (":strips", ":typing")


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line, self.column = line, column
        super().__init__(f"line {line}, column {column}: {message}" if line else message)


class TranslationError(ValueError):
    pass


class PreconditionUnsatisfied(RuntimeError):
    def __init__(self, action: str, failing: Sequence["Literal"]):
        self.action = action
        self.failing = tuple(failing)
        super().__init__(f"{action}: unsatisfied {' '.join(str(l) for l in self.failing)}")


class NoPlan(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple = ()

    def __str__(self) -> str:
        return f"({' '.join((self.predicate,) + tuple(self.args))})"

    def substitute(self, bindings: Mapping[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(bindings.get(a, a) for a in self.args))

    def variables(self) -> list[str]:
        return [a for a in self.args if a.startswith("?")]


def atom(text: str) -> Atom:
    """``atom("(at a b)")`` or ``atom("at a b")`` -> Atom."""
    parts = text.strip().strip("()").split()
    return Atom(parts[0].lower(), tuple(p.lower() for p in parts[1:]))


@dataclass(frozen=True)
class Literal:
    atom: Atom
    negated: bool = False

    def __str__(self) -> str:
        return f"(not {self.atom})" if self.negated else str(self.atom)


@dataclass(frozen=True)
class Predicate:
    name: str
    parameters: tuple = ()  # ((var, type), ...)

    def __str__(self) -> str:
        return f"({' '.join([self.name] + [f'{v} - {t}' for v, t in self.parameters])})"


@dataclass(frozen=True)
class PddlAction:
    name: str
    parameters: tuple = ()  # ((var, type), ...)
    precondition: tuple = ()  # Literals
    effect: tuple = ()  # Literals; negated == delete

    def __post_init__(self) -> None:
        declared = {v for v, _ in self.parameters}
        for lit in self.precondition + self.effect:
            missing = [v for v in lit.atom.variables() if v not in declared]
            if missing:
                raise ValueError(f"action {self.name}: variables {missing} not in parameters")
        adds = {l.atom for l in self.effect if not l.negated}
        dels = {l.atom for l in self.effect if l.negated}
        if adds & dels:
            raise ValueError(f"action {self.name}: {sorted(map(str, adds & dels))} both added and deleted")

    @property
    def variables(self) -> tuple:
        return tuple(v for v, _ in self.parameters)

    @property
    def add_list(self) -> tuple:
        return tuple(l.atom for l in self.effect if not l.negated)

    @property
    def delete_list(self) -> tuple:
        return tuple(l.atom for l in self.effect if l.negated)


@dataclass(frozen=True)
class PddlDomain:
    name: str
    types: tuple = ()
    predicates: tuple = ()
    actions: tuple = ()
    type_parents: tuple = ()  # ((type, parent), ...)
    requirements: tuple = REQUIREMENTS

    def action(self, name: str) -> PddlAction:
        for act in self.actions:
            if act.name == name:
                return act
        raise KeyError(f"domain {self.name} has no action {name!r}")

    def predicate(self, name: str) -> Optional[Predicate]:
        for pred in self.predicates:
            if pred.name == name:
                return pred
        return None

    def is_subtype(self, sub: str, sup: str) -> bool:
        parents = dict(self.type_parents)
        seen = set()
        while sub not in seen:
            if sub == sup:
                return True
            seen.add(sub)
            if sub not in parents:
                return False
            sub = parents[sub]
        return False


@dataclass(frozen=True, order=True)
class GroundAction:
    name: str
    args: tuple = ()

    def __str__(self) -> str:
        return f"({' '.join((self.name,) + tuple(self.args))})"


def ground(text: str) -> GroundAction:
    a = atom(text)
    return GroundAction(a.predicate, a.args)


WorldState = frozenset


def make_state(atoms: Iterable[Union[Atom, str]]) -> frozenset:
    return frozenset(a if isinstance(a, Atom) else atom(a) for a in atoms)


@dataclass(frozen=True)
class PddlProblem:
    name: str
    domain: str
    objects: tuple = ()  # ((name, type), ...)
    init: frozenset = frozenset()
    goal: tuple = ()  # Atoms


# ---------------------------------------------------------------------------
# Tokenizer / s-expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


def _tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN.finditer(text):
        chunk = m.group()
        if not chunk.isspace() and not chunk.startswith(";"):
            tokens.append(Token(chunk.lower(), line, m.start() - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + chunk.rfind("\n") + 1
    return tokens


@dataclass
class _List:
    items: list
    line: int
    column: int


def _read(tokens: list[Token]):
    if not tokens:
        raise ParseError("empty input, expected '('", 1, 1)
    pos = 0

    def read_one():
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1]
            raise ParseError("unexpected end of input, expected ')'", last.line, last.column)
        tok = tokens[pos]
        pos += 1
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.column)
        if tok.text != "(":
            return tok
        node = _List([], tok.line, tok.column)
        while True:
            if pos >= len(tokens):
                raise ParseError("unexpected end of input, expected ')'", tok.line, tok.column)
            if tokens[pos].text == ")":
                pos += 1
                return node
            node.items.append(read_one())

    tree = read_one()
    if pos != len(tokens):
        extra = tokens[pos]
        raise ParseError(f"trailing input {extra.text!r} after top-level form", extra.line, extra.column)
    return tree


def _where(node) -> tuple[int, int]:
    return node.line, node.column


def _expect_list(node, what: str) -> _List:
    if not isinstance(node, _List):
        raise ParseError(f"expected {what}, got {node.text!r}", *_where(node))
    return node


def _expect_symbol(node, what: str) -> str:
    if not isinstance(node, Token) or node.text in ("(", ")"):
        raise ParseError(f"expected {what}", *_where(node))
    return node.text


def _typed_list(items: list, what: str) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        name = _expect_symbol(items[i], what)
        if name == "-":
            if i + 1 >= len(items):
                raise ParseError(f"expected a type after '-' in {what}", *_where(items[i]))
            typ = _expect_symbol(items[i + 1], "type name")
            if not pending:
                raise ParseError(f"'-' without names in {what}", *_where(items[i]))
            out.extend((p, typ) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(name)
        i += 1
    out.extend((p, "object") for p in pending)
    return out


def _atom_node(node) -> tuple[Atom, _List]:
    lst = _expect_list(node, "an atom")
    if not lst.items:
        raise ParseError("empty atom", *_where(lst))
    parts = [_expect_symbol(x, "predicate or argument") for x in lst.items]
    return Atom(parts[0], tuple(parts[1:])), lst


def _conjunction(node, what: str) -> list[tuple[Literal, _List]]:
    lst = _expect_list(node, what)
    if not lst.items:
        return []
    head = lst.items[0]
    if isinstance(head, Token) and head.text == "and":
        out = []
        for item in lst.items[1:]:
            out.extend(_conjunction(item, what))
        return out
    if isinstance(head, Token) and head.text == "not":
        if len(lst.items) != 2:
            raise ParseError("'not' takes exactly one atom", *_where(lst))
        a, where = _atom_node(lst.items[1])
        return [(Literal(a, True), where)]
    if isinstance(head, Token) and head.text in ("or", "imply", "exists", "forall", "when"):
        raise ParseError(f"{head.text!r} is outside :strips :typing", *_where(head))
    a, where = _atom_node(lst)
    return [(Literal(a, False), where)]


# ---------------------------------------------------------------------------
# Domain parsing
# ---------------------------------------------------------------------------


def parse(text: str) -> PddlDomain:
    """Parse a :strips :typing domain.

    Variables used in a precondition or effect but missing from
    ``:parameters`` are appended to the parameter list, typed from the
    predicate declaration. Everything else that falls outside the subset, or
    refers to undeclared predicates, raises :class:`ParseError`.
    """
    tree = _expect_list(_read(_tokenize(text)), "(define ...)")
    items = tree.items
    if not items or _expect_symbol(items[0], "'define'") != "define":
        raise ParseError("expected 'define'", *_where(tree))
    if len(items) < 2:
        raise ParseError("expected (domain <name>)", *_where(tree))
    header = _expect_list(items[1], "(domain <name>)")
    if len(header.items) != 2 or _expect_symbol(header.items[0], "'domain'") != "domain":
        raise ParseError("expected (domain <name>)", *_where(header))
    name = _expect_symbol(header.items[1], "domain name")

    requirements: Optional[tuple] = None
    types: list[str] = []
    parents: list[tuple[str, str]] = []
    predicates: list[Predicate] = []
    raw_actions: list[_List] = []
    for section in items[2:]:
        sec = _expect_list(section, "a domain section")
        if not sec.items:
            raise ParseError("empty section", *_where(sec))
        key = _expect_symbol(sec.items[0], "section keyword")
        if key == ":requirements":
            requirements = tuple(_expect_symbol(x, "requirement") for x in sec.items[1:])
            unsupported = sorted(set(requirements) - set(REQUIREMENTS))
            if unsupported:
                raise ParseError(f"unsupported requirements {unsupported}; only :strips :typing", *_where(sec))
        elif key == ":types":
            for t, parent in _type_decls(sec.items[1:]):
                types.append(t)
                if parent is not None:
                    parents.append((t, parent))
        elif key == ":predicates":
            for p in sec.items[1:]:
                plst = _expect_list(p, "a predicate declaration")
                if not plst.items:
                    raise ParseError("empty predicate declaration", *_where(plst))
                pname = _expect_symbol(plst.items[0], "predicate name")
                predicates.append(Predicate(pname, tuple(_typed_list(plst.items[1:], pname))))
        elif key == ":action":
            raw_actions.append(sec)
        else:
            raise ParseError(f"unsupported section {key!r}", *_where(sec))

    if requirements is None:
        raise ParseError("missing (:requirements :strips :typing)", *_where(tree))
    if set(requirements) != set(REQUIREMENTS):
        raise ParseError("requirements must be exactly :strips :typing", *_where(tree))

    declared = {p.name: p for p in predicates}
    actions = tuple(_parse_action(sec, declared) for sec in raw_actions)
    return PddlDomain(name, tuple(types), tuple(predicates), actions, tuple(parents))


def _type_decls(items: list) -> list[tuple[str, Optional[str]]]:
    """Type names with their explicit parent (None when undeclared)."""
    out: list[tuple[str, Optional[str]]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        name = _expect_symbol(items[i], "type name")
        if name == "-":
            if i + 1 >= len(items) or not pending:
                raise ParseError("malformed type declaration", *_where(items[i]))
            parent = _expect_symbol(items[i + 1], "parent type")
            out.extend((p, parent) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(name)
        i += 1
    out.extend((p, None) for p in pending)
    return out


def _parse_action(sec: _List, declared: Mapping[str, Predicate]) -> PddlAction:
    if len(sec.items) < 2:
        raise ParseError("expected an action name", *_where(sec))
    name = _expect_symbol(sec.items[1], "action name")
    params: list[tuple[str, str]] = []
    pre: list[tuple[Literal, _List]] = []
    eff: list[tuple[Literal, _List]] = []
    rest = sec.items[2:]
    if len(rest) % 2:
        raise ParseError(f"action {name}: dangling keyword", *_where(rest[-1]))
    for key_node, value in zip(rest[::2], rest[1::2]):
        key = _expect_symbol(key_node, "':parameters', ':precondition' or ':effect'")
        if key == ":parameters":
            params = _typed_list(_expect_list(value, "a parameter list").items, f"{name} parameters")
        elif key == ":precondition":
            pre = _conjunction(value, f"{name} precondition")
        elif key == ":effect":
            eff = _conjunction(value, f"{name} effect")
        else:
            raise ParseError(f"action {name}: unexpected {key!r}", *_where(key_node))

    for lit, where in pre + eff:
        pred = declared.get(lit.atom.predicate)
        if pred is None:
            raise ParseError(
                f"action {name} uses undeclared predicate {lit.atom.predicate!r}", *_where(where)
            )
        if len(pred.parameters) != len(lit.atom.args):
            raise ParseError(
                f"action {name}: {lit.atom.predicate} expects {len(pred.parameters)} arguments",
                *_where(where),
            )

    # lift free variables into the parameter list
    known = {v: t for v, t in params}
    lifted: list[tuple[str, str]] = []
    for lit, where in pre + eff:
        pred = declared[lit.atom.predicate]
        for arg, (_, typ) in zip(lit.atom.args, pred.parameters):
            if not arg.startswith("?"):
                continue
            if arg in known:
                continue
            known[arg] = typ
            lifted.append((arg, typ))
    try:
        return PddlAction(
            name,
            tuple(params + lifted),
            tuple(l for l, _ in pre),
            tuple(l for l, _ in eff),
        )
    except ValueError as exc:
        raise ParseError(str(exc), *_where(sec)) from None


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _typed(pairs: Iterable[tuple[str, str]]) -> str:
    return " ".join(f"{v} - {t}" for v, t in pairs)


def _conj(lits: Sequence[Literal]) -> str:
    return f"(and{''.join(' ' + str(l) for l in lits)})"


def emit(domain: PddlDomain) -> str:
    """Canonical text: lowercase, two-space indent, one-line parameter lists."""
    parents = dict(domain.type_parents)
    lines = [f"(define (domain {domain.name})"]
    lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        rendered = [f"{t} - {parents[t]}" if t in parents else t for t in domain.types]
        lines.append(f"  (:types {' '.join(rendered)})")
    lines.append("")
    lines.append("  (:predicates")
    for p in domain.predicates:
        lines.append(f"    {p}")
    lines.append("  )")
    for act in domain.actions:
        lines.append("")
        lines.append(f"  (:action {act.name}")
        lines.append(f"    :parameters ({_typed(act.parameters)})")
        lines.append(f"    :precondition {_conj(act.precondition)}")
        lines.append(f"    :effect {_conj(act.effect)}")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"


def emit_problem(problem: PddlProblem) -> str:
    lines = [f"(define (problem {problem.name})", f"  (:domain {problem.domain})"]
    lines.append(f"  (:objects {_typed(problem.objects)})")
    lines.append("  (:init")
    for a in sorted(problem.init):
        lines.append(f"    {a}")
    lines.append("  )")
    lines.append(f"  (:goal (and{''.join(' ' + str(a) for a in problem.goal)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def parse_problem(text: str) -> PddlProblem:
    tree = _expect_list(_read(_tokenize(text)), "(define ...)")
    items = tree.items
    if not items or _expect_symbol(items[0], "'define'") != "define" or len(items) < 2:
        raise ParseError("expected (define (problem <name>) ...)", *_where(tree))
    header = _expect_list(items[1], "(problem <name>)")
    if len(header.items) != 2 or _expect_symbol(header.items[0], "'problem'") != "problem":
        raise ParseError("expected (problem <name>)", *_where(header))
    name = _expect_symbol(header.items[1], "problem name")
    domain = ""
    objects: list[tuple[str, str]] = []
    init: set[Atom] = set()
    goal: list[Atom] = []
    for section in items[2:]:
        sec = _expect_list(section, "a problem section")
        if not sec.items:
            raise ParseError("empty section", *_where(sec))
        key = _expect_symbol(sec.items[0], "section keyword")
        if key == ":domain":
            domain = _expect_symbol(sec.items[1], "domain name")
        elif key == ":objects":
            objects = _typed_list(sec.items[1:], ":objects")
        elif key == ":init":
            for node in sec.items[1:]:
                a, _ = _atom_node(node)
                init.add(a)
        elif key == ":goal":
            for lit, where in _conjunction(sec.items[1], ":goal"):
                if lit.negated:
                    raise ParseError("negative goals are outside :strips", *_where(where))
                goal.append(lit.atom)
        else:
            raise ParseError(f"unsupported section {key!r}", *_where(sec))
    return PddlProblem(name, domain, tuple(objects), frozenset(init), tuple(goal))


# ---------------------------------------------------------------------------
# Semantics
# ---------------------------------------------------------------------------


def bind(action: PddlAction, args: Sequence[str]) -> dict[str, str]:
    if len(args) != len(action.parameters):
        raise ValueError(
            f"{action.name} takes {len(action.parameters)} arguments "
            f"({' '.join(action.variables)}), got {len(args)}"
        )
    return dict(zip(action.variables, args))


def unsatisfied(state: frozenset, action: PddlAction, bindings: Mapping[str, str]) -> list[Literal]:
    failing = []
    for lit in action.precondition:
        a = lit.atom.substitute(bindings)
        if (a in state) == lit.negated:
            failing.append(Literal(a, lit.negated))
    return failing


def apply_action(state: frozenset, action: PddlAction, bindings: Mapping[str, str]) -> frozenset:
    """STRIPS successor: (state - deletes) | adds. ``state`` is not modified."""
    missing = [v for v in action.variables if v not in bindings]
    if missing:
        raise ValueError(f"{action.name}: no binding for {missing}")
    failing = unsatisfied(state, action, bindings)
    if failing:
        raise PreconditionUnsatisfied(action.name, failing)
    dels = {a.substitute(bindings) for a in action.delete_list}
    adds = {a.substitute(bindings) for a in action.add_list}
    return frozenset((set(state) - dels) | adds)


@dataclass(frozen=True)
class StepCheck:
    index: int
    action: GroundAction
    ok: bool
    failures: tuple = ()
    message: str = ""


@dataclass(frozen=True)
class ValidationReport:
    steps: tuple
    goal_satisfied: bool
    final_state: frozenset
    missing_goals: tuple = ()

    @property
    def all_ok(self) -> bool:
        return all(s.ok for s in self.steps)

    @property
    def ok(self) -> bool:
        return self.all_ok and self.goal_satisfied

    def first_failure(self) -> Optional[StepCheck]:
        return next((s for s in self.steps if not s.ok), None)

    def to_dict(self) -> dict:
        return {
            "steps": [
                {"index": s.index, "action": str(s.action), "ok": s.ok,
                 "failures": [str(f) for f in s.failures], "message": s.message}
                for s in self.steps
            ],
            "goal_satisfied": self.goal_satisfied,
            "missing_goals": [str(a) for a in self.missing_goals],
        }


def validate_plan(
    domain: PddlDomain,
    init: Iterable[Atom],
    plan: Sequence[GroundAction],
    goal: Iterable[Atom] = (),
) -> ValidationReport:
    """Replay ``plan`` from ``init``. Steps after the first failure are reported unchecked."""
    state = frozenset(init)
    checks: list[StepCheck] = []
    failed = False
    for i, step in enumerate(plan):
        if failed:
            checks.append(StepCheck(i, step, False, (), "not reached"))
            continue
        try:
            action = domain.action(step.name)
            state = apply_action(state, action, bind(action, step.args))
            checks.append(StepCheck(i, step, True))
        except PreconditionUnsatisfied as exc:
            failed = True
            checks.append(StepCheck(i, step, False, exc.failing, str(exc)))
        except (KeyError, ValueError) as exc:
            failed = True
            checks.append(StepCheck(i, step, False, (), str(exc).strip('"')))
    goal = tuple(goal)
    missing = tuple(a for a in goal if a not in state)
    return ValidationReport(tuple(checks), not failed and not missing, state, missing)


@dataclass(frozen=True)
class _Grounded:
    action: GroundAction
    pos: frozenset
    neg: frozenset
    adds: frozenset
    dels: frozenset


def ground_actions(domain: PddlDomain, objects: Mapping[str, str]) -> list[GroundAction]:
    """Every type-correct grounding, in lexicographic (name, args) order."""
    out = []
    for act in domain.actions:
        choices = []
        for _, typ in act.parameters:
            choices.append(sorted(o for o, t in objects.items() if domain.is_subtype(t, typ)))
        for args in product(*choices):
            out.append(GroundAction(act.name, tuple(args)))
    return sorted(out)


def forward_search(
    domain: PddlDomain,
    init: Iterable[Atom],
    goal: Iterable[Atom],
    objects: Mapping[str, str],
    max_depth: int = 20,
) -> list[GroundAction]:
    """Breadth-first search over ground actions; returns a shortest plan.

    Successors are expanded in lexicographic (action, arguments) order, so
    among the shortest plans the lexicographically smallest one is returned.
    """
    init = frozenset(init)
    goal = frozenset(goal)
    if goal <= init:
        return []
    grounded = []
    for g in ground_actions(domain, objects):
        act = domain.action(g.name)
        b = bind(act, g.args)
        grounded.append(_Grounded(
            g,
            frozenset(l.atom.substitute(b) for l in act.precondition if not l.negated),
            frozenset(l.atom.substitute(b) for l in act.precondition if l.negated),
            frozenset(a.substitute(b) for a in act.add_list),
            frozenset(a.substitute(b) for a in act.delete_list),
        ))
    achievable = set(init)
    for g in grounded:
        achievable |= g.adds
    unreachable = goal - achievable
    if unreachable:
        raise NoPlan(f"goal atoms never produced by any action: {sorted(map(str, unreachable))}")

    parents: dict[frozenset, tuple] = {init: (None, None)}
    frontier = deque([(init, 0)])
    while frontier:
        state, depth = frontier.popleft()
        if depth >= max_depth:
            continue
        for g in grounded:
            if not (g.pos <= state) or (g.neg & state):
                continue
            nxt = (state - g.dels) | g.adds
            if nxt in parents:
                continue
            parents[nxt] = (state, g.action)
            if goal <= nxt:
                plan = []
                cur = nxt
                while parents[cur][0] is not None:
                    prev, act = parents[cur]
                    plan.append(act)
                    cur = prev
                return plan[::-1]
            frontier.append((nxt, depth + 1))
    raise NoPlan(f"no plan within depth {max_depth}")


# ---------------------------------------------------------------------------
# Skill library -> domain
# ---------------------------------------------------------------------------

_IRREGULAR = {"put": "put", "set": "set", "cut": "cut", "hold": "held", "grip": "gripped"}


def past_participle(verb: str) -> str:
    if verb in _IRREGULAR:
        return _IRREGULAR[verb]
    if verb.endswith("e"):
        return verb + "d"
    if re.search(r"[^aeiou]y$", verb):
        return verb[:-1] + "ied"
    return verb + "ed"


@dataclass(frozen=True)
class Slot:
    var: str
    type: str
    source: str  # "target", "env" or a parameter name


def action_slots(skill: Skill) -> list[Slot]:
    """PDDL parameters of a skill: target, symbolic parameters, contextual object."""
    slots = []
    used: dict[str, int] = {}

    def var_for(letter: str) -> str:
        used[letter] = used.get(letter, 0) + 1
        return f"?{letter}" if used[letter] == 1 else f"?{letter}{used[letter]}"

    if skill.target_class is not None:
        slots.append(Slot(var_for("o"), "object", "target"))
    for name, param in skill.symbolic_params():
        slots.append(Slot(var_for(param.kind[0]), param.kind, name))
    if skill.env_slot is not None:
        slots.append(Slot(var_for("e"), "env_object", "env"))
    return slots


def _slot_var(slots: list[Slot], source: str, skill: Skill, what: str) -> str:
    for s in slots:
        if s.source == source:
            return s.var
    raise TranslationError(f"skill {skill.name}: {what} refers to missing slot {source!r}")


def _pose_literal(cond: PoseReached, slots: list[Slot], skill: Skill) -> Atom:
    if cond.pose == "env":
        return Atom("at", (_slot_var(slots, "target", skill, "PoseReached"),
                           _slot_var(slots, "env", skill, "PoseReached")))
    return Atom("reached", (_slot_var(slots, cond.pose, skill, "PoseReached"),))


def _holding_atom(cond: GripperHolding, slots: list[Slot], skill: Skill) -> Atom:
    source = "target" if cond.obj == "target" else cond.obj
    return Atom("holding", (_slot_var(slots, source, skill, "GripperHolding"),))


def _pre_literals(cond, slots: list[Slot], skill: Skill) -> list[Literal]:
    if cond is None:
        return []
    if isinstance(cond, And):
        return [l for c in cond.items for l in _pre_literals(c, slots, skill)]
    if isinstance(cond, GripperHolding):
        return [Literal(_holding_atom(cond, slots, skill))]
    if isinstance(cond, Not) and isinstance(cond.inner, GripperHolding):
        return [Literal(Atom("hand_open"))]
    if isinstance(cond, PoseReached):
        return [Literal(_pose_literal(cond, slots, skill))]
    if isinstance(cond, Not):
        inner = _pre_literals(cond.inner, slots, skill)
        if len(inner) != 1 or inner[0].negated:
            raise TranslationError(f"skill {skill.name}: cannot negate {cond.inner!r}")
        return [Literal(inner[0].atom, True)]
    raise TranslationError(f"skill {skill.name}: no symbolic precondition for {type(cond).__name__}")


def _effect_literals(cond, slots: list[Slot], skill: Skill) -> list[Literal]:
    if cond is None:
        return []
    if isinstance(cond, And):
        return [l for c in cond.items for l in _effect_literals(c, slots, skill)]
    if isinstance(cond, GripperHolding):
        return [Literal(_holding_atom(cond, slots, skill)), Literal(Atom("hand_open"), True)]
    if isinstance(cond, Not) and isinstance(cond.inner, GripperHolding):
        return [Literal(Atom("hand_open")), Literal(_holding_atom(cond.inner, slots, skill), True)]
    if isinstance(cond, PoseReached):
        return [Literal(_pose_literal(cond, slots, skill))]
    if isinstance(cond, _Resistance):
        return [Literal(Atom(past_participle(skill.name), tuple(s.var for s in slots)))]
    raise TranslationError(f"skill {skill.name}: no symbolic effect for {type(cond).__name__}")


def translate_library(lib: SkillLibrary) -> PddlDomain:
    """One action per visible skill; deterministic for a given library."""
    skills = lib.all_skills()
    types: list[str] = []
    predicates: dict[str, Predicate] = {}
    actions = []
    for skill in skills:
        slots = action_slots(skill)
        for s in slots:
            if s.type not in types:
                types.append(s.type)
        pre = _pre_literals(skill.pre, slots, skill)
        eff = _effect_literals(skill.success, slots, skill)
        var_types = {s.var: s.type for s in slots}
        for lit in pre + eff:
            a = lit.atom
            sig = tuple((f"?{chr(ord('a') + i)}" if v not in var_types else v, var_types.get(v, "object"))
                        for i, v in enumerate(a.args))
            known = predicates.get(a.predicate)
            if known is None:
                predicates[a.predicate] = Predicate(a.predicate, sig)
            elif tuple(t for _, t in known.parameters) != tuple(t for _, t in sig):
                raise TranslationError(f"predicate {a.predicate} used with inconsistent types")
        try:
            actions.append(PddlAction(skill.name, tuple((s.var, s.type) for s in slots), tuple(pre), tuple(eff)))
        except ValueError as exc:
            raise TranslationError(str(exc)) from None
    return PddlDomain(
        f"{lib.object_class}_skills",
        tuple(types),
        tuple(predicates.values()),
        tuple(actions),
    )
