"""Timed automata with Boolean variables: validation, product composition and
state classification."""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import AssumptionViolated, StateNameClash, TaFormatError
from .guards import TRUE, Guard, atoms, conj, equivalent, exclusive, BoolVar, ClockCmp

TAU = "tau"


@dataclass(frozen=True)
class Edge:
    source: str
    guard: Guard
    action: str
    resets: frozenset[str]
    target: str


@dataclass
class TimedAutomaton:
    name: str
    states: list[str]
    initial: str
    edges: list[Edge]
    clocks: tuple[str, ...] = ()
    booleans: tuple[str, ...] = ()
    invariants: dict[str, Guard] = field(default_factory=dict)
    # declared action set; edges may use only some of it (defaults to the edge labels)
    alphabet: frozenset[str] = frozenset()

    def __post_init__(self):
        self.clocks = tuple(self.clocks)
        self.booleans = tuple(self.booleans)
        self.alphabet = frozenset(self.alphabet) | {e.action for e in self.edges}
        self.validate()

    @property
    def actions(self) -> set[str]:
        return set(self.alphabet)

    def outgoing(self, state: str) -> list[Edge]:
        return [e for e in self.edges if e.source == state]

    def validate(self) -> None:
        known = set(self.states)
        if len(known) != len(self.states):
            raise TaFormatError(f"automaton {self.name!r} lists a state twice")
        if self.initial not in known:
            raise TaFormatError(f"automaton {self.name!r}: initial state {self.initial!r} is not declared")
        seen = set()
        for e in self.edges:
            for s in (e.source, e.target):
                if s not in known:
                    raise TaFormatError(f"automaton {self.name!r}: edge uses undeclared state {s!r}")
            bad = e.resets - set(self.clocks)
            if bad:
                raise TaFormatError(f"automaton {self.name!r}: resets undeclared clocks {sorted(bad)}")
            if e.action != TAU:
                key = (e.source, e.action)
                if key in seen:
                    raise TaFormatError(
                        f"automaton {self.name!r}: state {e.source!r} has two edges for action {e.action!r}"
                    )
                seen.add(key)
            for a in atoms(e.guard):
                if isinstance(a, BoolVar) and a.name not in self.booleans:
                    raise TaFormatError(f"guard uses undeclared boolean {a.name!r}")
                if isinstance(a, ClockCmp) and a.clock not in self.clocks:
                    raise TaFormatError(f"guard uses undeclared clock {a.clock!r}")
        for s in self.invariants:
            if s not in known:
                raise TaFormatError(f"automaton {self.name!r}: invariant for undeclared state {s!r}")


def _merge(a: Sequence[str], b: Sequence[str]) -> tuple[str, ...]:
    return tuple(a) + tuple(x for x in b if x not in a)


def compose(a1: TimedAutomaton, a2: TimedAutomaton) -> TimedAutomaton:
    """Synchronous product on common actions (``tau`` never synchronises).

    Common actions come from the declared alphabets, so an action that one
    side never reaches still blocks the other side.

    Product states are named ``"s1.s2"``; only those reachable from the pair
    of initial states are kept, in breadth-first order.
    """
    clash = set(a1.states) & set(a2.states)
    if clash:
        raise StateNameClash(f"automata {a1.name!r} and {a2.name!r} share state names {sorted(clash)}")
    common = (a1.actions & a2.actions) - {TAU}
    out1 = {s: a1.outgoing(s) for s in a1.states}
    out2 = {s: a2.outgoing(s) for s in a2.states}

    def name(p, q):
        return f"{p}.{q}"

    start = (a1.initial, a2.initial)
    order = [start]
    seen = {start}
    queue = deque([start])
    edges = []
    while queue:
        p, q = queue.popleft()
        succ = []
        for e1 in out1[p]:
            if e1.action in common:
                for e2 in out2[q]:
                    if e2.action == e1.action:
                        succ.append((conj(e1.guard, e2.guard), e1.action, e1.resets | e2.resets, (e1.target, e2.target)))
            else:
                succ.append((e1.guard, e1.action, e1.resets, (e1.target, q)))
        for e2 in out2[q]:
            if e2.action not in common:
                succ.append((e2.guard, e2.action, e2.resets, (p, e2.target)))
        for guard, action, resets, tgt in succ:
            edges.append(Edge(name(p, q), guard, action, frozenset(resets), name(*tgt)))
            if tgt not in seen:
                seen.add(tgt)
                order.append(tgt)
                queue.append(tgt)
    invariants = {}
    for p, q in order:
        inv = conj(a1.invariants.get(p, TRUE), a2.invariants.get(q, TRUE))
        if inv != TRUE:
            invariants[name(p, q)] = inv
    return TimedAutomaton(
        f"{a1.name}||{a2.name}",
        [name(p, q) for p, q in order],
        name(*start),
        edges,
        _merge(a1.clocks, a2.clocks),
        _merge(a1.booleans, a2.booleans),
        invariants,
        a1.alphabet | a2.alphabet,
    )


def compose_all(automata: Sequence[TimedAutomaton]) -> TimedAutomaton:
    if not automata:
        raise TaFormatError("no automata to compose")
    result = automata[0]
    for a in automata[1:]:
        result = compose(result, a)
    return result


class StateKind(str, enum.Enum):
    BRANCHING = "Branching"
    CHOICE = "Choice"
    SINGLETON = "Singleton"


@dataclass(frozen=True)
class StateClassification:
    kinds: dict[str, StateKind]

    def __getitem__(self, state: str) -> StateKind:
        return self.kinds[state]

    @property
    def branching(self) -> list[str]:
        return [s for s, k in self.kinds.items() if k is StateKind.BRANCHING]

    @property
    def choice(self) -> list[str]:
        return [s for s, k in self.kinds.items() if k is StateKind.CHOICE]

    def to_dict(self) -> dict:
        return {s: k.value for s, k in self.kinds.items()}


def classify_state(ta: TimedAutomaton, state: str) -> StateKind:
    out = ta.outgoing(state)
    if len(out) <= 1:
        return StateKind.SINGLETON
    pairs = list(itertools.combinations(out, 2))
    if all(exclusive(e.guard, f.guard) for e, f in pairs):
        return StateKind.BRANCHING
    if all(equivalent(e.guard, f.guard) for e, f in pairs):
        return StateKind.CHOICE
    for e, f in pairs:
        if not exclusive(e.guard, f.guard) and not equivalent(e.guard, f.guard):
            raise AssumptionViolated(state, (e.action, f.action))
    e, f = next((e, f) for e, f in pairs if not exclusive(e.guard, f.guard))
    raise AssumptionViolated(
        state, (e.action, f.action),
        "guards mix exclusive and equivalent pairs, so the state is neither branching nor choice",
    )


def classify_states(ta: TimedAutomaton) -> StateClassification:
    """Branching (pairwise exclusive guards), Choice (pairwise equivalent) or Singleton."""
    return StateClassification({s: classify_state(ta, s) for s in ta.states})
