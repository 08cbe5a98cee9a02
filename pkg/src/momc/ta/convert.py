"""Conversion of a classified timed automaton into a parameterised MDP skeleton,
parameter assignment, and PRISM emission."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union


from ..errors import (
    EmptyCounts,
    NonNormalizedDistribution,
    UnassignedParameter,
    UnknownParameter,
    UnsupportedGuardAtom,
)
from .automaton import TAU, StateClassification, StateKind, TimedAutomaton, classify_states
from .guards import ClockCmp, Guard

SUM_TOL = 1e-9

Prob = Union[float, str]  # a number or a parameter name


def fresh_state(state: str, action: str) -> str:
    return f"~{state}__{action}"


def param_name(state: str, action: str) -> str:
    return f"p__{state}__{action}"


@dataclass(frozen=True)
class SkeletonChoice:
    label: str
    branches: tuple[tuple[int, Prob], ...]


@dataclass
class ParamTable:
    """Parameter values (``None`` when unassigned) grouped by branching state."""

    groups: dict[str, list[str]] = field(default_factory=dict)
    values: dict[str, Optional[float]] = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [p for ps in self.groups.values() for p in ps]

    def group_of(self, name: str) -> str:
        for s, ps in self.groups.items():
            if name in ps:
                return s
        raise UnknownParameter(f"no parameter named {name!r}")

    def unassigned(self) -> list[str]:
        return [p for p in self.names if self.values.get(p) is None]

    def check_sums(self) -> None:
        for s, ps in self.groups.items():
            vals = [self.values.get(p) for p in ps]
            if any(v is None for v in vals):
                continue
            if any(not 0.0 <= v <= 1.0 for v in vals):
                raise NonNormalizedDistribution(f"parameters of {s!r} must lie in [0,1]: {vals}")
            total = math.fsum(vals)
            if abs(total - 1.0) > SUM_TOL:
                raise NonNormalizedDistribution(f"parameters of branching state {s!r} sum to {total!r}")

    def to_dict(self) -> dict:
        return {p: self.values.get(p) for p in self.names}


@dataclass
class MdpSkeleton:
    """MDP whose branching rows may reference parameters by name."""

    states: list[str]
    initial: int
    choices: list[list[SkeletonChoice]]
    invariants: dict[str, str] = field(default_factory=dict)
    fresh: list[str] = field(default_factory=list)

    @property
    def num_states(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        return self.states.index(state)


def convert_to_mdp(
    ta: TimedAutomaton, classification: Optional[StateClassification] = None
) -> tuple[MdpSkeleton, ParamTable]:
    """Replace branching guards by probability parameters.

    A branching state ``s`` gets one ``tau`` choice whose branch for action
    ``a`` leads with probability ``p__s__a`` to a fresh state ``~s__a``, from
    which ``a`` moves to the original target.  A branch whose action is itself
    ``tau`` goes straight to its target.  Other states keep their edges as
    probability-one choices.
    """
    classification = classification or classify_states(ta)
    names = list(ta.states)
    index = {s: i for i, s in enumerate(names)}
    rows: list[list[SkeletonChoice]] = [[] for _ in names]
    table = ParamTable()
    fresh = []
    for s in ta.states:
        out = ta.outgoing(s)
        if classification[s] is not StateKind.BRANCHING:
            rows[index[s]] = [SkeletonChoice(e.action, ((index[e.target], 1.0),)) for e in out]
            continue
        branches = []
        group = []
        for k, e in enumerate(out):
            key = e.action if e.action != TAU else f"{TAU}{k}" if sum(x.action == TAU for x in out) > 1 else TAU
            p = param_name(s, key)
            group.append(p)
            if e.action == TAU:
                branches.append((index[e.target], p))
                continue
            f = fresh_state(s, e.action)
            index[f] = len(names)
            names.append(f)
            fresh.append(f)
            rows.append([SkeletonChoice(e.action, ((index[e.target], 1.0),))])
            branches.append((index[f], p))
        rows[index[s]] = [SkeletonChoice(TAU, tuple(branches))]
        table.groups[s] = group
        for p in group:
            table.values[p] = None
    invariants = {s: str(g) for s, g in ta.invariants.items()}
    return MdpSkeleton(names, index[ta.initial], rows, invariants, fresh), table


# -- parameter estimation -----------------------------------------------------------

@dataclass(frozen=True)
class Exponential:
    scale: float

    def cdf(self, t: float) -> float:
        if self.scale <= 0:
            raise ValueError("exponential scale must be positive")
        return 0.0 if t <= 0 else -math.expm1(-t / self.scale)

    def cdf_closed(self, t: float) -> float:
        return self.cdf(t)


@dataclass(frozen=True)
class Empirical:
    samples: tuple[float, ...]

    def __post_init__(self):
        if not self.samples:
            raise ValueError("empirical distribution needs at least one sample")

    def cdf(self, t: float) -> float:  # Pr(delay < t)
        return sum(x < t for x in self.samples) / len(self.samples)

    def cdf_closed(self, t: float) -> float:  # Pr(delay <= t)
        return sum(x <= t for x in self.samples) / len(self.samples)


DelaySpec = Union[Exponential, Empirical]


def threshold_probability(op: str, t: float, dist: DelaySpec) -> float:
    """Pr(delay op t) for op in <, <=, >=, >."""
    if op not in ("<", "<=", ">=", ">"):
        raise UnsupportedGuardAtom(f"no probability for comparison {op!r}; use a single threshold")
    if math.isinf(t) and t > 0:
        below = below_eq = 1.0
    else:
        below, below_eq = dist.cdf(t), dist.cdf_closed(t)
    return {"<": below, "<=": below_eq, ">=": 1.0 - below, ">": 1.0 - below_eq}[op]


def guard_probability(guard: Guard, dist: DelaySpec) -> float:
    """Probability that a clock-threshold guard holds when the clock reads the random delay."""
    if not isinstance(guard, ClockCmp):
        raise UnsupportedGuardAtom(f"probability of {guard} needs a single clock threshold (z<t, z>=t, ...)")
    return threshold_probability(guard.op, float(guard.bound), dist)


def estimate_params(
    counts: Mapping[tuple[str, str], float],
    table: ParamTable,
    alpha: float = 0.0,
) -> dict[str, float]:
    """Laplace-smoothed frequency estimates ``(count + alpha) / (total + alpha k)``.

    ``counts`` maps (state, action) to an observed count; groups without any
    counted entry are left out of the result.
    """
    if alpha < 0:
        raise ValueError("smoothing must be nonnegative")
    by_param = {}
    for (state, action), c in counts.items():
        if c < 0:
            raise ValueError(f"negative count for ({state}, {action})")
        p = param_name(state, action)
        if p not in table.values:
            raise UnknownParameter(f"count for ({state!r}, {action!r}) matches no branching parameter")
        by_param[p] = float(c)
    result = {}
    for s, ps in table.groups.items():
        if not any(p in by_param for p in ps):
            continue
        total = sum(by_param.get(p, 0.0) for p in ps)
        k = len(ps)
        if total + alpha * k == 0:
            raise EmptyCounts(f"branching state {s!r} has no observations and no smoothing")
        for p in ps:
            result[p] = (by_param.get(p, 0.0) + alpha) / (total + alpha * k)
    return result


def assign_params(
    table: ParamTable,
    explicit: Mapping[str, float] | None = None,
    distributions: Mapping[str, float] | None = None,
    estimated: Mapping[str, float] | None = None,
) -> ParamTable:
    """Fill parameters preferring explicit values, then distribution-derived, then counts."""
    values = dict(table.values)
    for source in (estimated or {}, distributions or {}, explicit or {}):
        for name, v in source.items():
            if name not in values:
                raise UnknownParameter(f"no parameter named {name!r}")
            values[name] = float(v)
    out = ParamTable({s: list(ps) for s, ps in table.groups.items()}, values)
    out.check_sums()
    return out


# -- PRISM emission ---------------------------------------------------------------------

def _prob_text(p: float) -> str:
    return repr(float(p))


def emit_prism(
    skeleton: MdpSkeleton,
    params: ParamTable,
    module_name: str = "M",
    rewards: Mapping[str, Mapping[str, float]] | None = None,
) -> str:
    """Single-module encoding with one variable ``s`` and one command per choice."""
    missing = params.unassigned()
    if missing:
        raise UnassignedParameter(missing)
    params.check_sums()
    n = skeleton.num_states
    lines = ["// states:"]
    for i, name in enumerate(skeleton.states):
        inv = skeleton.invariants.get(name)
        lines.append(f"//   {i} = {name}" + (f"  (invariant {inv})" if inv else ""))
    lines += ["mdp", "", f"module {module_name}", f"  s : [0..{n - 1}] init {skeleton.initial};"]
    for i, choices in enumerate(skeleton.choices):
        for ch in choices:
            parts = []
            for target, p in ch.branches:
                value = params.values[p] if isinstance(p, str) else float(p)
                if value == 0.0:
                    continue
                parts.append((value, target))
            if len(parts) == 1 and parts[0][0] == 1.0:
                update = f"(s'={parts[0][1]})"
            else:
                update = " + ".join(f"{_prob_text(v)}:(s'={t})" for v, t in parts)
            lines.append(f"  [{ch.label}] s={i} -> {update};")
    lines.append("endmodule")
    for rname, per_action in (rewards or {}).items():
        lines += ["", f'rewards "{rname}"']
        for action, value in per_action.items():
            lines.append(f"  [{action}] true : {_prob_text(value)};")
        lines.append("endrewards")
    return "\n".join(lines) + "\n"
