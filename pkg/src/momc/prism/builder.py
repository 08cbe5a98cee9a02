"""Explicit-state construction of an MDP from a resolved PRISM model."""

from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import (
    DeadlockDetected,
    MomcError,
    NonNormalizedDistribution,
    UnknownIdentifier,
    VariableRangeViolation,
)
from ..mdp import RewardVectorFunction, SparseMdp
from .ast import Expr, Ident, Literal, ModelSpec, Unary
from .constants import evaluate, fold

NORM_TOL = 1e-9
MAX_REPORTED_DEADLOCKS = 20

_PY_OPS = {"&": "and", "|": "or", "=": "==", "!=": "!=", "<": "<", "<=": "<=",
           ">": ">", ">=": ">=", "+": "+", "-": "-", "*": "*", "/": "/"}


@dataclass
class BuildOptions:
    fix_deadlocks: bool = False
    reward_names: Optional[Sequence[str]] = None  # None = all, in file order


@dataclass
class BuildReport:
    num_states: int
    num_choices: int
    num_transitions: int
    deadlock_states: list[int]
    build_time_ms: float
    variable_names: list[str] = field(default_factory=list, repr=False)
    valuations: list[tuple[int, ...]] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_choices": self.num_choices,
            "num_transitions": self.num_transitions,
            "deadlock_states": self.deadlock_states,
            "build_time_ms": round(self.build_time_ms, 3),
        }

    def describe_state(self, index: int) -> str:
        vals = self.valuations[index]
        return "(" + ",".join(f"{n}={x}" for n, x in zip(self.variable_names, vals)) + ")"


def _py(expr: Expr, slots: dict[str, int]) -> str:
    if isinstance(expr, Literal):
        return repr(expr.value)
    if isinstance(expr, Ident):
        if expr.name not in slots:
            raise UnknownIdentifier(f"unresolved identifier {expr.name!r} (constants must be resolved first)")
        return f"v[{slots[expr.name]}]"
    if isinstance(expr, Unary):
        inner = _py(expr.operand, slots)
        return f"(not {inner})" if expr.op == "!" else f"(-{inner})"
    return f"({_py(expr.left, slots)} {_PY_OPS[expr.op]} {_py(expr.right, slots)})"


def _compile(source: str, name: str, helpers: Optional[dict] = None):
    namespace = dict(helpers or {})
    exec(compile(source, f"<momc:{name}>", "exec"), namespace)
    return namespace[name]


class _Compiled:
    """Guards, branches and rewards of a resolved model as Python callables."""

    def __init__(self, spec: ModelSpec, reward_names: Sequence[str]):
        self.var_names = [v.name for _, v in spec.variables]
        slots = {n: i for i, n in enumerate(self.var_names)}
        self.slots = slots
        self.bounds = []
        init = []
        for _, v in spec.variables:
            lo, hi = int(evaluate(v.low, {})), int(evaluate(v.high, {}))
            if lo > hi:
                raise MomcError(f"variable {v.name!r} has empty range [{lo}..{hi}]")
            x = lo if v.init is None else int(evaluate(v.init, {}))
            if not lo <= x <= hi:
                raise VariableRangeViolation(f"initial value {x} of {v.name!r} outside [{lo}..{hi}]")
            self.bounds.append((lo, hi))
            init.append(x)
        self.initial = tuple(init)

        def violation(i, x, v):
            lo, hi = self.bounds[i]
            state = ",".join(f"{n}={val}" for n, val in zip(self.var_names, v))
            raise VariableRangeViolation(
                f"update sets {self.var_names[i]}={x} outside [{lo}..{hi}] from state ({state})"
            )

        self.modules = spec.modules
        self.enabled = []
        self.branches = []  # [module][command] -> list of (prob or callable, assign fn)
        for mi, m in enumerate(spec.modules):
            body = ["def _en(v):", "    r = []"]
            for ci, cmd in enumerate(m.commands):
                body.append(f"    if {_py(fold(cmd.guard), slots)}: r.append({ci})")
            body.append("    return r")
            self.enabled.append(_compile("\n".join(body), "_en"))
            per_cmd = []
            for ci, cmd in enumerate(m.commands):
                branches = []
                for ui, u in enumerate(cmd.updates):
                    prob_expr = fold(u.probability)
                    if isinstance(prob_expr, Literal):
                        prob = float(prob_expr.value)
                    else:
                        prob = _compile(f"def _p(v):\n    return {_py(prob_expr, slots)}", "_p")
                    lines = ["def _a(v, l):"]
                    for a in u.assignments:
                        i = slots[a.variable]
                        lo, hi = self.bounds[i]
                        lines.append(f"    x = {_py(fold(a.value), slots)}")
                        lines.append(f"    if x < {lo} or x > {hi}: _viol({i}, x, v)")
                        lines.append(f"    l[{i}] = x")
                    if not u.assignments:
                        lines.append("    pass")
                    assign = _compile("\n".join(lines), "_a", {"_viol": violation})
                    branches.append((prob, assign))
                per_cmd.append(branches)
            self.branches.append(per_cmd)

        # label -> modules whose alphabet contains it, in module order
        self.label_modules: dict[str, list[int]] = {}
        self.label_cmds: list[dict[str, list[int]]] = []
        for mi, m in enumerate(spec.modules):
            by_label: dict[str, list[int]] = {}
            for ci, cmd in enumerate(m.commands):
                if cmd.label is not None:
                    by_label.setdefault(cmd.label, []).append(ci)
            self.label_cmds.append(by_label)
            for label in by_label:
                self.label_modules.setdefault(label, []).append(mi)

        self.reward_fns = []
        for name in reward_names:
            items = spec.rewards(name)
            lines = ["def _r(v, label):", "    t = 0.0"]
            for item in items:
                guard = _py(fold(item.guard), slots)
                value = _py(fold(item.value), slots)
                if item.is_action:
                    label = repr(item.label)
                    lines.append(f"    if label == {label} and {guard}:")
                else:
                    lines.append(f"    if {guard}:")
                lines.append(f"        x = {value}")
                lines.append("        if x < 0: _neg(x, v)")
                lines.append("        t += x")
            lines.append("    return t")

            def negative(x, v, name=name):
                raise MomcError(f"reward structure {name!r} yields negative value {x}")

            self.reward_fns.append(_compile("\n".join(lines), "_r", {"_neg": negative}))

    def choices(self, v: tuple) -> list[tuple[Optional[str], list[tuple[int, int]]]]:
        """Synchronised choices at valuation ``v`` as (label, [(module, command)])."""
        enabled = [f(v) for f in self.enabled]
        result = []
        for mi, cmds in enumerate(enabled):
            module_cmds = self.modules[mi].commands
            for ci in cmds:
                label = module_cmds[ci].label
                if label is None:
                    result.append((None, [(mi, ci)]))
                    continue
                partners = self.label_modules[label]
                if partners[0] != mi:
                    continue
                options = []
                for m2 in partners[1:]:
                    on = [cj for cj in self.label_cmds[m2][label] if cj in enabled[m2]]
                    if not on:
                        break
                    options.append([(m2, cj) for cj in on])
                else:
                    for combo in itertools.product(*options):
                        result.append((label, [(mi, ci), *combo]))
        return result

    def distribution(self, v: tuple, parts: list[tuple[int, int]]) -> dict[tuple, float]:
        per_part = []
        for mi, ci in parts:
            branches = []
            total = 0.0
            for prob, assign in self.branches[mi][ci]:
                p = prob if isinstance(prob, float) else float(prob(v))
                if p < -NORM_TOL or p > 1 + NORM_TOL:
                    raise NonNormalizedDistribution(
                        f"probability {p} outside [0,1] in module {self.modules[mi].name!r}, "
                        f"command {ci + 1}"
                    )
                total += p
                if p > 0:
                    branches.append((p, assign))
            if abs(total - 1.0) > NORM_TOL:
                raise NonNormalizedDistribution(
                    f"probabilities sum to {total!r} in module {self.modules[mi].name!r}, "
                    f"command {ci + 1}"
                )
            per_part.append(branches)
        dist: dict[tuple, float] = {}
        for combo in itertools.product(*per_part):
            p = 1.0
            new = list(v)
            for q, assign in combo:
                p *= q
                assign(v, new)
            t = tuple(new)
            dist[t] = dist.get(t, 0.0) + p
        return dist


def build_mdp(spec: ModelSpec, options: Optional[BuildOptions] = None):
    """Explore the reachable product of all modules.

    Returns ``(SparseMdp, RewardVectorFunction, BuildReport)``; states are
    numbered in breadth-first discovery order from the initial valuation.
    """
    options = options or BuildOptions()
    start = time.perf_counter()
    names = list(options.reward_names) if options.reward_names is not None else spec.reward_names
    for n in names:
        if n not in spec.reward_names:
            raise MomcError(f"unknown reward structure {n!r}; available: {spec.reward_names}")
    for c in spec.constants:
        if c.value is None:
            raise MomcError(f"constant {c.name!r} is unresolved; call resolve_constants first")
    comp = _Compiled(spec, names)

    index = {comp.initial: 0}
    states = [comp.initial]
    queue = deque([comp.initial])
    row_starts, trans_starts, targets, probs, labels = [0], [0], [], [], []
    rewards = [[] for _ in names]
    deadlocks = []
    while queue:
        v = queue.popleft()
        choices = comp.choices(v)
        if not choices:
            deadlocks.append(index[v])
            if options.fix_deadlocks:
                targets.append(index[v])
                probs.append(1.0)
                trans_starts.append(len(targets))
                labels.append(None)
                for r in rewards:
                    r.append(0.0)
            row_starts.append(len(labels))
            continue
        for label, parts in choices:
            for t, p in comp.distribution(v, parts).items():
                j = index.get(t)
                if j is None:
                    j = index[t] = len(states)
                    states.append(t)
                    queue.append(t)
                targets.append(j)
                probs.append(p)
            trans_starts.append(len(targets))
            labels.append(label)
            for r, fn in zip(rewards, comp.reward_fns):
                r.append(float(fn(v, label)))
        row_starts.append(len(labels))

    if deadlocks and not options.fix_deadlocks:
        shown = [
            "(" + ",".join(f"{n}={x}" for n, x in zip(comp.var_names, states[s])) + ")"
            for s in deadlocks[:MAX_REPORTED_DEADLOCKS]
        ]
        raise DeadlockDetected(shown, len(deadlocks))

    mdp = SparseMdp(len(states), 0, row_starts, trans_starts, targets, probs, tuple(labels))
    mdp.validate()
    values = np.array(rewards, dtype=np.float64).reshape(len(names), mdp.num_choices)
    reward_fn = RewardVectorFunction(tuple(names), values)
    report = BuildReport(
        mdp.num_states,
        mdp.num_choices,
        mdp.num_transitions,
        deadlocks,
        (time.perf_counter() - start) * 1000.0,
        comp.var_names,
        states,
    )
    return mdp, reward_fn, report
