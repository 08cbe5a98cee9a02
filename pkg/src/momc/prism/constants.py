"""Constant resolution: overrides, evaluation and substitution."""

from __future__ import annotations

import dataclasses
from typing import Mapping, Union

from ..errors import (
    ConstantRedefinition,
    MissingConstant,
    ProbabilityOutOfRange,
    TypeMismatch,
    UnknownIdentifier,
)
from .ast import (
    Binary,
    Command,
    Constant,
    Expr,
    Ident,
    Literal,
    ModelSpec,
    ModuleSpec,
    RewardItem,
    Unary,
    Update,
    Variable,
    identifiers,
    substitute,
)

Number = Union[int, float, bool]


def evaluate(expr: Expr, env: Mapping[str, Number]) -> Number:
    """Evaluate a closed expression; '/' is real division as in PRISM."""
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Ident):
        try:
            return env[expr.name]
        except KeyError:
            raise UnknownIdentifier(f"unknown identifier {expr.name!r}") from None
    if isinstance(expr, Unary):
        v = evaluate(expr.operand, env)
        return (not v) if expr.op == "!" else -v
    op = expr.op
    if op == "&":
        return bool(evaluate(expr.left, env)) and bool(evaluate(expr.right, env))
    if op == "|":
        return bool(evaluate(expr.left, env)) or bool(evaluate(expr.right, env))
    a, b = evaluate(expr.left, env), evaluate(expr.right, env)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown operator {op!r}")


def parse_literal(text: str) -> Number:
    text = text.strip()
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        return float(text)


def probability_constants(spec: ModelSpec) -> set[str]:
    """Double constants that occur in some command's probability expression."""
    doubles = {c.name for c in spec.constants if c.kind == "double"}
    used = set()
    for m in spec.modules:
        for cmd in m.commands:
            for u in cmd.updates:
                used |= identifiers(u.probability)
    return used & doubles


def _coerce(const: Constant, value: Number) -> Number:
    if isinstance(value, bool):
        raise TypeMismatch(f"constant {const.name!r} cannot take a Boolean value")
    if const.kind == "int":
        if isinstance(value, float):
            if not value.is_integer():
                raise TypeMismatch(f"int constant {const.name!r} given non-integer {value!r}")
            value = int(value)
        return value
    return float(value)


def constant_values(spec: ModelSpec, overrides: Mapping[str, Number] | None = None) -> dict[str, Number]:
    """Values of every constant after applying overrides."""
    overrides = dict(overrides or {})
    declared = {c.name: c for c in spec.constants}
    for name in overrides:
        if name not in declared:
            raise UnknownIdentifier(f"override for undeclared constant {name!r}")
        if declared[name].value is not None:
            raise ConstantRedefinition(
                f"constant {name!r} already has an in-file value; it cannot be overridden"
            )
    missing = [c.name for c in spec.constants if c.value is None and c.name not in overrides]
    if missing:
        raise MissingConstant(missing)

    values: dict[str, Number] = {}
    pending = list(spec.constants)
    while pending:
        progressed = False
        for c in list(pending):
            if c.value is None:
                values[c.name] = _coerce(c, overrides[c.name])
            elif identifiers(c.value) <= values.keys():
                values[c.name] = _coerce(c, evaluate(c.value, values))
            else:
                continue
            pending.remove(c)
            progressed = True
        if not progressed:
            names = ", ".join(c.name for c in pending)
            raise UnknownIdentifier(f"constants with unresolved or cyclic definitions: {names}")

    for name in probability_constants(spec):
        if not 0.0 <= values[name] <= 1.0:
            raise ProbabilityOutOfRange(f"probability constant {name}={values[name]!r} not in [0,1]")
    return values


def resolve_constants(spec: ModelSpec, overrides: Mapping[str, Number] | None = None) -> ModelSpec:
    """Return a copy of ``spec`` where every constant reference is a literal."""
    values = constant_values(spec, overrides)
    lits = {name: Literal(v) for name, v in values.items()}

    def sub(e: Expr) -> Expr:
        return substitute(e, lits)

    constants = tuple(Constant(c.name, c.kind, Literal(values[c.name])) for c in spec.constants)
    modules = []
    for m in spec.modules:
        variables = tuple(
            Variable(v.name, sub(v.low), sub(v.high), None if v.init is None else sub(v.init))
            for v in m.variables
        )
        commands = tuple(
            Command(
                cmd.label,
                sub(cmd.guard),
                tuple(
                    Update(sub(u.probability), tuple(dataclasses.replace(a, value=sub(a.value)) for a in u.assignments))
                    for u in cmd.updates
                ),
            )
            for cmd in m.commands
        )
        modules.append(ModuleSpec(m.name, variables, commands))
    rewards = tuple(
        (name, tuple(RewardItem(i.label, i.is_action, sub(i.guard), sub(i.value)) for i in items))
        for name, items in spec.reward_structures
    )
    return ModelSpec(spec.model_kind, constants, tuple(modules), rewards)


def fold(expr: Expr) -> Expr:
    """Evaluate constant sub-expressions (those without identifiers)."""
    if isinstance(expr, (Literal, Ident)):
        return expr
    if isinstance(expr, Unary):
        inner = fold(expr.operand)
        if isinstance(inner, Literal):
            return Literal(evaluate(Unary(expr.op, inner), {}))
        return Unary(expr.op, inner)
    left, right = fold(expr.left), fold(expr.right)
    if isinstance(left, Literal) and isinstance(right, Literal):
        return Literal(evaluate(Binary(expr.op, left, right), {}))
    return Binary(expr.op, left, right)
