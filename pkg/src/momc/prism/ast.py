"""Syntax tree for the supported PRISM subset."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass(frozen=True)
class Literal:
    value: Union[int, float, bool]

    @property
    def kind(self) -> str:
        if isinstance(self.value, bool):
            return "bool"
        if isinstance(self.value, int):
            return "int"
        return "double"


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Literal, Ident, Unary, Binary]

ARITH_OPS = ("+", "-", "*", "/")
REL_OPS = ("=", "!=", "<", "<=", ">", ">=")
BOOL_OPS = ("&", "|")


@dataclass(frozen=True)
class Constant:
    name: str
    kind: str  # "int" | "double"
    value: Optional[Expr] = None


@dataclass(frozen=True)
class Variable:
    name: str
    low: Expr
    high: Expr
    init: Optional[Expr] = None


@dataclass(frozen=True)
class Assignment:
    variable: str
    value: Expr


@dataclass(frozen=True)
class Update:
    probability: Expr
    assignments: tuple[Assignment, ...]


@dataclass(frozen=True)
class Command:
    label: Optional[str]
    guard: Expr
    updates: tuple[Update, ...]


@dataclass(frozen=True)
class ModuleSpec:
    name: str
    variables: tuple[Variable, ...]
    commands: tuple[Command, ...]

    @property
    def alphabet(self) -> frozenset[str]:
        return frozenset(c.label for c in self.commands if c.label is not None)


@dataclass(frozen=True)
class RewardItem:
    label: Optional[str]
    is_action: bool
    guard: Expr
    value: Expr


@dataclass(frozen=True)
class ModelSpec:
    model_kind: str
    constants: tuple[Constant, ...]
    modules: tuple[ModuleSpec, ...]
    reward_structures: tuple[tuple[str, tuple[RewardItem, ...]], ...] = field(default=())

    def constant(self, name: str) -> Optional[Constant]:
        for c in self.constants:
            if c.name == name:
                return c
        return None

    @property
    def reward_names(self) -> list[str]:
        return [name for name, _ in self.reward_structures]

    def rewards(self, name: str) -> tuple[RewardItem, ...]:
        for n, items in self.reward_structures:
            if n == name:
                return items
        raise KeyError(name)

    @property
    def variables(self) -> list[tuple[str, Variable]]:
        """All (module name, variable) pairs in declaration order."""
        return [(m.name, v) for m in self.modules for v in m.variables]


def identifiers(expr: Expr) -> set[str]:
    if isinstance(expr, Ident):
        return {expr.name}
    if isinstance(expr, Unary):
        return identifiers(expr.operand)
    if isinstance(expr, Binary):
        return identifiers(expr.left) | identifiers(expr.right)
    return set()


def substitute(expr: Expr, values: dict[str, Expr]) -> Expr:
    if isinstance(expr, Ident):
        return values.get(expr.name, expr)
    if isinstance(expr, Unary):
        return Unary(expr.op, substitute(expr.operand, values))
    if isinstance(expr, Binary):
        return Binary(expr.op, substitute(expr.left, values), substitute(expr.right, values))
    return expr
