"""Guard expressions over Boolean variables and clock-vs-constant comparisons,
with a DNF-based satisfiability check."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Union

from ..errors import TaFormatError, UnsupportedGuardAtom

CLOCK_OPS = ("<", "<=", "=", ">=", ">")


@dataclass(frozen=True)
class GTrue:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class GFalse:
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class BoolVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ClockCmp:
    clock: str
    op: str
    bound: Fraction

    def __str__(self) -> str:
        return f"{self.clock} {self.op} {_num(self.bound)}"


@dataclass(frozen=True)
class Not:
    operand: "Guard"

    def __str__(self) -> str:
        return f"!{_wrap(self.operand)}"


@dataclass(frozen=True)
class And:
    left: "Guard"
    right: "Guard"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} && {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: "Guard"
    right: "Guard"

    def __str__(self) -> str:
        return f"{_wrap(self.left)} || {_wrap(self.right)}"


Guard = Union[GTrue, GFalse, BoolVar, ClockCmp, Not, And, Or]
TRUE = GTrue()


def _num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else str(float(x))


def _wrap(g: Guard) -> str:
    return f"({g})" if isinstance(g, (And, Or)) else str(g)


def conj(*guards: Guard) -> Guard:
    out: Guard = TRUE
    for g in guards:
        if isinstance(g, GTrue):
            continue
        out = g if isinstance(out, GTrue) else And(out, g)
    return out


def atoms(g: Guard) -> Iterable[Guard]:
    if isinstance(g, (BoolVar, ClockCmp)):
        yield g
    elif isinstance(g, Not):
        yield from atoms(g.operand)
    elif isinstance(g, (And, Or)):
        yield from atoms(g.left)
        yield from atoms(g.right)


# -- parsing ------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>&&|\|\||->|<=|>=|==|!=|<|>|=|!|\(|\)))"
)
_FLIP = {"<": ">", "<=": ">=", "=": "=", ">=": "<=", ">": "<"}


def _tokens(text: str) -> list[tuple[str, str, int]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise TaFormatError(f"guard {text!r}: unexpected character at offset {pos}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return out


class _GuardParser:
    def __init__(self, text, clocks, booleans, constants):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0
        self.clocks = set(clocks)
        self.booleans = set(booleans)
        self.constants = dict(constants)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            want = value or "a token"
            raise TaFormatError(f"guard {self.text!r}: expected {want} at offset {tok[2]}")
        self.i += 1
        return tok

    def parse(self) -> Guard:
        g = self.implication()
        if self.peek()[0] is not None:
            raise TaFormatError(f"guard {self.text!r}: trailing input at offset {self.peek()[2]}")
        return g

    def implication(self) -> Guard:
        left = self.disjunction()
        if self.peek()[1] == "->":
            self.take()
            return Or(Not(left), self.implication())
        return left

    def disjunction(self) -> Guard:
        g = self.conjunction()
        while self.peek()[1] == "||":
            self.take()
            g = Or(g, self.conjunction())
        return g

    def conjunction(self) -> Guard:
        g = self.unary()
        while self.peek()[1] == "&&":
            self.take()
            g = And(g, self.unary())
        return g

    def unary(self) -> Guard:
        if self.peek()[1] == "!":
            self.take()
            return Not(self.unary())
        return self.atom()

    def _operand(self):
        kind, val, pos = self.take()
        if kind == "num":
            return ("const", Fraction(val))
        if kind == "id":
            if val in self.clocks:
                return ("clock", val)
            if val in self.constants:
                return ("const", Fraction(str(self.constants[val])))
            if val in self.booleans:
                return ("bool", val)
            if val in ("true", "false"):
                return ("lit", val)
            raise TaFormatError(f"guard {self.text!r}: undeclared identifier {val!r}")
        if val == "(":
            return ("paren", None)
        raise TaFormatError(f"guard {self.text!r}: unexpected {val!r} at offset {pos}")

    def atom(self) -> Guard:
        start = self.i
        kind, val = self._operand()
        if kind == "paren":
            g = self.implication()
            self.take(")")
            return g
        op = self.peek()[1]
        if op in ("<", "<=", "=", "==", ">=", ">", "!="):
            self.take()
            kind2, val2 = self._operand()
            op = "=" if op == "==" else op
            if kind == "clock" and kind2 == "clock":
                raise UnsupportedGuardAtom(
                    f"guard {self.text!r}: clock-to-clock comparisons are not supported; "
                    "classification would need difference-bound reasoning"
                )
            if kind == "clock" and kind2 == "const":
                cmp = (val, op, val2)
            elif kind == "const" and kind2 == "clock":
                cmp = (val2, _FLIP.get(op, op), val)
            else:
                raise UnsupportedGuardAtom(
                    f"guard {self.text!r}: comparisons must relate a clock to a constant"
                )
            clock, op, bound = cmp
            if bound < 0:
                raise TaFormatError(f"guard {self.text!r}: clock bounds must be nonnegative")
            if op == "!=":
                return Or(ClockCmp(clock, "<", bound), ClockCmp(clock, ">", bound))
            return ClockCmp(clock, op, bound)
        if kind == "bool":
            return BoolVar(val)
        if kind == "lit":
            return TRUE if val == "true" else GFalse()
        self.i = start
        raise TaFormatError(f"guard {self.text!r}: a clock or number must be compared")


def parse_guard(text: str, clocks=(), booleans=(), constants: Mapping[str, float] | None = None) -> Guard:
    """Parse ``true``, booleans, ``!``, ``&&``, ``||``, ``->`` and clock comparisons."""
    if not isinstance(text, str):
        raise TaFormatError(f"guard must be a string, got {text!r}")
    if not text.strip():
        return TRUE
    return _GuardParser(text, clocks, booleans, constants or {}).parse()


# -- satisfiability --------------------------------------------------------------------

_NEGATE = {"<": ">=", "<=": ">", ">=": "<", ">": "<="}


def nnf(g: Guard, negate: bool = False) -> Guard:
    if isinstance(g, GTrue):
        return GFalse() if negate else g
    if isinstance(g, GFalse):
        return TRUE if negate else g
    if isinstance(g, BoolVar):
        return Not(g) if negate else g
    if isinstance(g, ClockCmp):
        if not negate:
            return g
        if g.op == "=":
            return Or(ClockCmp(g.clock, "<", g.bound), ClockCmp(g.clock, ">", g.bound))
        return ClockCmp(g.clock, _NEGATE[g.op], g.bound)
    if isinstance(g, Not):
        return nnf(g.operand, not negate)
    left, right = nnf(g.left, negate), nnf(g.right, negate)
    is_and = isinstance(g, And) != negate
    return And(left, right) if is_and else Or(left, right)


def dnf(g: Guard) -> list[list[Guard]]:
    """Disjunction of conjunctions of literals (``BoolVar``, ``Not(BoolVar)``, ``ClockCmp``)."""
    g = nnf(g)

    def go(h) -> list[list[Guard]]:
        if isinstance(h, GTrue):
            return [[]]
        if isinstance(h, GFalse):
            return []
        if isinstance(h, Or):
            return go(h.left) + go(h.right)
        if isinstance(h, And):
            return [a + b for a, b in itertools.product(go(h.left), go(h.right))]
        return [[h]]

    return go(g)


@dataclass
class _Interval:
    lo: Fraction = Fraction(0)
    lo_open: bool = False
    hi: float | Fraction = math.inf
    hi_open: bool = True

    def restrict(self, op: str, c: Fraction) -> None:
        if op in (">", ">=", "="):
            strict = op == ">"
            if c > self.lo or (c == self.lo and strict):
                self.lo, self.lo_open = c, strict
        if op in ("<", "<=", "="):
            strict = op == "<"
            if c < self.hi or (c == self.hi and strict):
                self.hi, self.hi_open = c, strict

    def empty(self) -> bool:
        if self.lo < self.hi:
            return False
        return self.lo > self.hi or self.lo_open or self.hi_open


def conjunct_consistent(literals: Iterable[Guard]) -> bool:
    signs: dict[str, bool] = {}
    clocks: dict[str, _Interval] = {}
    for lit in literals:
        if isinstance(lit, ClockCmp):
            clocks.setdefault(lit.clock, _Interval()).restrict(lit.op, lit.bound)
            continue
        positive = isinstance(lit, BoolVar)
        name = lit.name if positive else lit.operand.name
        if signs.setdefault(name, positive) != positive:
            return False
    return not any(iv.empty() for iv in clocks.values())


def satisfiable(g: Guard) -> bool:
    return any(conjunct_consistent(c) for c in dnf(g))


def exclusive(a: Guard, b: Guard) -> bool:
    return not satisfiable(And(a, b))


def equivalent(a: Guard, b: Guard) -> bool:
    return not satisfiable(And(a, Not(b))) and not satisfiable(And(Not(a), b))


def evaluate(g: Guard, booleans: Mapping[str, bool], clocks: Mapping[str, float]) -> bool:
    if isinstance(g, GTrue):
        return True
    if isinstance(g, GFalse):
        return False
    if isinstance(g, BoolVar):
        return bool(booleans[g.name])
    if isinstance(g, ClockCmp):
        x, c = clocks[g.clock], g.bound
        return {"<": x < c, "<=": x <= c, "=": x == c, ">=": x >= c, ">": x > c}[g.op]
    if isinstance(g, Not):
        return not evaluate(g.operand, booleans, clocks)
    if isinstance(g, And):
        return evaluate(g.left, booleans, clocks) and evaluate(g.right, booleans, clocks)
    return evaluate(g.left, booleans, clocks) or evaluate(g.right, booleans, clocks)
