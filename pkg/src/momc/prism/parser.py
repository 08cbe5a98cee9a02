"""Tokenizer and recursive-descent parser for the PRISM subset."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from ..errors import PrismSyntaxError, TypeMismatch, UnknownIdentifier
from .ast import (
    ARITH_OPS,
    REL_OPS,
    Assignment,
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
)

KEYWORDS = {
    "mdp", "const", "int", "double", "module", "endmodule", "init",
    "rewards", "endrewards", "true", "false",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<double>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<sym>->|\.\.|<=|>=|!=|[=<>&|!+\-*/()\[\]:;'])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int" | "double" | "ident" | "kw" | "string" | "sym" | "eof"
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PrismSyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            if kind == "ident" and value in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    # -- token helpers -------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "kw") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        t = self.tok
        self.i += 1
        return t

    def expect_ident(self) -> str:
        if self.tok.kind != "ident":
            self.fail("identifier")
        t = self.tok
        self.i += 1
        return t.text

    def fail(self, expected: str):
        t = self.tok
        found = t.text if t.kind != "eof" else "end of input"
        raise PrismSyntaxError(f"unexpected {found!r}", t.line, t.column, expected)

    # -- top level -----------------------------------------------------
    def model(self) -> ModelSpec:
        if not self.at("mdp"):
            self.fail("model type 'mdp'")
        self.i += 1
        constants, modules, rewards = [], [], []
        while self.tok.kind != "eof":
            if self.at("const"):
                constants.append(self.constant())
            elif self.at("module"):
                modules.append(self.module())
            elif self.at("rewards"):
                rewards.append(self.reward_structure(len(rewards)))
            else:
                self.fail("'const', 'module' or 'rewards'")
        return ModelSpec("mdp", tuple(constants), tuple(modules), tuple(rewards))

    def constant(self) -> Constant:
        self.expect("const")
        kind = "int"
        if self.accept("double"):
            kind = "double"
        else:
            self.accept("int")
        name = self.expect_ident()
        value = None
        if self.accept("="):
            value = self.expr()
        self.expect(";")
        return Constant(name, kind, value)

    def module(self) -> ModuleSpec:
        self.expect("module")
        name = self.expect_ident()
        variables, commands = [], []
        while self.tok.kind == "ident" and self.peek().text == ":":
            variables.append(self.variable())
        while self.at("["):
            commands.append(self.command())
        self.expect("endmodule")
        return ModuleSpec(name, tuple(variables), tuple(commands))

    def variable(self) -> Variable:
        name = self.expect_ident()
        self.expect(":")
        self.expect("[")
        low = self.expr()
        self.expect("..")
        high = self.expr()
        self.expect("]")
        init = None
        if self.accept("init"):
            init = self.expr()
        self.expect(";")
        return Variable(name, low, high, init)

    def label(self) -> Optional[str]:
        self.expect("[")
        label = None
        if self.tok.kind == "ident":
            label = self.expect_ident()
        self.expect("]")
        return label

    def command(self) -> Command:
        label = self.label()
        guard = self.expr()
        self.expect("->")
        updates = self.updates()
        self.expect(";")
        return Command(label, guard, tuple(updates))

    def _at_assignment(self) -> bool:
        return (
            self.at("(")
            and self.peek().kind == "ident"
            and self.peek(2).kind == "sym"
            and self.peek(2).text == "'"
        )

    def assignments(self) -> tuple[Assignment, ...]:
        if self.accept("true"):
            return ()
        result = [self.assignment()]
        while self.accept("&"):
            result.append(self.assignment())
        return tuple(result)

    def assignment(self) -> Assignment:
        self.expect("(")
        name = self.expect_ident()
        self.expect("'")
        self.expect("=")
        value = self.expr()
        self.expect(")")
        return Assignment(name, value)

    def updates(self) -> list[Update]:
        if self.at("true") or self._at_assignment():
            return [Update(Literal(1.0), self.assignments())]
        result = []
        while True:
            prob = self.expr()
            self.expect(":")
            result.append(Update(prob, self.assignments()))
            if not self.accept("+"):
                return result

    def reward_structure(self, index: int) -> tuple[str, tuple[RewardItem, ...]]:
        self.expect("rewards")
        name = str(index)
        if self.tok.kind == "string":
            name = self.tok.text[1:-1]
            self.i += 1
        items = []
        while not self.at("endrewards"):
            if self.tok.kind == "eof":
                self.fail("'endrewards'")
            label, is_action = None, False
            if self.at("["):
                label, is_action = self.label(), True
            guard = self.expr()
            self.expect(":")
            value = self.expr()
            self.expect(";")
            items.append(RewardItem(label, is_action, guard, value))
        self.expect("endrewards")
        return name, tuple(items)

    # -- expressions, lowest precedence first ---------------------------
    def expr(self) -> Expr:
        left = self.conjunction()
        while self.accept("|"):
            left = Binary("|", left, self.conjunction())
        return left

    def conjunction(self) -> Expr:
        left = self.negation()
        while self.accept("&"):
            left = Binary("&", left, self.negation())
        return left

    def negation(self) -> Expr:
        if self.accept("!"):
            return Unary("!", self.negation())
        return self.relation()

    def relation(self) -> Expr:
        left = self.additive()
        if self.tok.kind == "sym" and self.tok.text in REL_OPS:
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "sym" and self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.accept("-"):
            operand = self.unary()
            if isinstance(operand, Literal) and not isinstance(operand.value, bool):
                return Literal(-operand.value)
            return Unary("-", operand)
        return self.atom()

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return Literal(int(t.text))
        if t.kind == "double":
            self.i += 1
            return Literal(float(t.text))
        if t.kind == "ident":
            self.i += 1
            return Ident(t.text)
        if self.accept("true"):
            return Literal(True)
        if self.accept("false"):
            return Literal(False)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.fail("expression")


def parse_expression(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        p.fail("end of expression")
    return e


# -- static checks -------------------------------------------------------

def expr_type(expr: Expr, env: dict[str, str]) -> str:
    """Infer "int", "double" or "bool"; raise on ill-typed expressions."""
    if isinstance(expr, Literal):
        return expr.kind
    if isinstance(expr, Ident):
        if expr.name not in env:
            raise UnknownIdentifier(f"unknown identifier {expr.name!r}")
        return env[expr.name]
    if isinstance(expr, Unary):
        t = expr_type(expr.operand, env)
        if expr.op == "!":
            if t != "bool":
                raise TypeMismatch(f"operand of '!' must be Boolean, got {t}")
            return "bool"
        if t == "bool":
            raise TypeMismatch("unary minus applied to a Boolean")
        return t
    lt, rt = expr_type(expr.left, env), expr_type(expr.right, env)
    if expr.op in ("&", "|"):
        if lt != "bool" or rt != "bool":
            raise TypeMismatch(f"operands of {expr.op!r} must be Boolean, got {lt} and {rt}")
        return "bool"
    if expr.op in REL_OPS:
        if expr.op in ("=", "!=") and lt == rt == "bool":
            return "bool"
        if "bool" in (lt, rt):
            raise TypeMismatch(f"cannot compare {lt} with {rt} using {expr.op!r}")
        return "bool"
    assert expr.op in ARITH_OPS
    if "bool" in (lt, rt):
        raise TypeMismatch(f"arithmetic {expr.op!r} on a Boolean operand")
    if expr.op == "/":
        return "double"
    return "int" if lt == rt == "int" else "double"


def check_model(spec: ModelSpec) -> None:
    env: dict[str, str] = {}
    for c in spec.constants:
        if c.name in env:
            raise TypeMismatch(f"constant {c.name!r} declared twice")
        env[c.name] = c.kind
    owner: dict[str, str] = {}
    for m in spec.modules:
        for v in m.variables:
            if v.name in env:
                raise TypeMismatch(f"variable {v.name!r} clashes with an existing name")
            env[v.name] = "int"
            owner[v.name] = m.name
    consts = {c.name: c.kind for c in spec.constants}

    def numeric(e: Expr, what: str, want_int: bool = False, scope=env):
        t = expr_type(e, scope)
        if t == "bool" or (want_int and t != "int"):
            raise TypeMismatch(f"{what} must be {'an integer' if want_int else 'numeric'}, got {t}")

    def boolean(e: Expr, what: str):
        t = expr_type(e, env)
        if t != "bool":
            raise TypeMismatch(f"{what} must be Boolean, got {t}")

    for c in spec.constants:
        if c.value is not None:
            numeric(c.value, f"value of constant {c.name!r}", c.kind == "int", consts)
    for m in spec.modules:
        for v in m.variables:
            numeric(v.low, f"lower bound of {v.name!r}", True, consts)
            numeric(v.high, f"upper bound of {v.name!r}", True, consts)
            if v.init is not None:
                numeric(v.init, f"initial value of {v.name!r}", True, consts)
        for k, cmd in enumerate(m.commands):
            where = f"command {k + 1} of module {m.name!r}"
            boolean(cmd.guard, f"guard of {where}")
            for u in cmd.updates:
                numeric(u.probability, f"probability in {where}")
                seen = set()
                for a in u.assignments:
                    if a.variable not in env or a.variable in consts:
                        raise UnknownIdentifier(f"{where} assigns unknown variable {a.variable!r}")
                    if owner[a.variable] != m.name:
                        raise TypeMismatch(
                            f"{where} assigns {a.variable!r} owned by module {owner[a.variable]!r}"
                        )
                    if a.variable in seen:
                        raise TypeMismatch(f"{where} assigns {a.variable!r} twice")
                    seen.add(a.variable)
                    numeric(a.value, f"assignment to {a.variable!r} in {where}", True)
    for name, items in spec.reward_structures:
        for item in items:
            boolean(item.guard, f"guard of reward item in {name!r}")
            numeric(item.value, f"value of reward item in {name!r}")


def parse_model(source_text: str) -> ModelSpec:
    """Parse PRISM source into a checked :class:`ModelSpec`."""
    spec = _Parser(source_text).model()
    check_model(spec)
    return spec
