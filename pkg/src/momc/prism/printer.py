"""Canonical pretty-printer for the PRISM subset.

Binary sub-expressions are always parenthesised, so printing a parsed model
and parsing the output again yields the same tree.
"""

from __future__ import annotations

from .ast import Command, Expr, Ident, Literal, ModelSpec, Unary, Update


def format_number(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    text = repr(float(value))
    if "e" in text or "E" in text:
        mantissa, _, exponent = text.partition("e")
        if "." not in mantissa:
            mantissa += ".0"
        text = f"{mantissa}e{exponent}"
    return text


def format_expr(expr: Expr, nested: bool = False) -> str:
    if isinstance(expr, Literal):
        if isinstance(expr.value, (int, float)) and not isinstance(expr.value, bool) and expr.value < 0:
            return f"({format_number(expr.value)})"
        return format_number(expr.value)
    if isinstance(expr, Ident):
        return expr.name
    if isinstance(expr, Unary):
        inner = format_expr(expr.operand, nested=True)
        return f"{expr.op}{inner}"
    text = f"{format_expr(expr.left, True)} {expr.op} {format_expr(expr.right, True)}"
    return f"({text})" if nested else text


def _format_updates(updates: tuple[Update, ...]) -> str:
    def assigns(u: Update) -> str:
        if not u.assignments:
            return "true"
        return " & ".join(f"({a.variable}'={format_expr(a.value)})" for a in u.assignments)

    if len(updates) == 1 and updates[0].probability == Literal(1.0):
        return assigns(updates[0])
    return " + ".join(f"{format_expr(u.probability, True)} : {assigns(u)}" for u in updates)


def format_command(cmd: Command) -> str:
    return f"[{cmd.label or ''}] {format_expr(cmd.guard)} -> {_format_updates(cmd.updates)};"


def format_model(spec: ModelSpec) -> str:
    lines = [spec.model_kind, ""]
    for c in spec.constants:
        value = "" if c.value is None else f" = {format_expr(c.value)}"
        lines.append(f"const {c.kind} {c.name}{value};")
    if spec.constants:
        lines.append("")
    for m in spec.modules:
        lines.append(f"module {m.name}")
        for v in m.variables:
            init = "" if v.init is None else f" init {format_expr(v.init)}"
            lines.append(f"  {v.name} : [{format_expr(v.low)}..{format_expr(v.high)}]{init};")
        for cmd in m.commands:
            lines.append("  " + format_command(cmd))
        lines.append("endmodule")
        lines.append("")
    for name, items in spec.reward_structures:
        lines.append(f'rewards "{name}"')
        for item in items:
            prefix = f"[{item.label or ''}] " if item.is_action else ""
            lines.append(f"  {prefix}{format_expr(item.guard)} : {format_expr(item.value)};")
        lines.append("endrewards")
        lines.append("")
    return "\n".join(lines)
