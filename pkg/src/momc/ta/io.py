"""Readers for TA, parameter and count files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

from ..errors import TaFormatError
from .automaton import Edge, TimedAutomaton
from .convert import Empirical, Exponential, threshold_probability
from .guards import ClockCmp, parse_guard


def _list_of_str(value, what: str) -> list[str]:
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise TaFormatError(f"{what} must be a list of names")
    return value


def parse_ta(data: Any) -> list[TimedAutomaton]:
    """Automata of a TA document, sharing its clocks, booleans and constants."""
    if not isinstance(data, dict):
        raise TaFormatError("TA file must contain a JSON object")
    clocks = _list_of_str(data.get("clocks"), "clocks")
    booleans = _list_of_str(data.get("booleans"), "booleans")
    constants = data.get("constants") or {}
    if not isinstance(constants, dict) or not all(isinstance(v, (int, float)) for v in constants.values()):
        raise TaFormatError("constants must map names to numbers")
    clash = (set(clocks) & set(booleans)) | ((set(clocks) | set(booleans)) & set(constants))
    if clash:
        raise TaFormatError(f"names declared twice: {sorted(clash)}")
    autos = data.get("automata")
    if not isinstance(autos, list) or not autos:
        raise TaFormatError("'automata' must be a nonempty list")

    def guard(text):
        return parse_guard(text, clocks, booleans, constants)

    result = []
    for a in autos:
        if not isinstance(a, dict):
            raise TaFormatError("each automaton must be a JSON object")
        try:
            name = a.get("name", f"A{len(result)}")
            states = _list_of_str(a["states"], "states")
            edges = []
            for e in a.get("edges", []):
                edges.append(
                    Edge(
                        e["from"],
                        guard(e.get("guard", "true")),
                        e["action"],
                        frozenset(_list_of_str(e.get("resets"), "resets")),
                        e["to"],
                    )
                )
            invariants = {s: guard(g) for s, g in (a.get("invariants") or {}).items()}
            result.append(
                TimedAutomaton(name, states, a.get("init", states[0] if states else None), edges,
                               clocks, booleans, invariants,
                               frozenset(_list_of_str(a.get("actions"), "actions")))
            )
        except KeyError as exc:
            raise TaFormatError(f"automaton entry lacks field {exc}") from None
    return result


def load_ta(path) -> list[TimedAutomaton]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TaFormatError(f"{path}: invalid JSON ({exc})") from None
    return parse_ta(data)


def parse_params(data: Any, base_dir: Path | str = ".") -> tuple[dict[str, float], dict[str, float]]:
    """Split a params document into explicit values and distribution-derived values."""
    if not isinstance(data, dict):
        raise TaFormatError("params file must contain a JSON object")
    explicit, derived = {}, {}
    for name, spec in data.items():
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            explicit[name] = float(spec)
            continue
        if not isinstance(spec, dict):
            raise TaFormatError(f"parameter {name!r}: expected a number or a distribution object")
        kind = spec.get("dist")
        if kind == "exponential":
            dist = Exponential(float(spec["scale"]))
        elif kind == "empirical":
            samples = spec.get("samples")
            if samples is None and "file" in spec:
                p = Path(spec["file"])
                text = (p if p.is_absolute() else Path(base_dir) / p).read_text(encoding="utf-8")
                samples = [float(x) for x in text.replace(",", " ").split()]
            dist = Empirical(tuple(float(x) for x in samples or ()))
        else:
            raise TaFormatError(f"parameter {name!r}: unknown distribution {kind!r}")
        threshold = float(spec.get("threshold", float("inf")))
        form = spec.get("form", "z<t")
        g = parse_guard(form, ["z"], [], {"t": 0})
        if not isinstance(g, ClockCmp):
            raise TaFormatError(f"parameter {name!r}: form must be a single comparison like 'z<t'")
        derived[name] = threshold_probability(g.op, threshold, dist)
    return explicit, derived


def load_params(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TaFormatError(f"{path}: invalid JSON ({exc})") from None
    return parse_params(data, Path(path).parent)


def load_counts(path) -> dict[tuple[str, str], float]:
    """``state,action,count`` rows (a header row is optional)."""
    counts: dict[tuple[str, str], float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TaFormatError(f"{path}:{i + 1}: expected state,action,count")
            state, action, count = (c.strip() for c in row)
            if i == 0 and count.lower() == "count":
                continue
            try:
                value = float(count)
            except ValueError:
                raise TaFormatError(f"{path}:{i + 1}: count {count!r} is not a number") from None
            counts[(state, action)] = counts.get((state, action), 0.0) + value
    return counts
