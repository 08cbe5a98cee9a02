"""Timed-automaton front end: composition, classification, conversion to MDPs."""

from .automaton import (
    TAU,
    Edge,
    StateClassification,
    StateKind,
    TimedAutomaton,
    classify_states,
    compose,
    compose_all,
)
from .convert import (
    Empirical,
    Exponential,
    MdpSkeleton,
    ParamTable,
    SkeletonChoice,
    assign_params,
    convert_to_mdp,
    emit_prism,
    estimate_params,
    guard_probability,
    threshold_probability,
)
from .guards import parse_guard
from .io import load_counts, load_params, load_ta, parse_params, parse_ta

__all__ = [
    "TAU", "Edge", "StateClassification", "StateKind", "TimedAutomaton", "classify_states",
    "compose", "compose_all", "Empirical", "Exponential", "MdpSkeleton", "ParamTable",
    "SkeletonChoice", "assign_params", "convert_to_mdp", "emit_prism", "estimate_params",
    "guard_probability", "threshold_probability", "parse_guard", "load_counts", "load_params",
    "load_ta", "parse_params", "parse_ta",
]
