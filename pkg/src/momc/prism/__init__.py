from .ast import ModelSpec, ModuleSpec
from .builder import BuildOptions, BuildReport, build_mdp
from .constants import parse_literal, resolve_constants
from .parser import parse_expression, parse_model
from .printer import format_model

__all__ = [
    "BuildOptions",
    "BuildReport",
    "ModelSpec",
    "ModuleSpec",
    "build_mdp",
    "format_model",
    "parse_expression",
    "parse_literal",
    "parse_model",
    "resolve_constants",
]
