"""Command-line driver: ``momc check | stats | convert-ta | sensitivity``.

Exit codes: 0 success, 2 negative but valid answer (Infeasible or
NotAchievable), 1 error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import MomcError
from .graph import lift_scheduler, preprocess
from .mdp import save_scheduler
from .prism import BuildOptions, build_mdp, parse_literal, parse_model, resolve_constants
from .query import QueryRequest, load_query, run_query, sensitivity_run, write_sensitivity_csv
from .solver import SolverConfig

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2


def _log(msg: str) -> None:
    print(f"[momc] {msg}", file=sys.stderr, flush=True)


def _const(text: str) -> tuple[str, float | int]:
    name, sep, value = text.partition("=")
    if not sep or not name.strip():
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name.strip(), parse_literal(value.strip())
    except (MomcError, ValueError):
        raise argparse.ArgumentTypeError(f"cannot read value of {name!r}: {value!r}") from None


def _positive_float(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _positive_int(text: str) -> int:
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return x


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if any(v < 0 or v >= 1 for v in vals):
        raise argparse.ArgumentTypeError("perturbation levels must lie in [0, 1)")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"momc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp, need_query: bool):
        sp.add_argument("--model", required=True, type=Path, help="PRISM model file")
        sp.add_argument("--const", action="append", default=[], type=_const, metavar="NAME=VALUE",
                        help="value for an undefined constant (repeatable)")
        sp.add_argument("--fix-deadlocks", action="store_true", help="add zero-reward self-loops to deadlocks")
        if need_query:
            sp.add_argument("--query", required=True, type=Path, help="query JSON file")
            sp.add_argument("--workers", type=_positive_int, default=None)
            sp.add_argument("--value-tol", type=_positive_float, default=None)
            sp.add_argument("--epsilon", type=float, default=None, help="override the query's epsilon")
            sp.add_argument("--max-iters", type=_positive_int, default=None, help="override the query's outer-iteration cap")
        sp.add_argument("--out", type=Path, default=None)

    check = sub.add_parser("check", help="build a model and answer a query")
    model_args(check, True)
    check.add_argument("--export-scheduler", type=Path, default=None)
    check.add_argument("--trace", type=Path, default=None)

    stats = sub.add_parser("stats", help="build a model and report its size")
    model_args(stats, False)

    conv = sub.add_parser("convert-ta", help="convert timed automata to a PRISM MDP")
    conv.add_argument("--model", required=True, type=Path, help="TA JSON file")
    conv.add_argument("--params", type=Path, default=None, help="parameter JSON file")
    conv.add_argument("--counts", type=Path, default=None, help="state,action,count CSV")
    conv.add_argument("--alpha", type=float, default=0.0, help="Laplace smoothing for counts")
    conv.add_argument("--out", required=True, type=Path, help="PRISM file to write")
    conv.add_argument("--report", type=Path, default=None, help="conversion report JSON")

    sens = sub.add_parser("sensitivity", help="perturb probability constants and re-run a query")
    model_args(sens, True)
    sens.add_argument("--levels", type=_float_list, required=True, help="comma-separated, e.g. 0.015,0.03")
    sens.add_argument("--parameters", required=True, help="comma-separated constant names")
    return p


def _solver_config(args) -> SolverConfig:
    cfg = SolverConfig()
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "value_tol", None):
        cfg = replace(cfg, value_tol=args.value_tol)
    return cfg


def _apply_overrides(request: QueryRequest, args) -> QueryRequest:
    params = dict(request.params)
    if args.epsilon is not None:
        if args.epsilon < 0:
            raise MomcError("--epsilon must be nonnegative")
        params["epsilon"] = args.epsilon
    if args.max_iters is not None:
        params["max_iters"] = args.max_iters
    return replace(request, params=params)


def _model_hash(text: str, overrides: dict) -> str:
    h = hashlib.sha256(text.encode("utf-8"))
    h.update(json.dumps(sorted((k, repr(v)) for k, v in overrides.items())).encode())
    return h.hexdigest()


def _emit(report: dict, out: Optional[Path]) -> None:
    text = json.dumps(report, indent=2, default=_json_default)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n", encoding="utf-8")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def _base_report(args, cfg: Optional[SolverConfig]) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "const"}
    config["const"] = {k: v for k, v in args.const} if hasattr(args, "const") else {}
    if cfg is not None:
        config["solver"] = cfg.to_dict()
    return {
        "tool": "momc",
        "version": __version__,
        "python": platform.python_version(),
        "subcommand": args.command,
        "config": config,
    }


def _load_model(args, reward_names):
    text = args.model.read_text(encoding="utf-8")
    overrides = dict(args.const)
    spec = parse_model(text)
    _log(f"parsed {args.model} ({len(spec.modules)} modules, {len(spec.reward_names)} reward structures)")
    resolved = resolve_constants(spec, overrides)
    opts = BuildOptions(fix_deadlocks=args.fix_deadlocks, reward_names=reward_names)
    mdp, rewards, build = build_mdp(resolved, opts)
    _log(f"built {build.num_states} states, {build.num_choices} choices, "
         f"{build.num_transitions} transitions in {build.build_time_ms:.0f} ms")
    return spec, text, overrides, mdp, rewards, build


def cmd_check(args) -> int:
    cfg = _solver_config(args)
    request = _apply_overrides(load_query(args.query), args)
    report = _base_report(args, cfg)
    report["config"]["query_document"] = json.loads(args.query.read_text(encoding="utf-8"))
    spec, text, overrides, mdp, rewards, build = _load_model(args, list(request.objectives))
    report["model_hash"] = _model_hash(text, overrides)
    report["build"] = build.summary()
    t0 = time.perf_counter()
    pre = preprocess(mdp, rewards)
    report["preprocessing"] = pre.summary() | {"time_ms": (time.perf_counter() - t0) * 1000.0}
    _log(f"preprocessing: {pre.summary()}")

    t0 = time.perf_counter()
    if request.kind == "evaluate":
        answer = run_query(mdp, rewards, request, cfg)
    else:
        answer = run_query(pre.mdp, pre.rewards, request, cfg)
    report["query"] = {"type": request.kind, "objectives": list(request.objectives)} | answer.result
    report["timing_ms"] = {"build": build.build_time_ms, "query": (time.perf_counter() - t0) * 1000.0}
    _log(f"{request.kind} query: {answer.result.get('status')}")

    if args.export_scheduler is not None:
        if answer.scheduler is None:
            _log("no scheduler to export for this query")
        else:
            save_scheduler(lift_scheduler(answer.scheduler, pre.kept_states, mdp.num_states), args.export_scheduler)
            report["scheduler_file"] = str(args.export_scheduler)
    if args.trace is not None:
        args.trace.write_text(json.dumps([e.to_dict() for e in answer.trace], indent=1) + "\n", encoding="utf-8")
    _emit(report, args.out)
    return EXIT_OK if answer.positive else EXIT_NEGATIVE


def cmd_stats(args) -> int:
    report = _base_report(args, None)
    spec, text, overrides, mdp, rewards, build = _load_model(args, None)
    report["model_hash"] = _model_hash(text, overrides)
    report["build"] = build.summary()
    _emit(report, args.out)
    return EXIT_OK


def cmd_convert_ta(args) -> int:
    from .ta import (
        assign_params,
        classify_states,
        compose_all,
        convert_to_mdp,
        emit_prism,
        estimate_params,
        load_counts,
        load_params,
        load_ta,
    )

    automata = load_ta(args.model)
    ta = compose_all(automata)
    _log(f"composed {len(automata)} automata into {len(ta.states)} states, {len(ta.edges)} edges")
    classes = classify_states(ta)
    skeleton, table = convert_to_mdp(ta, classes)
    explicit, derived = load_params(args.params) if args.params else ({}, {})
    estimated = estimate_params(load_counts(args.counts), table, args.alpha) if args.counts else {}
    table = assign_params(table, explicit, derived, estimated)
    text = emit_prism(skeleton, table)
    args.out.write_text(text, encoding="utf-8")
    _log(f"wrote {args.out}: {skeleton.num_states} states ({len(skeleton.fresh)} fresh)")
    report = _base_report(args, None) | {
        "ta_states": len(ta.states),
        "mdp_states": skeleton.num_states,
        "fresh_states": skeleton.fresh,
        "classification": classes.to_dict(),
        "parameters": table.to_dict(),
        "parameter_sources": {
            p: "explicit" if p in explicit else "distribution" if p in derived else "counts"
            for p in table.names
        },
        "model_hash": hashlib.sha256(text.encode()).hexdigest(),
    }
    if args.report is not None:
        _emit(report, args.report)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _solver_config(args)
    if args.out is None:
        raise MomcError("sensitivity needs --out for the CSV")
    request = _apply_overrides(load_query(args.query), args)
    spec = parse_model(args.model.read_text(encoding="utf-8"))
    params = [p.strip() for p in args.parameters.split(",") if p.strip()]
    rows = sensitivity_run(spec, dict(args.const), request, args.levels, params, cfg, args.fix_deadlocks)
    write_sensitivity_csv(rows, request.objectives, args.out)
    failed = sum(r.status == "error" for r in rows)
    _log(f"wrote {len(rows)} rows to {args.out} ({failed} failed runs)")
    return EXIT_OK


COMMANDS = {"check": cmd_check, "stats": cmd_stats, "convert-ta": cmd_convert_ta, "sensitivity": cmd_sensitivity}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except (MomcError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
