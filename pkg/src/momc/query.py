"""Convex queries over achievable total-reward vectors, and the simpler
analyses built on the same oracle: evaluation, single-objective optimisation,
achievability and perturbation sweeps."""

from __future__ import annotations

import csv
import dataclasses
import enum
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .errors import QueryFormatError, UnknownParameter
from .geometry import (
    Box,
    HRep,
    LossKind,
    LossSpec,
    LpStatus,
    VRep,
    lp_solve,
    min_norm_point,
    minimize_loss_over_hrep,
)
from .mdp import (
    MixtureScheduler,
    RewardVectorFunction,
    SparseMdp,
    load_scheduler,
)
from .solver import SolverConfig, normalize_weights, policy_values, support_point

BOX_TOL = 1e-9
FW_TOL_FLOOR = 1e-9


class QueryStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_CAP = "IterationCapReached"


@dataclass
class ConvexQuerySpec:
    objectives: tuple[str, ...]
    loss: LossSpec
    box: Box
    epsilon: float = 1e-4
    max_outer_iters: int = 200
    initial_direction: Optional[np.ndarray] = None
    # Stop as soon as the answer to "is the minimum <= threshold?" is known.
    decision_threshold: Optional[float] = None

    def __post_init__(self):
        self.objectives = tuple(self.objectives)
        m = len(self.objectives)
        if m < 1:
            raise ValueError("a query needs at least one objective")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be at least 1")
        if self.loss.dim != m or self.box.dim != m:
            raise ValueError(f"loss and box must have dimension {m}")

    @property
    def m(self) -> int:
        return len(self.objectives)

    @property
    def fw_tol(self) -> float:
        return max(self.epsilon / 10.0, FW_TOL_FLOOR)


@dataclass
class TraceEntry:
    iteration: int  # 0 for warm-start oracle calls
    w: np.ndarray
    r: np.ndarray
    num_points: int
    num_halfspaces: int
    lower: Optional[np.ndarray] = None
    lower_bound: Optional[float] = None
    upper: Optional[np.ndarray] = None
    value: Optional[float] = None
    gap: Optional[float] = None
    recomputed: bool = False
    in_box: bool = False

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else [float(v) for v in x]

        return {
            "iteration": self.iteration,
            "w": arr(self.w),
            "r": arr(self.r),
            "num_points": self.num_points,
            "num_halfspaces": self.num_halfspaces,
            "lower_point": arr(self.lower),
            "lower_bound": self.lower_bound,
            "upper_point": arr(self.upper),
            "value": self.value,
            "gap": self.gap,
            "lower_recomputed": self.recomputed,
            "upper_in_box": self.in_box,
        }


@dataclass
class QueryOutcome:
    status: QueryStatus
    value: Optional[float] = None
    point: Optional[np.ndarray] = None
    gap: Optional[float] = None
    iterations: int = 0
    oracle_calls: int = 0
    mixture: Optional[MixtureScheduler] = None
    weights: Optional[np.ndarray] = None
    trace: list[TraceEntry] = field(default_factory=list)
    vrep: VRep = field(default_factory=VRep)
    hrep: HRep = field(default_factory=HRep)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "value": self.value,
            "point": None if self.point is None else [float(x) for x in self.point],
            "gap": self.gap,
            "iterations": self.iterations,
            "oracle_calls": self.oracle_calls,
            "mixture_support": None if self.mixture is None else len(self.mixture.components),
        }


def convex_query(
    mdp: SparseMdp,
    rewards: RewardVectorFunction,
    spec: ConvexQuerySpec,
    cfg: Optional[SolverConfig] = None,
) -> QueryOutcome:
    """Minimise a convex loss over the achievable set intersected with a box.

    Alternates between an inner approximation (convex hull of support points)
    and an outer one (their supporting halfspaces) until the projection of
    the outer minimiser onto the hull lies in the box with a loss within
    ``epsilon`` of a certified lower bound.
    """
    cfg = cfg or SolverConfig()
    if rewards.m != spec.m:
        raise ValueError(f"query has {spec.m} objectives, reward function has {rewards.m}")
    m = spec.m
    loss, box = spec.loss, spec.box
    out = QueryOutcome(QueryStatus.ITERATION_CAP)
    phi, lam = out.vrep, out.hrep

    def oracle(w, iteration):
        r, sched = support_point(mdp, rewards, w, cfg)
        if phi.index_of(r) is None:
            phi.add(r, sched)
        lam.add(w, r)
        out.oracle_calls += 1
        entry = TraceEntry(iteration, w.copy(), r, len(phi), len(lam))
        out.trace.append(entry)
        return r, entry

    for i in range(m):
        for sign in (1.0, -1.0):
            w = np.zeros(m)
            w[i] = sign
            oracle(w, 0)

    if spec.initial_direction is None:
        w = np.full(m, 1.0 / m)
    else:
        w = normalize_weights(spec.initial_direction)
    lower = None
    fw = None
    best = None
    for it in range(1, spec.max_outer_iters + 1):
        out.iterations = it
        r, entry = oracle(w, it)
        if lp_solve(lam, box, np.zeros(m)).status is LpStatus.INFEASIBLE:
            out.status = QueryStatus.INFEASIBLE
            return out
        if lower is None or w @ r < w @ lower:
            fw = minimize_loss_over_hrep(lam, box, loss, spec.fw_tol)
            lower = fw.point
            entry.recomputed = True
        upper, weights = min_norm_point(phi, lower)
        value = loss.value(upper)
        bound = fw.lower_bound
        gap = value - bound
        in_box = box.contains(upper, BOX_TOL)
        entry.lower, entry.lower_bound, entry.upper = lower.copy(), bound, upper
        entry.value, entry.gap, entry.in_box = value, gap, in_box

        if in_box and (best is None or value < best[0]):
            best = (value, upper, weights, gap)
        done = in_box and gap <= spec.epsilon
        thr = spec.decision_threshold
        if thr is not None and ((in_box and value <= thr) or bound > thr):
            done = True
        if done:
            out.status = QueryStatus.OPTIMAL
            _finish(out, value, upper, weights, gap, phi)
            return out
        diff = lower - upper
        norm = np.abs(diff).sum()
        if norm <= 1e-12 * max(1.0, float(np.abs(lower).sum())):
            # the outer minimiser is in the hull up to rounding; nothing left to cut
            break
        w = diff / norm

    if best is None:
        best = (value, upper, weights, gap)
    _finish(out, *best, phi)
    return out


def _finish(out: QueryOutcome, value, point, weights, gap, phi: VRep) -> None:
    out.value, out.point, out.gap, out.weights = float(value), point, float(gap), weights
    support = np.flatnonzero(weights > 0)
    out.mixture = MixtureScheduler(weights[support] / weights[support].sum(), tuple(phi.schedulers[i] for i in support))


# -- other analyses -----------------------------------------------------------------

@dataclass
class AchievabilityOutcome:
    achievable: bool
    point: Optional[np.ndarray]
    mixture: Optional[MixtureScheduler]
    distance_sq: float
    query: QueryOutcome
    near_boundary: bool = False


def threshold_box(thresholds, directions) -> Box:
    t = np.asarray(thresholds, dtype=np.float64)
    if len(directions) != len(t):
        raise ValueError("one direction per threshold is required")
    lo = np.full(len(t), -np.inf)
    hi = np.full(len(t), np.inf)
    for i, d in enumerate(directions):
        if d == "<=":
            hi[i] = t[i]
        elif d == ">=":
            lo[i] = t[i]
        else:
            raise ValueError(f"direction must be '<=' or '>=', got {d!r}")
    return Box(lo, hi)


def achievability_query(
    mdp: SparseMdp,
    rewards: RewardVectorFunction,
    thresholds,
    directions: Sequence[str],
    delta: float = 1e-6,
    cfg: Optional[SolverConfig] = None,
    objectives: Optional[Sequence[str]] = None,
    max_outer_iters: int = 200,
) -> AchievabilityOutcome:
    """Is some scheduler's value vector within ``delta`` of the threshold region?"""
    if delta <= 0:
        raise ValueError("delta must be positive")
    target = threshold_box(thresholds, directions)
    m = target.dim
    spec = ConvexQuerySpec(
        tuple(objectives or rewards.names),
        LossSpec.box(target),
        Box.unbounded(m),
        epsilon=delta * delta / 2.0,
        max_outer_iters=max_outer_iters,
        decision_threshold=delta * delta,
    )
    q = convex_query(mdp, rewards, spec, cfg)
    ok = q.value is not None and q.value <= delta * delta
    near = q.value is not None and abs(math.sqrt(max(q.value, 0.0)) - delta) <= delta
    return AchievabilityOutcome(ok, q.point if ok else None, q.mixture if ok else None, q.value, q, near)


def evaluate_query(
    mdp: SparseMdp,
    rewards: RewardVectorFunction,
    sched,
    cfg: Optional[SolverConfig] = None,
) -> np.ndarray:
    """Total-reward vector of any scheduler kind (mixtures by linearity)."""
    cfg = cfg or SolverConfig()
    if isinstance(sched, MixtureScheduler):
        sched.check(mdp)
        return sum(lam * evaluate_query(mdp, rewards, c, cfg) for lam, c in zip(sched.weights, sched.components))
    values = policy_values(mdp, rewards, sched, None, cfg)
    return values[:, mdp.initial_state].copy()


def optimize_single(
    mdp: SparseMdp,
    rewards: RewardVectorFunction,
    objective: int,
    sense: str = "max",
    cfg: Optional[SolverConfig] = None,
):
    """Optimal value of one objective, its scheduler, and the full value vector."""
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    if not 0 <= objective < rewards.m:
        raise ValueError(f"objective index {objective} out of range")
    w = np.zeros(rewards.m)
    w[objective] = 1.0 if sense == "max" else -1.0
    point, sched = support_point(mdp, rewards, w, cfg)
    return float(point[objective]), sched, point


# -- query files --------------------------------------------------------------------

QUERY_TYPES = ("convex", "achievability", "evaluate", "optimize")


def _bounds(raw, m: int, default: float, what: str) -> np.ndarray:
    if raw is None:
        return np.full(m, default)
    if isinstance(raw, str):
        return np.full(m, _float(raw, what))
    if not isinstance(raw, list) or len(raw) != m:
        raise QueryFormatError(f"{what} must be a list of {m} numbers")
    return np.array([_float(x, what) for x in raw])


def _float(x, what: str) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        raise QueryFormatError(f"{what}: cannot read {x!r} as a number") from None


@dataclass
class QueryRequest:
    objectives: tuple[str, ...]
    kind: str
    params: dict
    base_dir: Path = Path(".")

    @property
    def m(self) -> int:
        return len(self.objectives)

    def loss(self) -> LossSpec:
        raw = self.params.get("loss")
        if not isinstance(raw, dict) or "kind" not in raw:
            raise QueryFormatError("convex query needs a loss object with a 'kind'")
        try:
            kind = LossKind(raw["kind"])
        except ValueError:
            raise QueryFormatError(f"unknown loss kind {raw['kind']!r}") from None
        weights = raw.get("weights")
        if weights is not None:
            weights = _bounds(weights, self.m, 1.0, "loss weights")
        target = raw.get("target")
        try:
            if kind is LossKind.SQ_DIST_TO_BOX:
                if not isinstance(target, dict):
                    raise QueryFormatError("sq_dist_to_box target must be {'lower': ..., 'upper': ...}")
                tb = Box(
                    _bounds(target.get("lower"), self.m, -np.inf, "target lower"),
                    _bounds(target.get("upper"), self.m, np.inf, "target upper"),
                )
                return LossSpec(kind, target_box=tb, weights=weights)
            return LossSpec(kind, target=_bounds(target, self.m, 0.0, "loss target"), weights=weights)
        except ValueError as exc:
            raise QueryFormatError(str(exc)) from None

    def convex_spec(self) -> ConvexQuerySpec:
        p = self.params
        try:
            box = Box(
                _bounds(p.get("lower"), self.m, -np.inf, "lower"),
                _bounds(p.get("upper"), self.m, np.inf, "upper"),
            )
            direction = p.get("initial_direction")
            return ConvexQuerySpec(
                self.objectives,
                self.loss(),
                box,
                epsilon=float(p.get("epsilon", 1e-4)),
                max_outer_iters=int(p.get("max_iters", 200)),
                initial_direction=None if direction is None else np.array(direction, dtype=float),
            )
        except ValueError as exc:
            raise QueryFormatError(str(exc)) from None

    def objective_index(self) -> int:
        obj = self.params.get("objective", 0)
        if isinstance(obj, str):
            if obj not in self.objectives:
                raise QueryFormatError(f"objective {obj!r} is not among {list(self.objectives)}")
            return self.objectives.index(obj)
        if not isinstance(obj, int) or not 0 <= obj < self.m:
            raise QueryFormatError(f"objective index {obj!r} out of range")
        return obj


def parse_query(data: Any, base_dir: Path | str = ".") -> QueryRequest:
    if not isinstance(data, dict):
        raise QueryFormatError("query file must contain a JSON object")
    objectives = data.get("objectives")
    if not isinstance(objectives, list) or not objectives or not all(isinstance(o, str) for o in objectives):
        raise QueryFormatError("'objectives' must be a nonempty list of reward-structure names")
    if len(set(objectives)) != len(objectives):
        raise QueryFormatError("objective names must be distinct")
    q = data.get("query")
    if not isinstance(q, dict) or q.get("type") not in QUERY_TYPES:
        raise QueryFormatError(f"'query.type' must be one of {QUERY_TYPES}")
    params = {k: v for k, v in q.items() if k != "type"}
    req = QueryRequest(tuple(objectives), q["type"], params, Path(base_dir))
    if req.kind == "convex":
        req.convex_spec()
    elif req.kind == "achievability":
        th, dirs = params.get("thresholds"), params.get("directions")
        if not isinstance(th, list) or len(th) != req.m:
            raise QueryFormatError(f"'thresholds' must list {req.m} numbers")
        if not isinstance(dirs, list) or len(dirs) != req.m or any(d not in ("<=", ">=") for d in dirs):
            raise QueryFormatError(f"'directions' must list {req.m} entries of '<=' or '>='")
        if float(params.get("delta", 1e-6)) <= 0:
            raise QueryFormatError("'delta' must be positive")
    elif req.kind == "evaluate":
        if not isinstance(params.get("scheduler"), str):
            raise QueryFormatError("evaluate query needs a 'scheduler' file path")
    else:
        req.objective_index()
        if params.get("sense", "max") not in ("min", "max"):
            raise QueryFormatError("'sense' must be 'min' or 'max'")
    return req


def load_query(path) -> QueryRequest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise QueryFormatError(f"{path}: invalid JSON ({exc})") from None
    return parse_query(data, path.parent)


@dataclass
class QueryAnswer:
    """Outcome of a dispatched query, shaped for reporting."""

    kind: str
    positive: bool  # False only for Infeasible / NotAchievable
    result: dict
    point: Optional[np.ndarray] = None
    loss: Optional[float] = None
    scheduler: Any = None
    trace: list[TraceEntry] = field(default_factory=list)


def run_query(mdp, rewards, request: QueryRequest, cfg: Optional[SolverConfig] = None) -> QueryAnswer:
    """Dispatch a parsed query on a model whose rewards are already in objective order."""
    cfg = cfg or SolverConfig()
    p = request.params
    if request.kind == "convex":
        out = convex_query(mdp, rewards, request.convex_spec(), cfg)
        res = out.to_dict()
        return QueryAnswer("convex", out.status is not QueryStatus.INFEASIBLE, res, out.point, out.value, out.mixture, out.trace)
    if request.kind == "achievability":
        a = achievability_query(
            mdp, rewards, [float(x) for x in p["thresholds"]], p["directions"],
            float(p.get("delta", 1e-6)), cfg, request.objectives, int(p.get("max_iters", 200)),
        )
        res = {
            "status": "Achievable" if a.achievable else "NotAchievable",
            "point": None if a.point is None else [float(x) for x in a.point],
            "distance_sq": a.distance_sq,
            "near_boundary": a.near_boundary,
            "iterations": a.query.iterations,
            "oracle_calls": a.query.oracle_calls,
        }
        return QueryAnswer("achievability", a.achievable, res, a.point, None, a.mixture, a.query.trace)
    if request.kind == "evaluate":
        path = Path(p["scheduler"])
        sched = load_scheduler(path if path.is_absolute() else request.base_dir / path)
        values = evaluate_query(mdp, rewards, sched, cfg)
        res = {"status": "Evaluated", "point": [float(x) for x in values]}
        return QueryAnswer("evaluate", True, res, values, None, None)
    idx = request.objective_index()
    sense = p.get("sense", "max")
    value, sched, vec = optimize_single(mdp, rewards, idx, sense, cfg)
    res = {"status": "Optimal", "objective": request.objectives[idx], "sense": sense,
           "value": value, "point": [float(x) for x in vec]}
    return QueryAnswer("optimize", True, res, vec, value, sched)


# -- perturbation sweeps ----------------------------------------------------------------

@dataclass
class SensitivityRow:
    level: float
    parameter: str
    sign: str
    values: Optional[list[float]]
    loss: Optional[float]
    status: str
    error: str = ""


def _cleared(spec, name: str):
    """Spec with constant ``name`` undefined so it can be supplied as an override."""
    consts = tuple(
        dataclasses.replace(c, value=None) if c.name == name else c for c in spec.constants
    )
    return dataclasses.replace(spec, constants=consts)


def sensitivity_run(
    spec,
    overrides: dict,
    request: QueryRequest,
    levels: Sequence[float],
    parameters: Sequence[str],
    cfg: Optional[SolverConfig] = None,
    fix_deadlocks: bool = False,
) -> list[SensitivityRow]:
    """Re-run ``request`` with each parameter scaled by ``1 ± level``.

    Emits a baseline row, then two rows per (level, parameter). A failing run
    is recorded with its error message instead of aborting the sweep.
    """
    from .graph import preprocess
    from .prism import BuildOptions, build_mdp, resolve_constants
    from .prism.constants import constant_values, probability_constants

    cfg = cfg or SolverConfig()
    declared = {c.name for c in spec.constants}
    unknown = [p for p in parameters if p not in declared]
    if unknown:
        raise UnknownParameter(f"not constants of the model: {', '.join(unknown)}")
    probs = probability_constants(spec)
    not_prob = [p for p in parameters if p not in probs]
    if not_prob:
        raise UnknownParameter(f"not probability constants of the model: {', '.join(not_prob)}")
    base = constant_values(spec, overrides)
    options = BuildOptions(fix_deadlocks=fix_deadlocks, reward_names=list(request.objectives))

    def run(s, ovr, level, name, sign) -> SensitivityRow:
        try:
            mdp, rewards, _ = build_mdp(resolve_constants(s, ovr), options)
            pre = preprocess(mdp, rewards)
            ans = run_query(pre.mdp, pre.rewards, request, cfg)
            vals = None if ans.point is None else [float(x) for x in ans.point]
            return SensitivityRow(level, name, sign, vals, ans.loss, ans.result["status"])
        except Exception as exc:  # recorded, not fatal
            return SensitivityRow(level, name, sign, None, None, "error", f"{type(exc).__name__}: {exc}")

    rows = [run(spec, overrides, 0.0, "", "")]
    for level in levels:
        for name in parameters:
            for sign, factor in (("+", 1.0 + level), ("-", 1.0 - level)):
                value = min(max(base[name] * factor, 1e-9), 1.0 - 1e-9)
                if level == 0:
                    value = base[name]
                s = _cleared(spec, name)
                ovr = {k: v for k, v in overrides.items() if k != name}
                ovr[name] = value
                rows.append(run(s, ovr, float(level), name, sign))
    return rows


def write_sensitivity_csv(rows: Sequence[SensitivityRow], objectives: Sequence[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "parameter", "sign", *objectives, "loss", "status", "error"])
        for r in rows:
            vals = r.values if r.values is not None else [""] * len(objectives)
            w.writerow([repr(r.level), r.parameter, r.sign, *[repr(v) if v != "" else "" for v in vals],
                        "" if r.loss is None else repr(r.loss), r.status, r.error])


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    res = fn(*args, **kwargs)
    return res, (time.perf_counter() - t0) * 1000.0
