"""Polytope bookkeeping, a dense simplex LP solver, Frank-Wolfe and Wolfe's
minimum-norm-point algorithm."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalFailure, RegionEmpty, RegionUnbounded

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-8


# -- representations ------------------------------------------------------------

@dataclass
class VRep:
    """Points of an inner approximation, each with the scheduler that produced it."""

    points: list[np.ndarray] = field(default_factory=list)
    schedulers: list = field(default_factory=list)

    def add(self, point, scheduler=None) -> int:
        self.points.append(np.asarray(point, dtype=np.float64))
        self.schedulers.append(scheduler)
        return len(self.points) - 1

    def index_of(self, point, tol: float = 1e-12) -> Optional[int]:
        for i, p in enumerate(self.points):
            if np.max(np.abs(p - point)) <= tol:
                return i
        return None

    def array(self) -> np.ndarray:
        return np.array(self.points)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class HRep:
    """Halfspaces ``w . x <= w . r``."""

    normals: list[np.ndarray] = field(default_factory=list)
    anchors: list[np.ndarray] = field(default_factory=list)

    def add(self, w, r) -> None:
        w = np.asarray(w, dtype=np.float64)
        if abs(np.abs(w).sum() - 1.0) > 1e-12:
            raise ValueError("halfspace normal must have unit 1-norm")
        self.normals.append(w)
        self.anchors.append(np.asarray(r, dtype=np.float64))

    @classmethod
    def from_pairs(cls, pairs) -> "HRep":
        h = cls()
        for w, r in pairs:
            h.add(w, r)
        return h

    def matrix(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        if not self.normals:
            return np.zeros((0, m)), np.zeros(0)
        a = np.array(self.normals)
        b = np.einsum("ij,ij->i", a, np.array(self.anchors))
        return a, b

    def contains(self, x, tol: float = FEAS_TOL) -> bool:
        a, b = self.matrix(len(x))
        return bool(np.all(a @ x <= b + tol))

    def __len__(self) -> int:
        return len(self.normals)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls, m: int) -> "Box":
        return cls(np.full(m, -np.inf), np.full(m, np.inf))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


class LossKind(str, enum.Enum):
    SQ_DIST_TO_POINT = "sq_dist_to_point"
    WEIGHTED_SQ_DIST_TO_POINT = "weighted_sq_dist_to_point"
    SQ_DIST_TO_BOX = "sq_dist_to_box"


@dataclass(frozen=True)
class LossSpec:
    """Separable convex quadratic losses.

    For the point kinds the loss is ``sum_i c_i (x_i - d_i)^2``; for the box
    kind ``sum_i c_i dist(x_i, [a_i, b_i])^2``.
    """

    kind: LossKind
    target: Optional[np.ndarray] = None
    target_box: Optional[Box] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = LossKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is LossKind.SQ_DIST_TO_BOX:
            if self.target_box is None:
                raise ValueError("sq_dist_to_box needs a target box")
            m = self.target_box.dim
        else:
            if self.target is None:
                raise ValueError(f"{kind.value} needs a target point")
            object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
            if not np.all(np.isfinite(self.target)):
                raise ValueError("target point must be finite")
            m = len(self.target)
        w = np.ones(m) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (m,) or np.any(w < 0):
            raise ValueError("loss weights must be nonnegative with one entry per objective")
        if kind is LossKind.SQ_DIST_TO_POINT and self.weights is not None and not np.all(w == 1):
            raise ValueError("sq_dist_to_point is unweighted; use weighted_sq_dist_to_point")
        object.__setattr__(self, "weights", w)

    @classmethod
    def point(cls, target, weights=None) -> "LossSpec":
        kind = LossKind.SQ_DIST_TO_POINT if weights is None else LossKind.WEIGHTED_SQ_DIST_TO_POINT
        return cls(kind, target=np.asarray(target, dtype=np.float64), weights=weights)

    @classmethod
    def box(cls, target_box: Box, weights=None) -> "LossSpec":
        return cls(LossKind.SQ_DIST_TO_BOX, target_box=target_box, weights=weights)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def _residual(self, x: np.ndarray) -> np.ndarray:
        if self.kind is LossKind.SQ_DIST_TO_BOX:
            return x - self.target_box.clip(x)
        return x - self.target

    def value(self, x) -> float:
        e = self._residual(np.asarray(x, dtype=np.float64))
        return float(np.dot(self.weights, e * e))

    def grad(self, x) -> np.ndarray:
        return 2.0 * self.weights * self._residual(np.asarray(x, dtype=np.float64))

    def line_min(self, x: np.ndarray, d: np.ndarray, tmax: float) -> float:
        """Exact minimiser of ``t -> loss(x + t d)`` over ``[0, tmax]``.

        The derivative is piecewise linear and nondecreasing, with kinks where
        a coordinate crosses a face of the target box.
        """
        def slope(t):
            return float(np.dot(self.grad(x + t * d), d))

        lo = 0.0
        s_lo = slope(lo)
        if s_lo >= 0:
            return 0.0
        kinks = []
        if self.kind is LossKind.SQ_DIST_TO_BOX:
            with np.errstate(divide="ignore", invalid="ignore"):
                for bound in (self.target_box.lower, self.target_box.upper):
                    t = (bound - x) / d
                    kinks.extend(t[np.isfinite(t) & (t > 0) & (t < tmax)].tolist())
        for hi in sorted(kinks) + [tmax]:
            s_hi = slope(hi)
            if s_hi >= 0:
                # derivative is linear on [lo, hi]
                return lo + (hi - lo) * (-s_lo) / (s_hi - s_lo) if s_hi > s_lo else lo
            lo, s_lo = hi, s_hi
        return tmax


# -- linear programming ---------------------------------------------------------

class LpStatus(str, enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: LpStatus
    point: Optional[np.ndarray] = None
    value: Optional[float] = None
    ray: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return self.status is LpStatus.FEASIBLE


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factor = tab[:, col].copy()
    factor[row] = 0.0
    tab -= np.outer(factor, tab[row])


def _run_simplex(tab: np.ndarray, basis: list[int], ncols: int, cap: int):
    """Minimise the last row over columns ``< ncols`` with Bland's rule.

    Returns ``None`` at optimality or the entering column of an unbounded ray.
    """
    rows = tab.shape[0] - 1
    for _ in range(cap):
        cost = tab[-1, :ncols]
        entering = np.flatnonzero(cost < -PIVOT_TOL)
        if not len(entering):
            return None
        col = int(entering[0])
        column = tab[:rows, col]
        candidates = np.flatnonzero(column > PIVOT_TOL)
        if not len(candidates):
            return col
        ratios = tab[candidates, -1] / column[candidates]
        best = ratios.min()
        ties = candidates[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(min(ties, key=lambda i: basis[i]))
        _pivot(tab, row, col)
        basis[row] = col
    raise NumericalFailure(f"simplex exceeded {cap} pivots")


def lp_solve(halfspaces: HRep, box: Box, objective, sense: str = "min") -> LpResult:
    """Optimise ``objective . x`` over ``H ∩ box`` with a two-phase tableau simplex."""
    c = np.asarray(objective, dtype=np.float64)
    m = box.dim
    if c.shape != (m,):
        raise ValueError("objective dimension does not match the box")
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    if sense == "max":
        c = -c
    a_h, b_h = halfspaces.matrix(m)

    # x = shift + T y with y >= 0
    lo, hi = box.lower, box.upper
    cols = []
    shift = np.zeros(m)
    extra_rows = []  # (coefficient vector over y, rhs)
    for i in range(m):
        if np.isfinite(lo[i]):
            shift[i] = lo[i]
            cols.append((i, 1.0))
            if np.isfinite(hi[i]):
                extra_rows.append((len(cols) - 1, hi[i] - lo[i]))
        elif np.isfinite(hi[i]):
            shift[i] = hi[i]
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    n = len(cols)
    t = np.zeros((m, n))
    for j, (i, s) in enumerate(cols):
        t[i, j] = s

    a = a_h @ t
    b = b_h - a_h @ shift
    if extra_rows:
        ub = np.zeros((len(extra_rows), n))
        for k, (j, _) in enumerate(extra_rows):
            ub[k, j] = 1.0
        a = np.vstack([a, ub])
        b = np.concatenate([b, [r for _, r in extra_rows]])
    cost = c @ t
    rows = len(b)

    # tableau columns: y (n) | slacks (rows) | artificials (rows needing one) | rhs
    negative = np.flatnonzero(b < 0)
    k = len(negative)
    width = n + rows + k
    tab = np.zeros((rows + 1, width + 1))
    tab[:rows, :n] = a
    tab[:rows, n:n + rows] = np.eye(rows)
    tab[:rows, -1] = b
    tab[negative] *= -1.0
    basis = list(range(n, n + rows))
    for j, r in enumerate(negative):
        tab[r, n + rows + j] = 1.0
        basis[r] = n + rows + j
    cap = 10 * (rows + width) ** 2 + 100

    if k:
        tab[-1, :] = -tab[negative].sum(axis=0)
        tab[-1, n + rows:width] = 0.0
        _run_simplex(tab, basis, width, cap)
        if -tab[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max()):
            return LpResult(LpStatus.INFEASIBLE)
        # drive zero-level artificials out of the basis
        keep = []
        for r in range(rows):
            if basis[r] >= n + rows:
                nz = np.flatnonzero(np.abs(tab[r, :n + rows]) > PIVOT_TOL)
                if len(nz):
                    _pivot(tab, r, int(nz[0]))
                    basis[r] = int(nz[0])
                    keep.append(r)
            else:
                keep.append(r)
        tab = np.vstack([tab[keep], tab[-1:]])
        basis = [basis[r] for r in keep]
        tab = np.delete(tab, np.s_[n + rows:width], axis=1)
        width = n + rows
        rows = len(keep)

    tab[-1, :] = 0.0
    tab[-1, :n] = cost
    for r, var in enumerate(basis):
        if tab[-1, var] != 0.0:
            tab[-1] -= tab[-1, var] * tab[r]
    ray_col = _run_simplex(tab, basis, width, cap)

    y = np.zeros(width)
    for r, var in enumerate(basis):
        y[var] = tab[r, -1]
    x = shift + t @ y[:n]
    if ray_col is not None:
        d = np.zeros(width)
        d[ray_col] = 1.0
        for r, var in enumerate(basis):
            d[var] = -tab[r, ray_col]
        return LpResult(LpStatus.UNBOUNDED, point=x, ray=t @ d[:n])
    value = float(np.asarray(objective) @ x)
    return LpResult(LpStatus.FEASIBLE, point=x, value=value)


# -- Frank-Wolfe over H ∩ box ---------------------------------------------------

@dataclass
class FwResult:
    point: np.ndarray
    value: float
    gap: float
    iterations: int

    @property
    def lower_bound(self) -> float:
        return self.value - self.gap


def minimize_loss_over_hrep(
    halfspaces: HRep,
    box: Box,
    loss: LossSpec,
    tol: float,
    max_iters: int = 20_000,
) -> FwResult:
    """Away-step Frank-Wolfe with exact line search and an LP oracle.

    Stops once the duality gap ``grad . (x - s)`` is at most ``tol``; ``value -
    gap`` is then a certified lower bound on the minimum.
    """
    if loss.kind is LossKind.SQ_DIST_TO_BOX:
        # a box loss is flat on its target, where FW crawls; zero is decided by one LP
        lo = np.maximum(box.lower, loss.target_box.lower)
        hi = np.minimum(box.upper, loss.target_box.upper)
        if np.all(lo <= hi):
            hit = lp_solve(halfspaces, Box(lo, hi), np.zeros(box.dim))
            if hit.status is LpStatus.FEASIBLE:
                value = loss.value(hit.point)
                return FwResult(hit.point, value, value, 0)
    start = lp_solve(halfspaces, box, loss.grad(box.clip(_anchor(loss))), "min")
    if start.status is LpStatus.INFEASIBLE:
        raise RegionEmpty("halfspaces and box have empty intersection")
    if start.status is LpStatus.UNBOUNDED:
        raise RegionUnbounded("region is unbounded in a descent direction")
    x = start.point.copy()
    active = {_key(x): [x.copy(), 1.0]}
    gap = np.inf
    for it in range(1, max_iters + 1):
        g = loss.grad(x)
        res = lp_solve(halfspaces, box, g, "min")
        if res.status is LpStatus.UNBOUNDED:
            raise RegionUnbounded("region is unbounded in a descent direction")
        if res.status is LpStatus.INFEASIBLE:
            raise RegionEmpty("halfspaces and box have empty intersection")
        s = res.point
        gap = float(g @ (x - s))
        if gap <= tol:
            return FwResult(x, loss.value(x), max(gap, 0.0), it)
        away_key, (v, alpha) = max(active.items(), key=lambda kv: float(g @ kv[1][0]))
        away_gap = float(g @ (v - x))
        if gap >= away_gap or alpha >= 1.0:
            d, tmax = s - x, 1.0
            step = loss.line_min(x, d, tmax)
            for entry in active.values():
                entry[1] *= 1.0 - step
            key = _key(s)
            if key in active:
                active[key][1] += step
            else:
                active[key] = [s.copy(), step]
            if step >= 1.0:
                active = {key: [s.copy(), 1.0]}
        else:
            d, tmax = x - v, alpha / (1.0 - alpha)
            step = loss.line_min(x, d, tmax)
            for entry in active.values():
                entry[1] *= 1.0 + step
            active[away_key][1] -= step
            if step >= tmax:
                del active[away_key]
        active = {k: e for k, e in active.items() if e[1] > 1e-15}
        x = sum(e[1] * e[0] for e in active.values()) / sum(e[1] for e in active.values())
    return FwResult(x, loss.value(x), max(gap, 0.0), max_iters)


def _anchor(loss: LossSpec) -> np.ndarray:
    if loss.kind is LossKind.SQ_DIST_TO_BOX:
        b = loss.target_box
        return np.where(np.isfinite(b.lower), b.lower, np.where(np.isfinite(b.upper), b.upper, 0.0))
    return loss.target


def _key(x: np.ndarray) -> bytes:
    return np.round(x, 12).tobytes()


# -- minimum-norm point -----------------------------------------------------------

MNP_ZERO = 1e-12


def _affine_minimizer(q: np.ndarray) -> np.ndarray:
    k = q.shape[0]
    system = np.zeros((k + 1, k + 1))
    system[:k, :k] = q @ q.T
    system[:k, k] = 1.0
    system[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_point(vrep: VRep | Sequence, anchor) -> tuple[np.ndarray, np.ndarray]:
    """Euclidean projection of ``anchor`` onto the convex hull of the points.

    Wolfe's algorithm on the translated points; returns the projection and its
    convex weights over the input order.
    """
    pts = vrep.array() if isinstance(vrep, VRep) else np.asarray(vrep, dtype=np.float64)
    if pts.ndim != 2 or not len(pts):
        raise ValueError("need at least one point")
    anchor = np.asarray(anchor, dtype=np.float64)
    q = pts - anchor
    n = len(q)
    scale = max(1.0, float(np.max(np.einsum("ij,ij->i", q, q))))
    tol = 1e-14 * scale

    start = int(np.argmin(np.einsum("ij,ij->i", q, q)))
    support = [start]
    lam = np.array([1.0])
    x = q[start].copy()
    for _ in range(50 * n + 100):
        j = int(np.argmin(q @ x))
        if x @ x - q[j] @ x <= tol or j in support:
            break
        support.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_minimizer(q[support])
            if np.all(mu > MNP_ZERO):
                lam = mu
                break
            neg = mu <= MNP_ZERO
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = lam[neg] / (lam[neg] - mu[neg])
            theta = float(np.min(np.where(np.isfinite(ratios), ratios, 1.0)))
            theta = min(max(theta, 0.0), 1.0)
            lam = theta * mu + (1.0 - theta) * lam
            keep = lam > MNP_ZERO
            keep[np.argmax(lam)] = True
            support = [s for s, k in zip(support, keep) if k]
            lam = lam[keep] / lam[keep].sum()
        x = lam @ q[support]

    weights = np.zeros(n)
    weights[support] = lam
    weights[weights < MNP_ZERO] = 0.0
    weights /= weights.sum()
    return weights @ pts, weights
