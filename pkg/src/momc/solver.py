"""Weighted total-reward optimisation and per-objective policy evaluation.

The support-point oracle first finds a scheduler maximising ``w . rho`` by
policy iteration, then evaluates every objective under that scheduler.  The
objective evaluations are independent and run on a worker pool.
"""

from __future__ import annotations

import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import NonConvergence, RewardDivergence
from .mdp import (
    DeterministicScheduler,
    RewardVectorFunction,
    SparseMdp,
    induced_chain,
)

WEIGHT_NORM_TOL = 1e-12


@dataclass
class SolverConfig:
    value_tol: float = 1e-10
    max_value_iters: int = 200_000
    policy_improvement_tol: float = 1e-9
    max_policy_iters: int = 1000
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    dense_threshold: int = 2000
    method: str = "auto"  # "auto" | "dense" | "gauss-seidel"

    def __post_init__(self):
        for name in ("value_tol", "policy_improvement_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_value_iters < 1 or self.max_policy_iters < 1 or self.workers < 1:
            raise ValueError("iteration caps and workers must be at least 1")
        if self.method not in ("auto", "dense", "gauss-seidel"):
            raise ValueError(f"unknown solution method {self.method!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def normalize_weights(w: Sequence[float]) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    norm = np.abs(w).sum()
    if norm == 0:
        raise ValueError("weight vector must be nonzero")
    return w / norm


def _check_weights(w, m: int) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (m,):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({m},)")
    if abs(np.abs(w).sum() - 1.0) > WEIGHT_NORM_TOL:
        raise ValueError("weight vector must have unit 1-norm")
    return w


@numba.njit(cache=True, nogil=True)
def _gauss_seidel(indptr, indices, data, r, pinned, x, tol, max_iters):
    n = r.shape[0]
    delta = 0.0
    for it in range(max_iters):
        delta = 0.0
        for s in range(n):
            if pinned[s]:
                continue
            acc = r[s]
            diag = 0.0
            for k in range(indptr[s], indptr[s + 1]):
                j = indices[k]
                if j == s:
                    diag += data[k]
                else:
                    acc += data[k] * x[j]
            new = acc / (1.0 - diag)
            d = abs(new - x[s])
            if d > delta:
                delta = d
            x[s] = new
        if delta <= tol:
            return it + 1, delta
    return -1, delta


def recurrent_states(matrix: sp.csr_matrix) -> np.ndarray:
    """Mask of states lying in a bottom strongly connected component."""
    n = matrix.shape[0]
    ncomp, labels = csgraph.connected_components(matrix, directed=True, connection="strong")
    coo = matrix.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    exits = np.zeros(ncomp, dtype=bool)
    exits[labels[coo.row[leaving]]] = True
    return ~exits[labels] if n else np.zeros(0, dtype=bool)


class ChainSolver:
    """Solves ``x = r + P x`` with x pinned to 0 on recurrent states of ``P``."""

    def __init__(self, matrix: sp.csr_matrix, cfg: SolverConfig):
        self.matrix = matrix
        self.cfg = cfg
        self.pinned = recurrent_states(matrix)
        self.transient = np.flatnonzero(~self.pinned)
        n = matrix.shape[0]
        method = cfg.method
        if method == "auto":
            method = "dense" if n <= cfg.dense_threshold else "gauss-seidel"
        self.method = method
        self._lu = None
        if method == "dense" and len(self.transient):
            sub = matrix[self.transient][:, self.transient].toarray()
            a = np.eye(len(self.transient)) - sub
            self._lu = scipy.linalg.lu_factor(a, check_finite=False)

    def solve(self, r: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        bad = np.flatnonzero(self.pinned & (r != 0))
        if len(bad):
            raise RewardDivergence(
                f"state {int(bad[0])} is recurrent under the scheduler but earns reward {r[bad[0]]}"
            )
        n = len(r)
        x = np.zeros(n)
        if not len(self.transient):
            return x
        if self.method == "dense":
            x[self.transient] = scipy.linalg.lu_solve(self._lu, r[self.transient], check_finite=False)
            return x
        if x0 is not None:
            x[:] = x0
            x[self.pinned] = 0.0
        m = self.matrix
        iters, delta = _gauss_seidel(
            m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data, r,
            self.pinned, x, self.cfg.value_tol, self.cfg.max_value_iters,
        )
        if iters < 0:
            raise NonConvergence(
                f"Gauss-Seidel did not converge in {self.cfg.max_value_iters} sweeps "
                f"(last change {delta:.3e})",
                residual=float(delta),
            )
        return x


def _chain_matrix(mdp: SparseMdp, global_choices: np.ndarray) -> sp.csr_matrix:
    return mdp.matrix[global_choices]


def evaluate_policy(
    mdp: SparseMdp,
    rewards: RewardVectorFunction,
    sched,
    objective: int,
    cfg: Optional[SolverConfig] = None,
) -> float:
    """Expected total reward of one objective from the initial state."""
    return float(policy_values(mdp, rewards, sched, [objective], cfg)[0][mdp.initial_state])


def policy_values(mdp, rewards, sched, objectives=None, cfg=None) -> np.ndarray:
    """Per-state totals, one row per requested objective (parallel over objectives)."""
    cfg = cfg or SolverConfig()
    objectives = range(rewards.m) if objectives is None else objectives
    chain = induced_chain(mdp, sched, rewards)
    solver = ChainSolver(chain.matrix, cfg)
    rows = [chain.state_rewards[i] for i in objectives]
    return np.array(_map(cfg.workers, solver.solve, rows)).reshape(len(rows), mdp.num_states)


def _map(workers: int, fn, items):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass
class PolicyIterationResult:
    scheduler: DeterministicScheduler
    value: float
    state_values: np.ndarray
    iterations: int
    history: list[float]
    chain: Optional[ChainSolver] = None


_STAY_CACHE: "weakref.WeakKeyDictionary[SparseMdp, np.ndarray]" = weakref.WeakKeyDictionary()


def stay_choices(mdp: SparseMdp) -> np.ndarray:
    """Per state, the lowest choice keeping it inside its maximal end component (-1 if none)."""
    cached = _STAY_CACHE.get(mdp)
    if cached is None:
        from .graph import mec_decomposition

        cached = np.full(mdp.num_states, -1, dtype=np.int64)
        for mec in mec_decomposition(mdp).mecs:
            owners = mdp.choice_state[mec.choices]
            # choices are sorted, so the first hit per state is its lowest
            first = np.unique(owners, return_index=True)[1]
            cached[owners[first]] = mec.choices[first]
        _STAY_CACHE[mdp] = cached
    return cached


def policy_iteration(
    mdp: SparseMdp,
    scalar_rewards: np.ndarray,
    cfg: Optional[SolverConfig] = None,
) -> PolicyIterationResult:
    """Maximise the total of a (possibly signed) per-choice reward.

    States inside an end component may also stop, i.e. circulate inside it
    forever for a total of zero.  Stopping is ranked after every real choice
    and, once improvement ends, is realised by the state's lowest staying
    choice.  With that option every policy behaves like a terminating one,
    which is what makes greedy improvement sound under signed rewards.
    """
    cfg = cfg or SolverConfig()
    r = np.asarray(scalar_rewards, dtype=np.float64)
    n = mdp.num_states
    starts = mdp.row_starts[:-1]
    stay = stay_choices(mdp)
    can_stop = stay >= 0
    chosen = starts.copy()
    stopped = np.zeros(n, dtype=bool)
    values = None
    history = []
    choice_ids = np.arange(mdp.num_choices)
    eye = sp.identity(n, format="csr")
    for it in range(1, cfg.max_policy_iters + 1):
        rows = _chain_matrix(mdp, chosen)
        if stopped.any():
            keep = sp.diags((~stopped).astype(np.float64))
            rows = (keep @ rows + sp.diags(stopped.astype(np.float64)) @ eye).tocsr()
        solver = ChainSolver(rows, cfg)
        values = solver.solve(np.where(stopped, 0.0, r[chosen]), values)
        history.append(float(values[mdp.initial_state]))
        q = r + mdp.matrix @ values
        best_real = np.maximum.reduceat(q, starts)
        first_best = np.minimum.reduceat(
            np.where(q >= best_real[mdp.choice_state], choice_ids, mdp.num_choices), starts
        )
        best = np.where(can_stop, np.maximum(best_real, 0.0), best_real)
        current = np.where(stopped, 0.0, q[chosen])
        improve = best > current + cfg.policy_improvement_tol
        if not improve.any():
            final = np.where(stopped, stay, chosen)
            if stopped.any():
                solver = ChainSolver(_chain_matrix(mdp, final), cfg)
            sched = DeterministicScheduler(final - starts)
            return PolicyIterationResult(sched, history[-1], values, it, history, solver)
        to_stop = improve & (best_real < best)
        chosen = np.where(improve & ~to_stop, first_best, chosen)
        stopped = np.where(improve, to_stop, stopped)
    raise NonConvergence(f"policy iteration did not stabilise in {cfg.max_policy_iters} rounds")


def optimal_weighted_scheduler(mdp, rewards, w, cfg=None):
    """Scheduler maximising ``w . rho`` and its scalarised value at the initial state."""
    w = _check_weights(w, rewards.m)
    res = policy_iteration(mdp, rewards.weighted(w), cfg)
    return res.scheduler, res.value


def support_point(mdp, rewards, w, cfg=None):
    """Total-reward vector of a ``w``-optimal scheduler, plus that scheduler.

    ``{y | w.y = w.r}`` supports the achievable set.
    """
    cfg = cfg or SolverConfig()
    w = _check_weights(w, rewards.m)
    res = policy_iteration(mdp, rewards.weighted(w), cfg)
    chosen = res.scheduler.global_choices(mdp)
    solver = res.chain
    rows = [rewards.values[i][chosen] for i in range(rewards.m)]
    values = _map(cfg.workers, solver.solve, rows)
    point = np.array([v[mdp.initial_state] for v in values])
    return point, res.scheduler
