"""Explicit sparse MDPs, reward vectors and schedulers."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import MomcError, ShapeMismatch

ROW_TOL = 1e-9


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SparseMdp:
    """MDP with globally indexed choices.

    ``row_starts[s]:row_starts[s+1]`` are the choices of state ``s``;
    ``trans_starts[c]:trans_starts[c+1]`` index the (target, probability)
    entries of choice ``c``.
    """

    num_states: int
    initial_state: int
    row_starts: np.ndarray
    trans_starts: np.ndarray
    targets: np.ndarray
    probs: np.ndarray
    action_labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "row_starts", _frozen(self.row_starts, np.int64))
        object.__setattr__(self, "trans_starts", _frozen(self.trans_starts, np.int64))
        object.__setattr__(self, "targets", _frozen(self.targets, np.int64))
        object.__setattr__(self, "probs", _frozen(self.probs, np.float64))
        labels = tuple(self.action_labels) or (None,) * self.num_choices
        object.__setattr__(self, "action_labels", labels)

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Sequence[Sequence[tuple[int, float]]]],
        initial_state: int = 0,
        labels: Optional[Sequence[Sequence[Optional[str]]]] = None,
    ) -> "SparseMdp":
        """Build from ``rows[state][choice] = [(target, prob), ...]``."""
        row_starts, trans_starts, targets, probs, flat_labels = [0], [0], [], [], []
        for s, choices in enumerate(rows):
            for k, dist in enumerate(choices):
                merged: dict[int, float] = {}
                for t, p in dist:
                    merged[int(t)] = merged.get(int(t), 0.0) + float(p)
                targets.extend(merged)
                probs.extend(merged.values())
                trans_starts.append(len(targets))
                flat_labels.append(labels[s][k] if labels is not None else None)
            row_starts.append(row_starts[-1] + len(choices))
        mdp = cls(len(rows), initial_state, row_starts, trans_starts, targets, probs, tuple(flat_labels))
        mdp.validate()
        return mdp

    @property
    def num_choices(self) -> int:
        return len(self.trans_starts) - 1

    @property
    def num_transitions(self) -> int:
        return len(self.targets)

    def choices_of(self, state: int) -> range:
        return range(int(self.row_starts[state]), int(self.row_starts[state + 1]))

    def num_choices_of(self, state: int) -> int:
        return int(self.row_starts[state + 1] - self.row_starts[state])

    @cached_property
    def choice_counts(self) -> np.ndarray:
        return np.diff(self.row_starts)

    @cached_property
    def choice_state(self) -> np.ndarray:
        """Owning state of every choice."""
        return np.repeat(np.arange(self.num_states), self.choice_counts)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Choice-by-state transition matrix."""
        m = sp.csr_matrix(
            (self.probs, self.targets, self.trans_starts),
            shape=(self.num_choices, self.num_states),
            copy=True,
        )
        m.sum_duplicates()
        return m

    def row(self, choice: int) -> list[tuple[int, float]]:
        lo, hi = self.trans_starts[choice], self.trans_starts[choice + 1]
        return [(int(t), float(p)) for t, p in zip(self.targets[lo:hi], self.probs[lo:hi])]

    def validate(self) -> None:
        if self.num_states < 1:
            raise MomcError("an MDP needs at least one state")
        if not 0 <= self.initial_state < self.num_states:
            raise MomcError(f"initial state {self.initial_state} out of range")
        if len(self.row_starts) != self.num_states + 1 or self.row_starts[0] != 0:
            raise MomcError("row_starts has the wrong shape")
        if np.any(np.diff(self.row_starts) < 1):
            raise MomcError("every state needs at least one choice")
        if self.row_starts[-1] != self.num_choices:
            raise MomcError("row_starts does not cover all choices")
        if len(self.action_labels) != self.num_choices:
            raise MomcError("one action label per choice is required")
        if len(self.targets) and (self.targets.min() < 0 or self.targets.max() >= self.num_states):
            raise MomcError("transition target out of range")
        if np.any(self.probs <= 0) or np.any(self.probs > 1 + ROW_TOL):
            raise MomcError("transition probabilities must lie in (0,1]")
        sums = np.add.reduceat(self.probs, self.trans_starts[:-1]) if len(self.probs) else np.array([])
        if np.any(np.diff(self.trans_starts) < 1) or np.any(np.abs(sums - 1.0) > ROW_TOL):
            raise MomcError("every choice must be a distribution summing to 1")

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "initial_state": self.initial_state,
            "row_starts": self.row_starts.tolist(),
            "trans_starts": self.trans_starts.tolist(),
            "targets": self.targets.tolist(),
            "probs": self.probs.tolist(),
            "action_labels": list(self.action_labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SparseMdp":
        mdp = cls(
            d["num_states"], d["initial_state"], d["row_starts"], d["trans_starts"],
            d["targets"], d["probs"], tuple(d["action_labels"]),
        )
        mdp.validate()
        return mdp


@dataclass(frozen=True, eq=False)
class RewardVectorFunction:
    names: tuple[str, ...]
    values: np.ndarray  # shape (m, num_choices)

    def __post_init__(self):
        vals = np.atleast_2d(np.array(self.values, dtype=np.float64))
        if vals.shape[0] != len(self.names):
            raise ShapeMismatch("one reward array per objective name is required")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise MomcError("rewards must be finite and nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return len(self.names)

    @property
    def num_choices(self) -> int:
        return self.values.shape[1]

    def check(self, mdp: SparseMdp) -> None:
        if self.num_choices != mdp.num_choices:
            raise ShapeMismatch(
                f"reward arrays cover {self.num_choices} choices, MDP has {mdp.num_choices}"
            )

    def select(self, names: Sequence[str]) -> "RewardVectorFunction":
        idx = []
        for n in names:
            if n not in self.names:
                raise KeyError(f"unknown reward structure {n!r}")
            idx.append(self.names.index(n))
        return RewardVectorFunction(tuple(names), self.values[idx])

    def weighted(self, w: Sequence[float]) -> np.ndarray:
        return np.asarray(w, dtype=np.float64) @ self.values


# -- schedulers ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DeterministicScheduler:
    """``choices[s]`` is the offset of the selected choice within state s's row group."""

    choices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "choices", _frozen(self.choices, np.int64))

    @property
    def num_states(self) -> int:
        return len(self.choices)

    def check(self, mdp: SparseMdp) -> None:
        if self.num_states != mdp.num_states:
            raise ShapeMismatch(f"scheduler covers {self.num_states} states, MDP has {mdp.num_states}")
        if np.any(self.choices < 0) or np.any(self.choices >= mdp.choice_counts):
            raise ShapeMismatch("scheduler selects a choice outside a state's row group")

    def global_choices(self, mdp: SparseMdp) -> np.ndarray:
        return mdp.row_starts[:-1] + self.choices

    def __eq__(self, other):
        return isinstance(other, DeterministicScheduler) and np.array_equal(self.choices, other.choices)

    def __hash__(self):
        return hash(self.choices.tobytes())

    def to_dict(self) -> dict:
        return {"kind": "deterministic", "num_states": self.num_states, "choices": self.choices.tolist()}


@dataclass(frozen=True, eq=False)
class RandomizedScheduler:
    weights_per_state: tuple

    def __post_init__(self):
        rows = tuple(_frozen(w, np.float64) for w in self.weights_per_state)
        for s, w in enumerate(rows):
            if np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
                raise MomcError(f"state {s}: scheduler weights must be a distribution")
        object.__setattr__(self, "weights_per_state", rows)

    @property
    def num_states(self) -> int:
        return len(self.weights_per_state)

    def check(self, mdp: SparseMdp) -> None:
        if self.num_states != mdp.num_states:
            raise ShapeMismatch(f"scheduler covers {self.num_states} states, MDP has {mdp.num_states}")
        for s, w in enumerate(self.weights_per_state):
            if len(w) != mdp.num_choices_of(s):
                raise ShapeMismatch(f"state {s}: {len(w)} weights for {mdp.num_choices_of(s)} choices")

    def choice_weights(self, mdp: SparseMdp) -> np.ndarray:
        """Weight of every global choice."""
        self.check(mdp)
        return np.concatenate(self.weights_per_state)

    @classmethod
    def uniform(cls, mdp: SparseMdp) -> "RandomizedScheduler":
        return cls(tuple(np.full(n, 1.0 / n) for n in mdp.choice_counts))

    def to_dict(self) -> dict:
        return {
            "kind": "randomized",
            "num_states": self.num_states,
            "weights_per_state": [w.tolist() for w in self.weights_per_state],
        }


@dataclass(frozen=True, eq=False)
class MixtureScheduler:
    """Pick component i with probability ``weights[i]`` at time zero, then follow it."""

    weights: np.ndarray
    components: tuple[DeterministicScheduler, ...]

    def __post_init__(self):
        w = _frozen(self.weights, np.float64)
        comps = tuple(self.components)
        if not comps or len(w) != len(comps):
            raise MomcError("a mixture needs one weight per (at least one) component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > ROW_TOL:
            raise MomcError("mixture weights must be a distribution")
        if len({c.num_states for c in comps}) != 1:
            raise ShapeMismatch("mixture components disagree on the number of states")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def num_states(self) -> int:
        return self.components[0].num_states

    def check(self, mdp: SparseMdp) -> None:
        for c in self.components:
            c.check(mdp)

    def to_dict(self) -> dict:
        return {
            "kind": "mixture",
            "num_states": self.num_states,
            "components": [
                {"weight": float(w), "choices": c.choices.tolist()}
                for w, c in zip(self.weights, self.components)
            ],
        }


Scheduler = Union[DeterministicScheduler, RandomizedScheduler, MixtureScheduler]


def scheduler_from_dict(d: dict) -> Scheduler:
    kind = d.get("kind")
    n = d.get("num_states")
    if kind == "deterministic":
        s = DeterministicScheduler(d["choices"])
    elif kind == "randomized":
        s = RandomizedScheduler(tuple(d["weights_per_state"]))
    elif kind == "mixture":
        comps = d["components"]
        s = MixtureScheduler(
            [c["weight"] for c in comps], tuple(DeterministicScheduler(c["choices"]) for c in comps)
        )
    else:
        raise MomcError(f"unknown scheduler kind {kind!r}")
    if n is not None and s.num_states != n:
        raise ShapeMismatch(f"scheduler file declares {n} states but lists {s.num_states}")
    return s


def save_scheduler(sched: Scheduler, path) -> None:
    # json writes floats with repr(), which round-trips doubles exactly.
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sched.to_dict(), fh)


def load_scheduler(path) -> Scheduler:
    with open(path, encoding="utf-8") as fh:
        return scheduler_from_dict(json.load(fh))


# -- induced chains -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarkovChain:
    matrix: sp.csr_matrix  # state-by-state
    state_rewards: np.ndarray  # shape (m, num_states)
    initial_state: int = 0

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]


def _selection_matrix(mdp: SparseMdp, sched) -> sp.csr_matrix:
    """State-by-choice matrix of scheduler weights."""
    n = mdp.num_states
    if isinstance(sched, DeterministicScheduler):
        sched.check(mdp)
        cols = sched.global_choices(mdp)
        return sp.csr_matrix((np.ones(n), cols, np.arange(n + 1)), shape=(n, mdp.num_choices))
    if isinstance(sched, RandomizedScheduler):
        w = sched.choice_weights(mdp)
        return sp.csr_matrix(
            (w, np.arange(mdp.num_choices), mdp.row_starts), shape=(n, mdp.num_choices)
        )
    if isinstance(sched, MixtureScheduler):
        raise TypeError("mixtures have no single induced chain; evaluate their components")
    raise TypeError(f"not a scheduler: {sched!r}")


def induced_chain(
    mdp: SparseMdp, sched, rewards: Optional[RewardVectorFunction] = None
) -> MarkovChain:
    """Markov chain obtained by resolving every state's choice with ``sched``."""
    sel = _selection_matrix(mdp, sched)
    matrix = (sel @ mdp.matrix).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    if rewards is None:
        state_rewards = np.zeros((0, mdp.num_states))
    else:
        rewards.check(mdp)
        state_rewards = np.asarray((sel @ rewards.values.T).T)
    return MarkovChain(matrix, state_rewards, mdp.initial_state)


@dataclass(frozen=True)
class ModelStats:
    num_states: int
    num_choices: int
    num_transitions: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.num_states, self.num_choices, self.num_transitions)


def mdp_stats(mdp: SparseMdp) -> ModelStats:
    return ModelStats(mdp.num_states, mdp.num_choices, mdp.num_transitions)
