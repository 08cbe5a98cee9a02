"""Graph preprocessing: reachability, maximal end components, reward finiteness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import RewardDivergence
from .mdp import RewardVectorFunction, SparseMdp


def _state_graph(mdp: SparseMdp, choice_mask: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """State adjacency induced by the (optionally masked) choices."""
    src = np.repeat(mdp.choice_state, np.diff(mdp.trans_starts))
    dst = mdp.targets
    if choice_mask is not None:
        keep = np.repeat(choice_mask, np.diff(mdp.trans_starts))
        src, dst = src[keep], dst[keep]
    n = mdp.num_states
    return sp.csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))


def reachable_states(mdp: SparseMdp, start: Optional[int] = None) -> np.ndarray:
    start = mdp.initial_state if start is None else start
    order = csgraph.breadth_first_order(_state_graph(mdp), start, directed=True, return_predecessors=False)
    return np.sort(order)


def reachable_restriction(mdp: SparseMdp, rewards: RewardVectorFunction):
    """Drop states not reachable from the initial state.

    Returns ``(mdp', rewards', kept)`` where ``kept[i]`` is the original index
    of new state ``i``.
    """
    kept = reachable_states(mdp)
    if len(kept) == mdp.num_states:
        return mdp, rewards, kept
    new_index = np.full(mdp.num_states, -1, dtype=np.int64)
    new_index[kept] = np.arange(len(kept))
    choice_ids = np.concatenate([np.arange(mdp.row_starts[s], mdp.row_starts[s + 1]) for s in kept])
    counts = np.diff(mdp.trans_starts)[choice_ids]
    trans_ids = np.concatenate([np.arange(mdp.trans_starts[c], mdp.trans_starts[c + 1]) for c in choice_ids])
    restricted = SparseMdp(
        len(kept),
        int(new_index[mdp.initial_state]),
        np.concatenate([[0], np.cumsum(mdp.choice_counts[kept])]),
        np.concatenate([[0], np.cumsum(counts)]),
        new_index[mdp.targets[trans_ids]],
        mdp.probs[trans_ids],
        tuple(mdp.action_labels[c] for c in choice_ids),
    )
    restricted.validate()
    return restricted, RewardVectorFunction(rewards.names, rewards.values[:, choice_ids]), kept


@dataclass(frozen=True)
class EndComponent:
    states: np.ndarray  # sorted state indices
    choices: np.ndarray  # global choice indices staying inside


@dataclass(frozen=True)
class MecDecomposition:
    mecs: tuple[EndComponent, ...]
    state_to_mec: np.ndarray  # -1 when a state is in no MEC

    def __len__(self) -> int:
        return len(self.mecs)

    @property
    def staying_choices(self) -> np.ndarray:
        if not self.mecs:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([m.choices for m in self.mecs])


def mec_decomposition(mdp: SparseMdp) -> MecDecomposition:
    """Maximal end components by iterated SCC refinement.

    Choices with a successor outside their state's SCC are discarded, states
    left without choices drop out, and SCCs are recomputed until nothing changes.
    """
    n = mdp.num_states
    allowed = np.ones(mdp.num_choices, dtype=bool)
    trans_choice = np.repeat(np.arange(mdp.num_choices), np.diff(mdp.trans_starts))
    while True:
        alive = np.zeros(n, dtype=bool)
        alive[mdp.choice_state[allowed]] = True
        _, labels = csgraph.connected_components(_state_graph(mdp, allowed), directed=True, connection="strong")
        labels = np.where(alive, labels, -1 - np.arange(n))
        src_label = labels[mdp.choice_state[trans_choice]]
        ok = (src_label == labels[mdp.targets]) & (src_label >= 0)
        still = allowed & (np.minimum.reduceat(ok, mdp.trans_starts[:-1]) if len(ok) else allowed)
        if np.array_equal(still, allowed):
            break
        allowed = still

    alive = np.zeros(n, dtype=bool)
    alive[mdp.choice_state[allowed]] = True
    groups: dict[int, list[int]] = {}
    for s in np.flatnonzero(alive):
        groups.setdefault(int(labels[s]), []).append(int(s))
    ordered = sorted(groups.values(), key=lambda states: states[0])
    state_to_mec = np.full(n, -1, dtype=np.int64)
    mecs = []
    for i, states in enumerate(ordered):
        states_arr = np.array(states, dtype=np.int64)
        state_to_mec[states_arr] = i
        choices = np.concatenate([np.flatnonzero(allowed[mdp.row_starts[s]:mdp.row_starts[s + 1]]) + mdp.row_starts[s] for s in states])
        mecs.append(EndComponent(states_arr, np.sort(choices).astype(np.int64)))
    return MecDecomposition(tuple(mecs), state_to_mec)


@dataclass(frozen=True)
class Divergence:
    objective: int
    objective_name: str
    mec: int
    choice: int
    reward: float

    def __str__(self) -> str:
        return (
            f"objective {self.objective_name!r} has reward {self.reward} on choice {self.choice} "
            f"staying inside end component {self.mec}; its total reward can be infinite"
        )


def check_reward_finiteness(
    mdp: SparseMdp, rewards: RewardVectorFunction, mecs: MecDecomposition
) -> Optional[Divergence]:
    """``None`` when every MEC staying-choice has zero reward in every objective."""
    rewards.check(mdp)
    for mi, mec in enumerate(mecs.mecs):
        vals = rewards.values[:, mec.choices]
        bad = np.argwhere(vals != 0)
        if len(bad):
            # first offending choice, then first objective on it
            k = bad[np.lexsort((bad[:, 0], bad[:, 1]))][0]
            obj, c = int(k[0]), int(mec.choices[k[1]])
            return Divergence(obj, rewards.names[obj], mi, c, float(vals[k[0], k[1]]))
    return None


@dataclass(frozen=True)
class Preprocessed:
    mdp: SparseMdp
    rewards: RewardVectorFunction
    kept_states: np.ndarray
    mecs: MecDecomposition

    def summary(self) -> dict:
        return {
            "reachable_states": int(self.mdp.num_states),
            "num_mecs": len(self.mecs),
            "mec_states": int(sum(len(m.states) for m in self.mecs.mecs)),
            "reward_finite": True,
        }


def preprocess(mdp: SparseMdp, rewards: RewardVectorFunction) -> Preprocessed:
    """Reachability restriction + MEC decomposition + finiteness check (raises on divergence)."""
    mdp, rewards, kept = reachable_restriction(mdp, rewards)
    mecs = mec_decomposition(mdp)
    div = check_reward_finiteness(mdp, rewards, mecs)
    if div is not None:
        raise RewardDivergence(f"reward finiteness check failed: {div}")
    return Preprocessed(mdp, rewards, kept, mecs)


def lift_scheduler(sched, kept: np.ndarray, num_states: int):
    """Re-express a scheduler of the restricted model over the original states.

    Dropped states are unreachable, so they take their first choice.
    """
    from .mdp import DeterministicScheduler, MixtureScheduler

    if len(kept) == num_states:
        return sched
    if isinstance(sched, MixtureScheduler):
        return MixtureScheduler(sched.weights, tuple(lift_scheduler(c, kept, num_states) for c in sched.components))
    if isinstance(sched, DeterministicScheduler):
        choices = np.zeros(num_states, dtype=np.int64)
        choices[kept] = sched.choices
        return DeterministicScheduler(choices)
    raise TypeError(f"cannot lift {type(sched).__name__}")
