from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momc.errors import RewardDivergence, ShapeMismatch
from momc.graph import (
    check_reward_finiteness,
    mec_decomposition,
    preprocess,
    reachable_restriction,
)
from momc.mdp import (
    DeterministicScheduler,
    MixtureScheduler,
    RandomizedScheduler,
    RewardVectorFunction,
    SparseMdp,
    induced_chain,
    load_scheduler,
    mdp_stats,
    save_scheduler,
    scheduler_from_dict,
)

from .conftest import model, switch_model, two_arm
from .oracles import brute_force_mecs, random_model


# -- induced chains and stats ------------------------------------------------------------

def test_dirac_selection():
    mdp, rw = two_arm()
    chain = induced_chain(mdp, DeterministicScheduler([0, 0]), rw)
    assert chain.matrix.toarray()[0].tolist() == [0.0, 1.0]
    assert chain.state_rewards[:, 0].tolist() == [1.0, 0.0]


@pytest.mark.parametrize("weights, expected", [((0.5, 0.5), (0.5, 0.5)), ((0.25, 0.75), (0.25, 0.75))])
def test_randomised_selection(weights, expected):
    mdp, rw = two_arm()
    chain = induced_chain(mdp, RandomizedScheduler((weights, (1.0,))), rw)
    assert chain.state_rewards[:, 0].tolist() == list(expected)


def test_uniform_randomisation():
    mdp, rw = two_arm()
    chain = induced_chain(mdp, RandomizedScheduler.uniform(mdp), rw)
    assert chain.state_rewards[:, 0].tolist() == [0.5, 0.5]


def test_mixture_has_no_induced_chain():
    mdp, rw = two_arm()
    mix = MixtureScheduler([0.5, 0.5], (DeterministicScheduler([0, 0]), DeterministicScheduler([1, 0])))
    with pytest.raises(TypeError):
        induced_chain(mdp, mix, rw)


def test_scheduler_shape_checked():
    mdp, rw = two_arm()
    with pytest.raises(ShapeMismatch):
        induced_chain(mdp, DeterministicScheduler([2, 0]), rw)
    with pytest.raises(ShapeMismatch):
        induced_chain(mdp, DeterministicScheduler([0]), rw)
    with pytest.raises(ShapeMismatch):
        induced_chain(mdp, RandomizedScheduler(((1.0,), (1.0,))), rw)


def test_stats_two_arm():
    assert mdp_stats(two_arm()[0]).as_tuple() == (2, 3, 3)


def test_negative_rewards_rejected():
    with pytest.raises(Exception):
        RewardVectorFunction(("r",), np.array([[-1.0, 0.0]]))


def test_bad_rows_rejected():
    with pytest.raises(Exception):
        SparseMdp.from_rows([[[(0, 0.5)]]])
    with pytest.raises(Exception):
        SparseMdp.from_rows([[[(3, 1.0)]]])
    with pytest.raises(Exception):
        SparseMdp.from_rows([[]])


# -- serialisation -------------------------------------------------------------------

def test_mdp_round_trip_is_bitwise():
    mdp, _ = random_model_mdp(7)
    again = SparseMdp.from_dict(json.loads(json.dumps(mdp.to_dict())))
    for field in ("row_starts", "trans_starts", "targets", "probs"):
        assert np.array_equal(getattr(mdp, field), getattr(again, field))
    assert again.probs.tobytes() == mdp.probs.tobytes()


def random_model_mdp(seed):
    rows, rewards = random_model(np.random.default_rng(seed))
    return model(rows, rewards)


weights = st.lists(st.floats(1e-6, 1.0, allow_nan=False), min_size=1, max_size=4)


@settings(max_examples=60, deadline=None)
@given(st.lists(weights, min_size=1, max_size=5))
def test_randomised_scheduler_file_round_trip(tmp_path_factory, rows):
    sched = RandomizedScheduler(tuple(np.array(w) / np.sum(w) for w in rows))
    path = tmp_path_factory.mktemp("s") / "sched.json"
    save_scheduler(sched, path)
    back = load_scheduler(path)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(sched.weights_per_state, back.weights_per_state))


@settings(max_examples=60, deadline=None)
@given(weights, st.integers(1, 6), st.randoms(use_true_random=False))
def test_mixture_file_round_trip(tmp_path_factory, w, n, rnd):
    lam = np.array(w) / np.sum(w)
    comps = tuple(DeterministicScheduler([rnd.randrange(3) for _ in range(n)]) for _ in lam)
    mix = MixtureScheduler(lam, comps)
    path = tmp_path_factory.mktemp("m") / "mix.json"
    save_scheduler(mix, path)
    back = load_scheduler(path)
    assert back.weights.tobytes() == mix.weights.tobytes()
    assert all(a == b for a, b in zip(back.components, mix.components))


def test_scheduler_file_declares_size():
    with pytest.raises(ShapeMismatch):
        scheduler_from_dict({"kind": "deterministic", "num_states": 3, "choices": [0, 1]})


# -- reachability ---------------------------------------------------------------------

def test_unreachable_island_removed():
    rows = [
        [[(1, 1.0)]], [[(1, 1.0)]],
        [[(3, 1.0)]], [[(4, 1.0)]], [[(2, 0.5), (1, 0.5)]],
    ]
    mdp, rw = model(rows, [[[1.0], [0.0], [2.0], [3.0], [4.0]]])
    sub, srw, kept = reachable_restriction(mdp, rw)
    assert kept.tolist() == [0, 1]
    assert sub.num_states == 2
    assert srw.values.tolist() == [[1.0, 0.0]]


def test_fully_reachable_is_identity():
    mdp, rw = two_arm()
    sub, srw, kept = reachable_restriction(mdp, rw)
    assert sub is mdp and kept.tolist() == [0, 1]


def test_builder_output_already_reachable():
    mdp, rw, rep = switch_model(6)
    sub, _, kept = reachable_restriction(mdp, rw)
    assert sub.num_states == rep.num_states == len(kept)


# -- end components -------------------------------------------------------------------

def test_two_arm_mec_is_the_sink():
    mecs = mec_decomposition(two_arm()[0])
    assert len(mecs) == 1
    assert mecs.mecs[0].states.tolist() == [1]
    assert mecs.mecs[0].choices.tolist() == [2]


def test_two_state_cycle():
    mdp, _ = model([[[(1, 1.0)]], [[(0, 1.0)]]], [[[0.0], [0.0]]])
    mecs = mec_decomposition(mdp)
    assert [m.states.tolist() for m in mecs.mecs] == [[0, 1]]


@pytest.mark.parametrize("seed", range(60))
def test_mecs_match_subset_enumeration(seed):
    rng = np.random.default_rng(seed)
    rows, rewards = random_model(rng, n_states=int(rng.integers(2, 6)), sink=bool(seed % 2))
    mdp, _ = model(rows, rewards)
    got = []
    for mec in mec_decomposition(mdp).mecs:
        pairs = []
        for c in mec.choices:
            s = int(mdp.choice_state[c])
            pairs.append((s, int(c - mdp.row_starts[s])))
        got.append((mec.states.tolist(), sorted(pairs)))
    assert sorted(got) == sorted(brute_force_mecs(rows))


def test_mec_invariants_on_appendix_model():
    mdp, _, _ = switch_model(6)
    decomp = mec_decomposition(mdp)
    members = decomp.state_to_mec
    for i, mec in enumerate(decomp.mecs):
        assert np.all(members[mec.states] == i)
        for c in mec.choices:
            tgt = mdp.targets[mdp.trans_starts[c]:mdp.trans_starts[c + 1]]
            assert np.all(members[tgt] == i)


# -- finiteness -----------------------------------------------------------------------

def test_two_arm_rewards_finite():
    mdp, rw = two_arm()
    assert check_reward_finiteness(mdp, rw, mec_decomposition(mdp)) is None


def test_reward_on_sink_loop_diverges():
    mdp, _ = two_arm()
    rw = RewardVectorFunction(("ra", "rb"), np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]))
    div = check_reward_finiteness(mdp, rw, mec_decomposition(mdp))
    assert div is not None and div.objective == 1 and div.mec == 0 and div.choice == 2
    with pytest.raises(RewardDivergence):
        preprocess(mdp, rw)


def test_appendix_rewards_finite():
    mdp, rw, _ = switch_model(10)
    pre = preprocess(mdp, rw)
    assert pre.summary()["reward_finite"]
