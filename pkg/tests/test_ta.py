from __future__ import annotations

import itertools
import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momc.errors import (
    AssumptionViolated,
    EmptyCounts,
    StateNameClash,
    TaFormatError,
    UnassignedParameter,
    UnsupportedGuardAtom,
)
from momc.prism import build_mdp, parse_model, resolve_constants
from momc.ta import (
    Edge,
    Empirical,
    Exponential,
    MdpSkeleton,
    ParamTable,
    SkeletonChoice,
    StateKind,
    TimedAutomaton,
    assign_params,
    classify_states,
    compose,
    compose_all,
    convert_to_mdp,
    emit_prism,
    estimate_params,
    guard_probability,
    load_counts,
    load_params,
    load_ta,
    parse_guard,
    threshold_probability,
)
from momc.ta.guards import And, BoolVar, ClockCmp, Not, Or, TRUE, equivalent, exclusive, satisfiable

from .conftest import FIXTURES
from .oracles import guard_truth_table

FIG5 = FIXTURES / "fig5_switch.json"


def sw0():
    return load_ta(FIG5)[0]


def ta(name, states, edges, clocks=("z",), booleans=(), init=None):
    g = lambda text: parse_guard(text, clocks, booleans, {})  # noqa: E731
    es = [Edge(s, g(guard), a, frozenset(r), t) for s, guard, a, r, t in edges]
    return TimedAutomaton(name, list(states), init or states[0], es, clocks, booleans)


def fig5_pipeline():
    auto = sw0()
    skel, table = convert_to_mdp(auto, classify_states(auto))
    explicit, derived = load_params(FIXTURES / "fig5_params.json")
    params = assign_params(table, explicit, derived)
    text = emit_prism(skel, params)
    mdp, rw, rep = build_mdp(resolve_constants(parse_model(text), {}))
    return skel, params, text, mdp, rep


# -- guards ---------------------------------------------------------------------------

def test_guard_parsing():
    g = parse_guard("z < t && !phi", ["z"], ["phi"], {"t": 2})
    assert g == And(ClockCmp("z", "<", Fraction(2)), Not(BoolVar("phi")))
    assert parse_guard("3 > z", ["z"]) == ClockCmp("z", "<", Fraction(3))
    assert parse_guard("", ["z"]) == TRUE
    assert isinstance(parse_guard("z != 1", ["z"]), Or)


@pytest.mark.parametrize("text", ["z < y", "y >= z"])
def test_clock_to_clock_rejected(text):
    with pytest.raises(UnsupportedGuardAtom):
        parse_guard(text, ["z", "y"])


@pytest.mark.parametrize("text", ["z < w", "z <", "phi && (", "z < -1", "z # 1"])
def test_malformed_guards(text):
    with pytest.raises(TaFormatError):
        parse_guard(text, ["z"], ["phi"])


def test_equality_is_closed_singleton():
    lt, eq = parse_guard("z < 1", ["z"]), parse_guard("z = 1", ["z"])
    assert exclusive(lt, eq)
    assert not exclusive(parse_guard("z <= 1", ["z"]), eq)


BOOLS = ("a", "b", "c")
CLOCKS = ("x", "y")

atom = st.one_of(
    st.just(TRUE),
    st.sampled_from(BOOLS).map(BoolVar),
    st.builds(ClockCmp, st.sampled_from(CLOCKS), st.sampled_from(["<", "<=", "=", ">=", ">"]),
              st.integers(0, 3).map(Fraction)),
)
guards = st.recursive(
    atom,
    lambda kids: st.one_of(st.builds(Not, kids), st.builds(And, kids, kids), st.builds(Or, kids, kids)),
    max_leaves=6,
)


def table(g):
    return guard_truth_table(g, BOOLS, CLOCKS, 3)


@settings(max_examples=400, deadline=None)
@given(guards)
def test_satisfiability_matches_truth_table(g):
    assert satisfiable(g) == bool(table(g).any())


@settings(max_examples=400, deadline=None)
@given(guards, guards)
def test_pairwise_relations_match_truth_table(g, h):
    tg, th = table(g), table(h)
    assert exclusive(g, h) == (not np.any(tg & th))
    assert equivalent(g, h) == bool(np.all(tg == th))
    assert exclusive(g, h) == exclusive(h, g)
    assert equivalent(g, h) == equivalent(h, g)


# -- classification -------------------------------------------------------------------

def test_fig5_classification():
    kinds = classify_states(sw0())
    assert kinds["s_c"] is StateKind.BRANCHING
    assert kinds["s_s3"] is StateKind.BRANCHING
    assert kinds["s0"] is StateKind.CHOICE
    assert kinds.choice == ["s0"]
    assert kinds["s_p1"] is StateKind.SINGLETON


def test_overlapping_guards_violate_assumption():
    auto = ta("A", ["q", "r"], [("q", "z < 1", "a", (), "r"), ("q", "z < 2", "b", (), "r")])
    with pytest.raises(AssumptionViolated) as info:
        classify_states(auto)
    assert info.value.state == "q"


def test_mixed_exclusive_and_equivalent_pairs_rejected():
    auto = ta("A", ["q", "r"], [("q", "z < 1", "a", (), "r"), ("q", "z < 1", "b", (), "r"),
                                ("q", "z >= 1", "c", (), "r")])
    with pytest.raises(AssumptionViolated):
        classify_states(auto)


@settings(max_examples=40, deadline=None)
@given(st.permutations(range(4)))
def test_classification_ignores_edge_order(order):
    auto = sw0()
    s_edges = [auto.edges[i] for i in order] + auto.edges[4:]
    again = TimedAutomaton(auto.name, auto.states, auto.initial, s_edges, auto.clocks, auto.booleans)
    assert classify_states(again).kinds == classify_states(auto).kinds


# -- composition ----------------------------------------------------------------------

def edge_set(auto):
    return {(e.source, e.action, e.target, e.resets) for e in auto.edges}


def strip(name):
    return name.split(".")[0]


def test_single_state_automaton_is_neutral():
    base = sw0()
    unit = ta("U", ["u"], [])
    prod = compose(base, unit)
    assert all(s.endswith(".u") for s in prod.states)
    assert sorted(strip(s) for s in prod.states) == sorted(base.states)
    assert {(strip(a), x, strip(b), r) for a, x, b, r in edge_set(prod)} == edge_set(base)
    assert prod.invariants == {"s_c.u": base.invariants["s_c"]}


def test_idle_self_loop_only_adds_idle_edges():
    base = sw0()
    prod = compose(base, ta("U", ["u"], [("u", "true", "idle", (), "u")]))
    real = {(strip(a), x, strip(b), r) for a, x, b, r in edge_set(prod) if x != "idle"}
    assert real == edge_set(base)
    assert sum(e.action == "idle" for e in prod.edges) == len(base.states)


def test_common_action_conjoins_guards():
    a = ta("A", ["p0", "p1"], [("p0", "z < 1", "go", ("z",), "p1")])
    b = ta("B", ["q0", "q1"], [("q0", "z < 2", "go", (), "q1")])
    prod = compose(a, b)
    (e,) = prod.edges
    assert equivalent(e.guard, parse_guard("z < 1 && z < 2", ["z"]))
    assert e.target == "p1.q1" and e.resets == frozenset({"z"})


def test_counter_product_by_hand():
    # counter advanced by either active action; blocks after two cycles
    counter = ta("TS", ["t0", "t1", "t2"], [
        ("t0", "true", "act_p", (), "t1"), ("t0", "true", "act_s", (), "t1"),
        ("t1", "true", "act_p", (), "t2"), ("t1", "true", "act_s", (), "t2"),
    ])
    prod = compose(sw0(), counter)
    by_level = {}
    for s in prod.states:
        left, right = s.split(".")
        by_level.setdefault(right, set()).add(left)
    assert by_level["t0"] == {"s0", "s_c", "s_p1", "s_s1", "s_s2"}
    everything = set(sw0().states)
    assert by_level["t1"] == everything
    assert by_level["t2"] == everything
    assert len(prod.states) == 21
    for e in prod.edges:
        if e.action in ("act_p", "act_s"):
            lvl = int(e.source.split(".")[1][1])
            assert e.target.endswith(f".t{lvl + 1}")
        else:
            assert e.source.split(".")[1] == e.target.split(".")[1]
    assert not prod.outgoing("s_p1.t2")


def test_declared_but_unused_action_blocks_partner():
    a = ta("A", ["p0", "p1"], [("p0", "true", "go", (), "p1")])
    silent = TimedAutomaton("B", ["q0"], "q0", [], ("z",), (), {}, frozenset({"go"}))
    assert compose(a, silent).edges == []
    assert len(compose(a, ta("C", ["r0"], [])).edges) == 1


def test_state_name_clash():
    with pytest.raises(StateNameClash):
        compose(sw0(), sw0())


def random_ta(rng, tag):
    n = rng.randint(1, 3)
    states = [f"{tag}{i}" for i in range(n)]
    actions = ["a", "b", "c", f"own_{tag}"]
    edges = []
    for s in states:
        for act in rng.sample(actions, rng.randint(0, 3)):
            guard = rng.choice(["true", "z < 1", "z >= 1", "phi", "!phi"])
            edges.append((s, guard, act, ("z",) if rng.random() < 0.3 else (), rng.choice(states)))
    return ta(tag.upper(), states, edges, booleans=("phi",))


def same_up_to_guard_form(x, y):
    assert sorted(x.states) == sorted(y.states)
    assert x.initial == y.initial
    ex = sorted(x.edges, key=lambda e: (e.source, e.action, e.target))
    ey = sorted(y.edges, key=lambda e: (e.source, e.action, e.target))
    assert [(e.source, e.action, e.target, e.resets) for e in ex] == [(e.source, e.action, e.target, e.resets) for e in ey]
    assert all(equivalent(e.guard, f.guard) for e, f in zip(ex, ey))


@pytest.mark.parametrize("seed", range(25))
def test_composition_is_associative(seed):
    rng = random.Random(seed)
    a, b, c = random_ta(rng, "p"), random_ta(rng, "q"), random_ta(rng, "r")
    same_up_to_guard_form(compose(compose(a, b), c), compose(a, compose(b, c)))
    assert compose_all([a, b, c]).states == compose(compose(a, b), c).states


# -- conversion -----------------------------------------------------------------------

def test_fig5_conversion():
    auto = sw0()
    skel, table = convert_to_mdp(auto, classify_states(auto))
    assert skel.num_states == 11
    assert len(skel.fresh) == 3
    assert sorted(table.groups) == ["s_c", "s_s3"]
    s0 = skel.choices[skel.index("s0")]
    assert [c.label for c in s0] == ["conf1", "conf2", "conf3", "conf4"]
    sc = skel.choices[skel.index("s_c")]
    assert len(sc) == 1 and {p for _, p in sc[0].branches} == {"p__s_c__obs", "p__s_c__tau"}


def test_conversion_without_branching():
    auto = ta("A", ["p", "q"], [("p", "true", "a", (), "q"), ("p", "true", "b", (), "p"), ("q", "true", "c", (), "p")])
    skel, table = convert_to_mdp(auto)
    assert skel.num_states == 2 and not table.groups
    got = {(skel.states[i], c.label, skel.states[c.branches[0][0]]) for i, cs in enumerate(skel.choices) for c in cs}
    assert got == {(e.source, e.action, e.target) for e in auto.edges}


def test_three_way_branching():
    auto = ta("A", ["q", "r"], [("q", "z < 1", "lo", (), "r"), ("q", "z >= 1 && z < 2", "mid", (), "r"),
                                ("q", "z >= 2", "hi", (), "r"), ("r", "true", "back", (), "q")])
    skel, table = convert_to_mdp(auto)
    assert len(skel.fresh) == 3 and len(table.groups["q"]) == 3
    params = assign_params(table, {"p__q__lo": 0.2, "p__q__mid": 0.3, "p__q__hi": 0.5})
    assert math.fsum(params.values[p] for p in table.groups["q"]) == 1.0


# -- probabilities and estimation ----------------------------------------------------------

def test_exponential_threshold():
    g = parse_guard("z < 0.2", ["z"])
    assert guard_probability(g, Exponential(0.2)) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert guard_probability(g, Exponential(0.2)) == pytest.approx(0.632121, abs=1e-6)


@pytest.mark.parametrize("dist", [Exponential(0.2), Exponential(50.0), Empirical((0.1, 0.3, 5e6))])
def test_infinite_threshold(dist):
    assert threshold_probability("<", math.inf, dist) == 1.0


def test_empirical_counting():
    assert guard_probability(parse_guard("z < 0.2", ["z"]), Empirical((0.1, 0.3, 0.5))) == pytest.approx(1 / 3)
    assert guard_probability(parse_guard("z >= 0.2", ["z"]), Empirical((0.1, 0.3, 0.5))) == pytest.approx(2 / 3)


def test_probability_needs_single_threshold():
    with pytest.raises(UnsupportedGuardAtom):
        guard_probability(parse_guard("phi", [], ["phi"]), Exponential(1.0))


def entry_table():
    auto = ta("E", ["q", "r"], [("q", "x", "enter_pri", (), "r"), ("q", "!x", "enter_sec", (), "r"),
                                ("r", "true", "back", (), "q")], clocks=(), booleans=("x",))
    return convert_to_mdp(auto)[1]


def test_estimate_ratio():
    est = estimate_params({("q", "enter_pri"): 80, ("q", "enter_sec"): 20}, entry_table())
    assert est == {"p__q__enter_pri": 0.8, "p__q__enter_sec": 0.2}


def test_estimate_laplace():
    est = estimate_params({("q", "enter_pri"): 20, ("q", "enter_sec"): 80}, entry_table(), alpha=1)
    assert est["p__q__enter_pri"] == pytest.approx(21 / 102) and est["p__q__enter_sec"] == pytest.approx(81 / 102)


def test_estimate_empty_counts():
    with pytest.raises(EmptyCounts):
        estimate_params({("q", "enter_pri"): 0, ("q", "enter_sec"): 0}, entry_table())


def test_counts_file(tmp_path):
    path = tmp_path / "counts.csv"
    path.write_text("state,action,count\nq,enter_pri,30\nq,enter_sec,10\nq,enter_pri,10\n")
    assert load_counts(path) == {("q", "enter_pri"): 40.0, ("q", "enter_sec"): 10.0}


def test_params_file_distribution_entries(tmp_path):
    path = tmp_path / "params.json"
    (tmp_path / "delays.txt").write_text("0.1 0.3\n0.5")
    path.write_text(json.dumps({
        "a": 0.25,
        "b": {"dist": "exponential", "scale": 0.2, "threshold": 0.2, "form": "z<t"},
        "c": {"dist": "empirical", "file": "delays.txt", "threshold": 0.2, "form": "z>=t"},
    }))
    explicit, derived = load_params(path)
    assert explicit == {"a": 0.25}
    assert derived["b"] == pytest.approx(0.632121, abs=1e-6)
    assert derived["c"] == pytest.approx(2 / 3)


# -- emission ---------------------------------------------------------------------------

def test_emit_single_self_loop():
    skel = MdpSkeleton(["q"], 0, [[SkeletonChoice("tau", ((0, 1.0),))]])
    text = emit_prism(skel, ParamTable())
    assert "module M" in text and "s : [0..0] init 0;" in text
    assert "[tau] s=0 -> (s'=0);" in text
    mdp, _, rep = build_mdp(resolve_constants(parse_model(text), {}))
    assert (rep.num_states, rep.num_choices, rep.num_transitions) == (1, 1, 1)


def test_emit_requires_all_parameters():
    auto = sw0()
    skel, table = convert_to_mdp(auto)
    partial = assign_params(table, {"p__s_s3__re_s": 0.3, "p__s_s3__ex_s": 0.7, "p__s_c__tau": 0.5})
    with pytest.raises(UnassignedParameter) as info:
        emit_prism(skel, partial)
    assert "p__s_c__obs" in str(info.value)


def test_fig5_round_trip_is_isomorphic():
    skel, params, _, mdp, rep = fig5_pipeline()
    assert rep.num_states == 11
    # the single variable s names the skeleton state, giving the bijection
    to_skel = [vals[0] for vals in rep.valuations]
    assert to_skel[mdp.initial_state] == skel.initial
    assert sorted(to_skel) == list(range(11))
    for s in range(mdp.num_states):
        k = to_skel[s]
        got = set()
        for c in range(mdp.row_starts[s], mdp.row_starts[s + 1]):
            lo, hi = mdp.trans_starts[c], mdp.trans_starts[c + 1]
            dist = tuple(sorted((to_skel[t], p) for t, p in zip(mdp.targets[lo:hi], mdp.probs[lo:hi])))
            got.add((mdp.action_labels[c], dist))
        want = set()
        for ch in skel.choices[k]:
            dist = []
            for t, p in ch.branches:
                v = params.values[p] if isinstance(p, str) else p
                if v > 0:
                    dist.append((t, v))
            want.add((ch.label, tuple(sorted(dist))))
        assert len(got) == len(want)
        for (la, da), (lb, db) in zip(sorted(got), sorted(want)):
            assert la == lb and [t for t, _ in da] == [t for t, _ in db]
            assert all(abs(p - q) <= 1e-12 for (_, p), (_, q) in zip(da, db))


def test_branching_parameters_sum_to_one_after_assignment():
    skel, params, *_ = fig5_pipeline()
    for ps in params.groups.values():
        assert abs(math.fsum(params.values[p] for p in ps) - 1.0) <= 1e-9


def test_pipeline_is_deterministic():
    first, second = fig5_pipeline(), fig5_pipeline()
    assert first[2] == second[2]
    drop = {"build_time_ms": 0}
    assert first[4].summary() | drop == second[4].summary() | drop


def test_invariants_are_carried_as_comments():
    _, _, text, _, _ = fig5_pipeline()
    assert "invariant z <= 1" in text


def test_duplicate_edge_per_action_rejected():
    with pytest.raises(TaFormatError):
        ta("A", ["p"], [("p", "true", "a", (), "p"), ("p", "z < 1", "a", (), "p")])


def test_ta_file_errors(tmp_path):
    from momc.ta import parse_ta

    with pytest.raises(TaFormatError):
        parse_ta({"automata": []})
    with pytest.raises(TaFormatError):
        parse_ta({"clocks": ["z"], "booleans": ["z"], "automata": [{"states": ["s"]}]})
    with pytest.raises(TaFormatError):
        parse_ta({"automata": [{"states": ["s"], "edges": [{"from": "s", "action": "a"}]}]})
    bad = tmp_path / "x.json"
    bad.write_text("{")
    with pytest.raises(TaFormatError):
        load_ta(bad)


def test_guard_with_all_boolean_assignments():
    # exhaustive check on a fixed guard family, independent of hypothesis
    for ops in itertools.product(["<", "<=", "=", ">=", ">"], repeat=2):
        g = parse_guard(f"z {ops[0]} 1", ["z"])
        h = parse_guard(f"z {ops[1]} 1", ["z"])
        tg = guard_truth_table(g, (), ("z",), 2)
        th = guard_truth_table(h, (), ("z",), 2)
        assert exclusive(g, h) == (not np.any(tg & th))
