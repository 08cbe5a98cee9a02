from __future__ import annotations

import functools
import re
from pathlib import Path

import numpy as np
import pytest

from momc.mdp import RewardVectorFunction, SparseMdp
from momc.prism import BuildOptions, build_mdp, parse_model, resolve_constants

FIXTURES = Path(__file__).parent / "fixtures"

SWITCH_PROBS = [f"p{i}{k}" for k in ("et", "ex", "hw", "ttc", "ol") for i in range(1, 5)]
SWITCH_OBJECTIVES = ["ctrl_cost", "headway_cost", "lane_dep_cost", "ttc_cost"]

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion n")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def model(rows, rewards, names=None, labels=None):
    """SparseMdp and rewards from the nested-list form used by the oracles."""
    mdp = SparseMdp.from_rows(rows, labels=labels)
    flat = [[v for row in obj for v in row] for obj in rewards]
    names = names or [f"r{i}" for i in range(len(rewards))]
    return mdp, RewardVectorFunction(tuple(names), np.array(flat, dtype=float).reshape(len(names), mdp.num_choices))


def two_arm():
    """s0 picks a (reward (1,0)) or b (reward (0,1)); both lead to an absorbing sink."""
    rows = [[[(1, 1.0)], [(1, 1.0)]], [[(1, 1.0)]]]
    rewards = [[[1.0, 0.0], [0.0]], [[0.0, 1.0], [0.0]]]
    return model(rows, rewards, ["ra", "rb"], labels=[["a", "b"], ["done"]])


def chain3():
    rows = [[[(1, 1.0)]], [[(2, 1.0)]], [[(2, 1.0)]]]
    return model(rows, [[[1.0], [2.0], [0.0]]], ["r"])


def branching():
    rows = [[[(1, 0.5), (2, 0.5)]], [[(3, 1.0)]], [[(3, 1.0)]], [[(3, 1.0)]]]
    return model(rows, [[[0.0], [4.0], [0.0], [0.0]]], ["r"])


@pytest.fixture
def two_arm_model():
    return two_arm()


def switch_text(max_ts: int = 40) -> str:
    text = (FIXTURES / "switch_model.prism").read_text()
    return re.sub(r"const int MAX_TS = \d+;", f"const int MAX_TS = {max_ts};", text)


def switch_probs(seed: int = 1) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    return {name: float(rng.uniform(0.1, 0.9)) for name in SWITCH_PROBS}


@functools.lru_cache(maxsize=None)
def switch_model(max_ts: int = 40, seed: int = 1, objectives: tuple = tuple(SWITCH_OBJECTIVES)):
    spec = resolve_constants(parse_model(switch_text(max_ts)), switch_probs(seed))
    return build_mdp(spec, BuildOptions(reward_names=list(objectives)))
