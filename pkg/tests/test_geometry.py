from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from momc.errors import RegionEmpty
from momc.geometry import (
    Box,
    HRep,
    LossSpec,
    LpStatus,
    VRep,
    lp_solve,
    min_norm_point,
    minimize_loss_over_hrep,
)

from .oracles import hull_min, lp_by_vertices, simplex_grid_min

INF = np.inf


def halfspace(normal, offset):
    """``normal . x <= offset`` as a (unit 1-norm normal, anchor) pair."""
    w = np.asarray(normal, dtype=float)
    scale = np.abs(w).sum()
    w = w / scale
    anchor = w * (offset / scale) / (w @ w)
    return w, anchor


# -- LP --------------------------------------------------------------------------------

def test_lp_vertex_on_halfplane():
    h = HRep.from_pairs([([0.5, 0.5], [1.0, 1.0])])
    res = lp_solve(h, Box([0, 0], [INF, INF]), [1.0, 0.0])
    assert res.status is LpStatus.FEASIBLE
    assert res.value == 0.0
    np.testing.assert_allclose(res.point, [0.0, 0.0], atol=1e-12)


def test_lp_contradiction():
    h = HRep.from_pairs([([-1.0, 0.0], [2.0, 0.0])])
    assert lp_solve(h, Box([-INF, -INF], [1, INF]), [1.0, 0.0]).status is LpStatus.INFEASIBLE


def test_lp_box_corner():
    res = lp_solve(HRep(), Box([0, 0], [1, 1]), [1.0, 1.0])
    assert res.value == 0.0
    np.testing.assert_allclose(res.point, [0, 0])


def test_lp_unbounded_ray():
    res = lp_solve(HRep(), Box([0, 0], [INF, 1]), [-1.0, 0.0])
    assert res.status is LpStatus.UNBOUNDED
    assert res.ray[0] > 0


def test_lp_maximise():
    h = HRep.from_pairs([halfspace([1, 1], 1)])
    res = lp_solve(h, Box([0, 0], [INF, INF]), [2.0, 1.0], "max")
    assert res.value == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(120))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 4))
    k = int(rng.integers(1, 7))
    pairs = [halfspace(rng.normal(size=m), rng.normal()) for _ in range(k)]
    lo, hi = -rng.uniform(1, 3, m), rng.uniform(1, 3, m)
    c = rng.normal(size=m)
    sense = "min" if seed % 2 else "max"
    res = lp_solve(HRep.from_pairs(pairs), Box(lo, hi), c, sense)
    a = np.vstack([[w for w, _ in pairs], np.eye(m), -np.eye(m)])
    b = np.concatenate([[w @ r for w, r in pairs], hi, -lo])
    expected = lp_by_vertices(a, b, c, sense)
    if expected is None:
        assert res.status is LpStatus.INFEASIBLE
    else:
        assert res.status is LpStatus.FEASIBLE
        assert res.value == pytest.approx(expected, abs=1e-7)
        assert np.all(a @ res.point <= b + 1e-7)


@pytest.mark.parametrize("seed", range(60))
def test_lp_status_matches_highs_on_open_boxes(seed):
    rng = np.random.default_rng(500 + seed)
    m = int(rng.integers(2, 4))
    pairs = [halfspace(rng.normal(size=m), rng.normal()) for _ in range(int(rng.integers(1, 6)))]
    lo = np.where(rng.random(m) < 0.5, -INF, -1.0)
    hi = np.where(rng.random(m) < 0.5, INF, 1.0)
    c = rng.normal(size=m)
    res = lp_solve(HRep.from_pairs(pairs), Box(lo, hi), c)
    ref = linprog(
        c, A_ub=[w for w, _ in pairs], b_ub=[w @ r for w, r in pairs],
        bounds=[(None if np.isinf(a) else a, None if np.isinf(b) else b) for a, b in zip(lo, hi)],
        method="highs",
    )
    status = {0: LpStatus.FEASIBLE, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[ref.status]
    assert res.status is status
    if status is LpStatus.FEASIBLE:
        assert res.value == pytest.approx(ref.fun, abs=1e-7)


# -- Frank-Wolfe ---------------------------------------------------------------------

def test_fw_projection_onto_line():
    h = HRep.from_pairs([([-0.5, -0.5], [0.5, 0.5])])
    res = minimize_loss_over_hrep(h, Box([0, 0], [10, 10]), LossSpec.point([0, 0]), 1e-12)
    np.testing.assert_allclose(res.point, [0.5, 0.5], atol=1e-6)
    assert res.value == pytest.approx(0.5, abs=1e-9)


def test_fw_nearest_corner():
    res = minimize_loss_over_hrep(HRep(), Box([1, 1], [2, 2]), LossSpec.point([0, 0]), 1e-12)
    np.testing.assert_allclose(res.point, [1, 1])


def test_fw_loss_floor():
    target = Box([-5, -5], [5, 5])
    res = minimize_loss_over_hrep(HRep(), Box([0, 0], [1, 1]), LossSpec.box(target), 1e-12)
    assert res.value == 0.0 and Box([0, 0], [1, 1]).contains(res.point)


def test_fw_empty_region():
    with pytest.raises(RegionEmpty):
        minimize_loss_over_hrep(HRep.from_pairs([([-1.0, 0.0], [2.0, 0.0])]), Box([0, 0], [1, 1]),
                                LossSpec.point([0, 0]), 1e-9)


@pytest.mark.parametrize("seed", range(40))
def test_fw_matches_qp(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 4))
    pts = rng.uniform(0, 4, size=(int(rng.integers(m + 1, 8)), m))
    # outer description of conv(pts) by a few supporting halfspaces in random directions
    pairs = []
    for _ in range(10):
        w = rng.normal(size=m)
        w /= np.abs(w).sum()
        pairs.append((w, pts[np.argmax(pts @ w)]))
    box = Box(rng.uniform(-1, 1, m), rng.uniform(3, 5, m))
    if seed % 3 == 0:
        loss = LossSpec.box(Box(np.full(m, -INF), rng.uniform(0, 2, m)), weights=rng.uniform(0.5, 2, m))
    elif seed % 3 == 1:
        loss = LossSpec.point(rng.uniform(-2, 6, m))
    else:
        loss = LossSpec.point(rng.uniform(-2, 6, m), weights=rng.uniform(0.1, 3, m))
    res = minimize_loss_over_hrep(HRep.from_pairs(pairs), box, loss, 1e-10)

    import cvxpy as cp

    x = cp.Variable(m)
    cons = [np.array([w for w, _ in pairs]) @ x <= np.array([w @ r for w, r in pairs]),
            x >= box.lower, x <= box.upper]
    if loss.target_box is not None:
        obj = cp.sum(cp.multiply(loss.weights, cp.square(cp.pos(x - loss.target_box.upper))))
    else:
        obj = cp.sum(cp.multiply(loss.weights, cp.square(x - loss.target)))
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    assert res.value == pytest.approx(prob.value, abs=1e-6)
    assert res.lower_bound <= prob.value + 1e-7


# -- minimum-norm point ---------------------------------------------------------------

def test_mnp_symmetric():
    v, lam = min_norm_point([[1, 0], [0, 1]], [0, 0])
    np.testing.assert_allclose(v, [0.5, 0.5])
    np.testing.assert_allclose(lam, [0.5, 0.5])


def test_mnp_segment():
    v, lam = min_norm_point([[1, 0], [0, 1]], [1, 0.5])
    np.testing.assert_allclose(v, [0.75, 0.25])
    np.testing.assert_allclose(lam, [0.75, 0.25])


def test_mnp_singleton():
    v, lam = min_norm_point(VRep([np.array([2.0, 2.0])], [None]), [0, 0])
    assert v.tolist() == [2.0, 2.0] and lam.tolist() == [1.0]


coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 3).flatmap(
    lambda m: st.tuples(
        st.lists(st.lists(coords, min_size=m, max_size=m), min_size=1, max_size=12),
        st.lists(coords, min_size=m, max_size=m),
    )
))
def test_mnp_optimality_certificate(data):
    pts, anchor = np.array(data[0]), np.array(data[1])
    v, lam = min_norm_point(pts, anchor)
    assert np.all(lam >= 0) and lam.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(lam @ pts, v, atol=1e-9)
    scale = max(1.0, float(np.max(np.abs(pts - anchor))) ** 2)
    assert np.max((anchor - v) @ (pts - v).T) <= 1e-8 * scale


@pytest.mark.parametrize("seed", range(30))
def test_mnp_matches_grid(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    m = int(rng.integers(1, 4))
    pts, anchor = rng.uniform(-2, 2, (k, m)), rng.uniform(-3, 3, m)
    v, _ = min_norm_point(pts, anchor)
    assert np.sum((v - anchor) ** 2) == pytest.approx(simplex_grid_min(pts, anchor), abs=2e-3)


@pytest.mark.parametrize("seed", range(2))
def test_mnp_matches_grid_four_points(seed):
    rng = np.random.default_rng(100 + seed)
    pts, anchor = rng.uniform(-2, 2, (4, 3)), rng.uniform(-3, 3, 3)
    v, _ = min_norm_point(pts, anchor)
    assert np.sum((v - anchor) ** 2) == pytest.approx(simplex_grid_min(pts, anchor), abs=2e-3)


@pytest.mark.parametrize("seed", range(40))
def test_mnp_matches_qp(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 5))
    pts, anchor = rng.uniform(-2, 2, (int(rng.integers(2, 15)), m)), rng.uniform(-3, 3, m)
    v, _ = min_norm_point(pts, anchor)
    ref = hull_min(pts, "point", np.full(m, -INF), np.full(m, INF), target=anchor)
    assert np.sum((v - anchor) ** 2) == pytest.approx(ref, abs=1e-7)
