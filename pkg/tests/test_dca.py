import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import random_case
from sentcomp import ilp
from sentcomp.dca import (DcaError, DcProgram, PenaltyKind, dca_adaptive, dca_solve, dca_step,
                          initial_penalty, is_integral, penalty_value, project_polytope,
                          subgradient_h)
from sentcomp.lpsolve import LpProblem, solve_lp

KINDS = list(PenaltyKind)


def second_formula(kind, x):
    x = np.asarray(x, float)
    if kind is PenaltyKind.PWL:
        return float(np.sum(0.5 - np.abs(x - 0.5)))
    if kind is PenaltyKind.QUAD:
        return float(np.sum(0.25 - (x - 0.5) ** 2))
    return float(np.sum((1 - np.cos(2 * np.pi * x)) / 2))


def box_program(kind, c, t):
    return DcProgram(LpProblem(np.asarray(c, float)), kind, t)


def test_penalty_half_point():
    x = np.full(4, 0.5)
    assert penalty_value("pwl", x) == 2.0
    assert penalty_value("quad", x) == 1.0
    assert penalty_value("trig", x) == 4.0


@pytest.mark.parametrize("kind", KINDS)
def test_penalty_second_formula(kind):
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.uniform(0, 1, 7)
        assert penalty_value(kind, x) == pytest.approx(second_formula(kind, x), abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_penalty_corners(kind):
    for bits in itertools.product([0.0, 1.0], repeat=6):
        assert penalty_value(kind, bits) == 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_dc_decomposition(kind):
    rng = np.random.default_rng(2)
    c = rng.normal(size=5)
    dc = box_program(kind, c, 37.0)
    for _ in range(100):
        x = rng.uniform(0, 1, 5)
        assert dc.F(x) == pytest.approx(dc.g(x) - dc.h(x), abs=1e-9)
        assert dc.p(x) >= 0


def test_subgradient_examples():
    c = np.array([0.3, -0.2, 0.1])
    dc = box_program("quad", c, 10.0)
    assert np.allclose(subgradient_h(dc, np.full(3, 0.5)), -c)
    dc = box_program("pwl", c, 10.0)
    assert np.array_equal(subgradient_h(dc, np.zeros(3)), -10.0 - c)
    assert np.array_equal(subgradient_h(dc, np.full(3, 0.5)), 10.0 - c)


@pytest.mark.parametrize("kind", KINDS)
def test_subgradient_finite_difference(kind):
    rng = np.random.default_rng(3)
    for _ in range(200):
        N = 5
        c = rng.normal(size=N)
        t = rng.uniform(1, 100)
        x = rng.uniform(0, 1, N)
        x = np.where(np.abs(x - 0.5) < 1e-3, x + 2e-3, x)
        dc = box_program(kind, c, t)
        y = subgradient_h(dc, x)
        h = 1e-6
        fd = np.array([(dc.h(x + h * e) - dc.h(x - h * e)) / (2 * h) for e in np.eye(N)])
        assert np.max(np.abs(fd - y)) <= 1e-4 * max(1.0, np.max(np.abs(y)))


def test_step_t0_maximizes_f():
    A = [[1.0, 1.0, 1.0]]
    lp = LpProblem(np.array([0.2, -0.5, 0.1]), A_eq=A, b_eq=[1.0])
    dc = DcProgram(lp, "pwl", 0.0)
    x, _ = dca_step(dc, dc.c)
    want = solve_lp(lp.with_objective(-dc.c))
    assert np.array_equal(x, want.x)


def test_trig_step_grid_oracle():
    # K = {x in [0,1]^2 : x1 + x2 <= 1.2}
    lp = LpProblem(np.array([0.3, -0.4]), A_ub=[[1.0, 1.0]], b_ub=[1.2])
    for t, xp in [(0.2, (0.9, 0.8)), (1.0, (0.3, 0.6)), (0.05, (0.1, 0.1))]:
        dc = DcProgram(lp, "trig", t)
        y = subgradient_h(dc, np.array(xp))
        x, _ = dca_step(dc, y, x_prev=np.array([0.0, 0.0]))
        g = np.linspace(0, 1, 1001)
        X1, X2 = np.meshgrid(g, g)
        obj = t * math.pi ** 2 * (X1 ** 2 + X2 ** 2) - y[0] * X1 - y[1] * X2
        obj[X1 + X2 > 1.2 + 1e-12] = np.inf
        k = np.unravel_index(np.argmin(obj), obj.shape)
        assert np.max(np.abs(x - [X1[k], X2[k]])) <= 1e-3


def test_projection_kkt():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = 6
        A = rng.normal(size=(2, n))
        x0 = rng.uniform(0.2, 0.8, n)
        lp = LpProblem(np.zeros(n), A_eq=A, b_eq=A @ x0)
        z = rng.normal(0.5, 1.0, n)
        x = project_polytope(lp, z, x0)
        assert np.allclose(A @ x, A @ x0, atol=1e-9)
        assert np.all(x >= -1e-9) and np.all(x <= 1 + 1e-9)
        # no feasible direction decreases the distance
        for _ in range(50):
            y = x0 + rng.uniform(-0.2, 0.2, n)
            y = y - A.T @ np.linalg.solve(A @ A.T, A @ y - A @ x0)
            if np.all((y >= 0) & (y <= 1)):
                assert np.dot(x - z, y - x) >= -1e-8


def _instance(seed, n_hi=8):
    try:
        return ilp.build_model(*random_case(seed, n_hi=n_hi))
    except ilp.InfeasibleModelError:
        return None


def _root(inst):
    lp = LpProblem(inst.c, inst.A_eq, inst.b_eq, inst.A_ub, inst.b_ub, inst.lb, inst.ub)
    return lp, solve_lp(lp)


def test_fixed_point_one_iteration():
    inst = _instance(3)
    lp, root = _root(inst)
    x = ilp.assignment(inst.index, ilp.brute_force_solve(
        inst.sentence, _model(3), inst.lmin, inst.lmax, *_fix_phr(3)).kept)
    dc = DcProgram(lp, "pwl", 1e6)
    res = dca_solve(dc, x)
    assert res.iterations == 1
    assert np.array_equal(res.x, x) and res.integral


def _model(seed):
    return random_case(seed)[1]


def _fix_phr(seed):
    case = random_case(seed)
    return case[4], case[5]


def test_n4_quadratic_descent():
    for seed in range(200):
        inst = _instance(seed, n_hi=4)
        if inst is not None and inst.n == 4:
            break
    lp, root = _root(inst)
    res = dca_solve(DcProgram(lp, "quad", 100.0), root.x)
    assert all(b <= a + 1e-9 for a, b in zip(res.trace, res.trace[1:]))


def test_t0_reduces_to_lp():
    inst = _instance(11)
    lp, root = _root(inst)
    # with t = 0 the linearization is -c: every step is the relaxation itself
    res = dca_solve(DcProgram(lp, "pwl", 0.0), root.x)
    assert res.iterations == 1
    assert inst.objective(res.x) == pytest.approx(root.value, abs=1e-12)


def test_initial_penalty():
    assert initial_penalty(np.array([0.1, -0.2])) == 100.0
    assert initial_penalty(np.full(10, -2.0)) == 200.0


def test_adaptive_doublings_bounded():
    inst = _instance(21)
    lp, root = _root(inst)
    res = dca_adaptive(DcProgram(lp, "pwl", 100.0), root.x, 3)
    assert 0 <= res.doublings <= 3
    assert res.t == 100.0 * 2 ** res.doublings


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["pwl", "quad"]))
def test_property_descent(seed, kind):
    inst = _instance(seed)
    if inst is None:
        return
    lp, root = _root(inst)
    if not root.ok:
        with pytest.raises(DcaError):
            dca_solve(DcProgram(lp, kind, 1.0), root.x)
        return
    res = dca_adaptive(DcProgram(lp, kind, initial_penalty(inst.c)), root.x)
    assert all(b <= a + 1e-9 for a, b in zip(res.trace, res.trace[1:]))
    assert res.iterations <= 200
    assert inst.is_feasible(res.x, tol=1e-7, integral=False)
    assert res.integral == is_integral(res.x)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.sampled_from(KINDS))
def test_property_zero_set(xs, kind):
    x = np.array(xs)
    dist = float(np.max(np.minimum(x, 1 - x)))
    p = penalty_value(kind, x)
    if dist == 0.0:
        assert p == 0.0
    if p == 0.0:
        assert dist <= 1e-12
    if dist > 1e-12:
        assert p > 0.0
