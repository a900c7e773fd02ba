import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fixture_instances, random_case, random_instance
from sentcomp import ilp
from sentcomp.lm import Sentence, augment, train
from sentcomp.pdcabb import (INFEASIBLE, OPTIMAL, BranchError, Node, SolverOptions, branch,
                             most_fractional, select_nodes, solve)
from test_lm import TOY5


def brute(inst):
    """Best feasible 0-1 point by enumerating kept subsets."""
    best = math.inf
    for r in range(2, inst.n + 1):
        for kept in itertools.combinations(range(1, inst.n + 1), r):
            x = ilp.assignment(inst.index, kept)
            if inst.is_feasible(x):
                best = min(best, math.fsum(inst.c[x == 1]))
    return best


def completions(inst, fixings):
    for r in range(2, inst.n + 1):
        for kept in itertools.combinations(range(1, inst.n + 1), r):
            x = ilp.assignment(inst.index, kept)
            if all(x[j] == v for j, v in fixings.items()) and inst.is_feasible(x):
                yield x


def fractional_cases(n_hi=8, want=10):
    out = []
    for seed in range(400):
        try:
            inst = random_instance(seed, n_hi=n_hi)
        except ilp.InfeasibleModelError:
            continue
        res = solve(inst, SolverOptions(use_dca=False))
        if res.branched > 0:
            out.append(inst)
        if len(out) == want:
            break
    return out


FRACTIONAL = fractional_cases()


def test_select_nodes():
    nodes = [Node(i, {}, 0, b) for i, b in zip((0, 1, 2), (3.0, 1.0, 2.0))]
    assert [nd.bound for nd in select_nodes(nodes, 2)] == [1.0, 2.0]
    # ties: deeper first, then lower id
    tied = [Node(5, {}, 1, 0.0), Node(2, {}, 3, 0.0), Node(1, {}, 1, 0.0)]
    assert [nd.id for nd in select_nodes(tied, 3)] == [2, 1, 5]


def test_branch_children():
    nd = Node(0, {4: 1}, 0, -2.0)
    down, up = branch(nd, 7, x=np.full(10, 0.5))
    assert down.fixings == {4: 1, 7: 0} and up.fixings == {4: 1, 7: 1}
    assert down.depth == up.depth == 1
    with pytest.raises(BranchError):
        branch(nd, 4)
    with pytest.raises(BranchError):
        branch(nd, 2, x=np.zeros(10))


def test_most_fractional():
    x = np.array([0.0, 0.3, 0.5, 0.5, 1.0])
    assert most_fractional(x, np.ones(5, bool)) == 2
    mask = np.array([1, 1, 0, 1, 1], bool)
    assert most_fractional(x, mask) == 3
    assert most_fractional(np.array([0.0, 1.0]), np.ones(2, bool)) is None


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(workers=0)
    with pytest.raises(ValueError):
        SolverOptions(eps=0.0)
    assert SolverOptions(workers=3).threads == 3


def test_root_integral_returns_immediately():
    inst = ilp.build_model(augment(Sentence.from_text("the old man saw a")), train(TOY5), 5, 5)
    res = solve(inst)
    assert res.status == OPTIMAL and res.branched == 0 and res.nodes == 0
    assert ilp.decode(inst, res.x).kept == (1, 2, 3, 4, 5)


def test_fully_fixed():
    inst = ilp.build_model(augment(Sentence.from_text("the old man saw a")), train(TOY5), 2, 5,
                           {1: 1, 2: 0, 3: 1, 4: 0, 5: 1})
    res = solve(inst)
    assert ilp.decode(inst, res.x).kept == (1, 3, 5)


def test_infeasible_instance():
    inst = ilp.build_model(augment(Sentence.from_text("a b c d")), train(TOY5), 2, 4,
                           phrases=[(1, (2,))], fixing={1: 1, 2: 0})
    res = solve(inst)
    assert res.status == INFEASIBLE and res.x is None


@pytest.mark.parametrize("name, inst", fixture_instances(8))
def test_fixture_oracle(name, inst):
    res = solve(inst)
    assert res.status == OPTIMAL
    assert res.f_opt == pytest.approx(brute(inst), abs=1e-9)
    assert inst.is_feasible(res.x)
    assert res.gap <= 1e-9


def test_fractional_pool_nonempty():
    assert len(FRACTIONAL) >= 5


@pytest.mark.parametrize("k", range(5))
@pytest.mark.parametrize("penalty", ["pwl", "quad"])
def test_branching_cases(k, penalty):
    inst = FRACTIONAL[k]
    for use_dca in (True, False):
        res = solve(inst, SolverOptions(penalty=penalty, use_dca=use_dca))
        assert res.f_opt == pytest.approx(brute(inst), abs=1e-9)


@pytest.mark.parametrize("k", range(5))
def test_worker_invariance(k):
    inst = FRACTIONAL[k]
    runs = [solve(inst, SolverOptions(workers=s)) for s in (1, 2, 4)]
    assert len({r.f_opt for r in runs}) == 1
    assert len({r.x.tobytes() for r in runs}) == 1


@pytest.mark.parametrize("k", range(5))
@pytest.mark.parametrize("s", [1, 2, 4])
def test_single_thread_same_tree(k, s):
    inst = FRACTIONAL[k]
    seq = solve(inst, SolverOptions(workers=s, threads=1))
    par = solve(inst, SolverOptions(workers=s))
    assert seq.node_log == par.node_log
    assert seq.f_opt == par.f_opt and seq.x.tobytes() == par.x.tobytes()


@pytest.mark.parametrize("k", range(5))
def test_repeat_runs_identical(k):
    inst = FRACTIONAL[k]
    a = solve(inst, SolverOptions(workers=4))
    b = solve(inst, SolverOptions(workers=4))
    assert a.node_log == b.node_log and a.f_opt == b.f_opt


@pytest.mark.parametrize("k", range(5))
def test_nondeterministic_mode_same_optimum(k):
    inst = FRACTIONAL[k]
    res = solve(inst, SolverOptions(workers=4, deterministic=False))
    assert res.f_opt == pytest.approx(brute(inst), abs=1e-9)


def test_pruning_safety():
    checked = 0
    for seed in range(300):
        try:
            inst = random_instance(seed, n_hi=5)
        except ilp.InfeasibleModelError:
            continue
        res = solve(inst, SolverOptions(use_dca=False, record_pruned=True))
        for fixings, incumbent in res.pruned:
            for x in completions(inst, fixings):
                assert math.fsum(inst.c[x == 1]) >= incumbent - 1e-9
            checked += 1
    assert checked > 0


def test_traces_monotone():
    for inst in FRACTIONAL:
        res = solve(inst)
        assert all(b >= a - 1e-12 for a, b in zip(res.bound_trace, res.bound_trace[1:]))
        assert all(b < a for a, b in zip(res.incumbent_trace, res.incumbent_trace[1:]))
        assert res.lower_bound <= res.f_opt + 1e-12


def test_child_bounds_not_below_parent():
    from sentcomp.lpsolve import LpProblem, solve_lp
    for inst in FRACTIONAL:
        lp = LpProblem(inst.c, inst.A_eq, inst.b_eq, inst.A_ub, inst.b_ub, inst.lb, inst.ub)
        root = solve_lp(lp)
        j = most_fractional(root.x, inst.lb < inst.ub)
        for v in (0.0, 1.0):
            lb, ub = inst.lb.copy(), inst.ub.copy()
            lb[j] = ub[j] = v
            child = solve_lp(lp.with_bounds(lb, ub))
            if child.ok:
                assert child.value >= root.value - 1e-8


def test_node_limit():
    inst = FRACTIONAL[0]
    res = solve(inst, SolverOptions(use_dca=False, node_limit=1))
    assert res.status in ("gap-limit", OPTIMAL)
    assert res.nodes <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]))
def test_property_optimal_and_sound(seed, workers):
    try:
        inst = random_instance(seed, n_hi=7)
    except ilp.InfeasibleModelError:
        return
    res = solve(inst, SolverOptions(workers=workers))
    want = brute(inst)
    if math.isinf(want):
        assert res.status == INFEASIBLE
        return
    assert res.status == OPTIMAL
    assert inst.is_feasible(res.x)
    assert res.f_opt == pytest.approx(want, abs=1e-9)
    comp = ilp.decode(inst, res.x)
    assert len(comp.kept) >= inst.lmin and len(comp.kept) <= inst.lmax
