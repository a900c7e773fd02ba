"""Global 0-1 solver: best-first branch-and-bound with LP lower bounds and
DCA upper bounds, evaluating up to ``workers`` open nodes per round.

Round structure: select the ``workers`` open nodes with the smallest bounds,
evaluate them concurrently against a snapshot of the incumbent, then commit
children and incumbent proposals.  In deterministic mode commits happen in
node-id order, so the search tree depends only on the inputs and ``workers``.

A node whose LP bound is within ``eps`` of the incumbent skips DCA but is
still branched while its bound is below the incumbent; closing it on the gap
alone would not certify the exact optimum.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .dca import (DcProgram, PenaltyKind, dca_adaptive, dca_solve, initial_penalty,
                  is_integral, INT_TOL)
from .lpsolve import LpProblem, solve_lp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
GAP_LIMIT = "gap-limit"

PRUNE_TOL = 1e-9


class BranchError(ValueError):
    pass


@dataclass
class SolverOptions:
    workers: int = 1
    eps: float = 1e-6
    penalty: PenaltyKind = PenaltyKind.PWL
    t0: float | None = None
    adaptive_t: bool = True
    max_doublings: int = 6
    node_doublings: int = 0
    use_dca: bool = True
    deterministic: bool = True
    node_limit: int = 1_000_000
    record_pruned: bool = False
    # OS threads evaluating a batch; defaults to ``workers``.  With
    # ``threads=1`` the batches of width ``workers`` run sequentially.
    threads: int | None = None

    def __post_init__(self):
        self.penalty = PenaltyKind(self.penalty)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.threads is None:
            self.threads = self.workers
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class Node:
    id: int
    fixings: dict
    depth: int = 0
    bound: float = -math.inf
    lp: object = None      # cached relaxation result (root only)
    dca_done: bool = False
    basis: object = None   # parent's LP basis, a warm start


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    f_opt: float = math.inf
    lower_bound: float = -math.inf
    nodes: int = 0
    branched: int = 0
    dca_calls: int = 0
    dca_integral: int = 0
    wall_time: float = 0.0
    t_final: float = 0.0
    bound_trace: list = field(default_factory=list)
    incumbent_trace: list = field(default_factory=list)
    root_dca: object = None
    pruned: list = field(default_factory=list)
    # (node id, outcome, branching variable) in commit order
    node_log: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.f_opt - self.lower_bound

    def stats(self) -> dict:
        return {"status": self.status, "objective": self.f_opt, "lower_bound": self.lower_bound,
                "nodes": self.nodes, "branched": self.branched, "dca_calls": self.dca_calls,
                "dca_integral": self.dca_integral, "time_ms": 1000.0 * self.wall_time}


def select_nodes(open_nodes: list, s: int) -> list:
    """The ``s`` best-bound nodes; ties go to deeper nodes, then lower ids."""
    return sorted(open_nodes, key=lambda nd: (nd.bound, -nd.depth, nd.id))[:s]


def most_fractional(x, free_mask) -> int | None:
    frac = np.abs(x - np.round(x))
    frac[~free_mask] = 0.0
    if frac.max(initial=0.0) <= INT_TOL:
        return None
    # distance to 0.5, lowest index among ties
    score = np.where(frac > INT_TOL, np.abs(x - 0.5), np.inf)
    return int(np.argmin(score))


def branch(node: Node, j: int, x=None, next_id=None) -> tuple[Node, Node]:
    """Children with ``x_j = 0`` and ``x_j = 1``."""
    if j in node.fixings:
        raise BranchError(f"variable {j} is already fixed at this node")
    if x is not None and abs(x[j] - round(x[j])) <= INT_TOL:
        raise BranchError(f"variable {j} is integral in the relaxation")
    ids = (next_id(), next_id()) if next_id else (2 * node.id + 1, 2 * node.id + 2)
    down = Node(ids[0], {**node.fixings, j: 0}, node.depth + 1, node.bound, basis=node.basis)
    up = Node(ids[1], {**node.fixings, j: 1}, node.depth + 1, node.bound, basis=node.basis)
    return down, up


@dataclass
class _Outcome:
    node: Node
    status: str                 # pruned | integral | branched
    bound: float = math.inf
    candidate: tuple | None = None   # (value, x)
    branch_var: int | None = None
    dca_calls: int = 0
    dca_integral: int = 0
    basis: object = None


class _Search:
    def __init__(self, inst, opt: SolverOptions):
        self.inst = inst
        self.opt = opt
        self.base = LpProblem(inst.c, inst.A_eq, inst.b_eq, inst.A_ub, inst.b_ub,
                              inst.lb, inst.ub)
        self.t = opt.t0 if opt.t0 is not None else initial_penalty(inst.c)
        self.f_opt = math.inf
        self.x_opt = None
        self.lock = threading.Lock()
        self._next = 0
        self.eliminate = inst.lb == inst.ub

    def next_id(self) -> int:
        self._next += 1
        return self._next

    def bounds(self, node: Node):
        lb = self.base.lb.copy()
        ub = self.base.ub.copy()
        for j, v in node.fixings.items():
            lb[j] = ub[j] = v
        return lb, ub

    def value(self, x) -> float:
        # exactly rounded, independent of summation order
        return math.fsum(self.inst.c[np.round(x) == 1])

    def integral_feasible(self, x):
        if x is None or not is_integral(x):
            return None
        xr = np.round(x)
        if not self.inst.is_feasible(xr):
            return None
        return xr

    def run_dca(self, x0, lb, ub, basis, doublings):
        dc = DcProgram(self.base.with_bounds(lb, ub), self.opt.penalty, self.t, self.eliminate)
        if doublings > 0 and self.opt.adaptive_t:
            res = dca_adaptive(dc, x0, doublings, basis=basis)
        else:
            res = dca_solve(dc, x0, basis=basis)
        return res

    def evaluate(self, node: Node, incumbent: float) -> _Outcome:
        lb, ub = self.bounds(node)
        res = node.lp
        if res is None:
            res = solve_lp(self.base.with_bounds(lb, ub), basis=node.basis,
                           eliminate=self.eliminate)
        if not res.ok:
            if res.status != "infeasible":
                log.warning("node %d: LP %s (%s); treated as infeasible", node.id,
                            res.status, res.message)
            return _Outcome(node, "pruned")
        bound = max(res.value, node.bound)
        if bound >= incumbent - PRUNE_TOL:
            return _Outcome(node, "pruned", bound)
        xr = self.integral_feasible(res.x)
        if xr is not None:
            return _Outcome(node, "integral", bound, (self.value(xr), xr))
        out = _Outcome(node, "branched", bound, basis=res.basis)
        if self.opt.use_dca and not node.dca_done and incumbent - bound > self.opt.eps:
            d = self.run_dca(res.x, lb, ub, res.basis, self.opt.node_doublings)
            out.dca_calls = 1
            xd = self.integral_feasible(d.x) if d.integral else None
            if xd is not None:
                out.dca_integral = 1
                v = self.value(xd)
                if v < incumbent:
                    out.candidate = (v, xd)
        cutoff = min(incumbent, out.candidate[0]) if out.candidate else incumbent
        if bound >= cutoff - PRUNE_TOL:
            out.status = "pruned"
            return out
        out.branch_var = most_fractional(res.x, lb < ub)
        if out.branch_var is None:
            # integral within tolerance but rows violated beyond it
            log.warning("node %d: integral relaxation failed the feasibility check", node.id)
            out.status = "pruned"
        return out


def solve(inst, opt: SolverOptions | None = None) -> SolveResult:
    opt = opt or SolverOptions()
    t_start = time.perf_counter()
    S = _Search(inst, opt)
    result = SolveResult(INFEASIBLE)

    def done(status):
        result.status = status
        result.x = S.x_opt
        result.f_opt = S.f_opt
        result.wall_time = time.perf_counter() - t_start
        result.t_final = S.t
        return result

    # root
    root_lp = solve_lp(S.base, eliminate=S.eliminate)
    if not root_lp.ok:
        if root_lp.status != "infeasible":
            log.warning("root LP %s: %s", root_lp.status, root_lp.message)
        return done(INFEASIBLE)
    result.lower_bound = root_lp.value
    result.bound_trace.append(root_lp.value)
    xr = S.integral_feasible(root_lp.x)
    if xr is not None:
        S.x_opt, S.f_opt = xr, S.value(xr)
        result.lower_bound = S.f_opt
        result.incumbent_trace.append(S.f_opt)
        return done(OPTIMAL)
    if opt.use_dca:
        d = S.run_dca(root_lp.x, inst.lb, inst.ub, root_lp.basis, opt.max_doublings)
        S.t = d.t
        result.root_dca = d
        result.dca_calls += 1
        xd = S.integral_feasible(d.x) if d.integral else None
        if xd is not None:
            result.dca_integral += 1
            S.x_opt, S.f_opt = xd, S.value(xd)
            result.incumbent_trace.append(S.f_opt)

    # node loop
    open_nodes = [Node(0, {}, 0, root_lp.value, lp=root_lp, dca_done=True)]
    pool = ThreadPoolExecutor(max_workers=opt.threads) if opt.threads > 1 else None
    try:
        while open_nodes:
            lower = min(S.f_opt, min(nd.bound for nd in open_nodes))
            result.lower_bound = max(result.lower_bound, lower)
            result.bound_trace.append(result.lower_bound)
            if result.nodes >= opt.node_limit:
                return done(GAP_LIMIT)
            batch = select_nodes(open_nodes, opt.workers)
            chosen = {id(nd) for nd in batch}
            open_nodes = [nd for nd in open_nodes if id(nd) not in chosen]
            snapshot = S.f_opt
            if pool is None:
                outcomes = [S.evaluate(nd, snapshot) for nd in batch]
            elif opt.deterministic:
                outcomes = list(pool.map(lambda nd: S.evaluate(nd, snapshot), batch))
            else:
                futs = [pool.submit(S.evaluate, nd, S.f_opt) for nd in batch]
                outcomes = [f.result() for f in as_completed(futs)]
            if opt.deterministic:
                outcomes.sort(key=lambda o: o.node.id)
            for out in outcomes:
                _commit(S, out, open_nodes, result, opt)
    finally:
        if pool is not None:
            pool.shutdown()
    if S.x_opt is None:
        return done(INFEASIBLE)
    result.lower_bound = S.f_opt if not open_nodes else result.lower_bound
    result.bound_trace.append(result.lower_bound)
    return done(OPTIMAL)


def _commit(S: _Search, out: _Outcome, open_nodes: list, result: SolveResult, opt):
    with S.lock:
        result.nodes += 1
        result.node_log.append((out.node.id, out.status, out.branch_var))
        result.dca_calls += out.dca_calls
        result.dca_integral += out.dca_integral
        if out.candidate is not None and out.candidate[0] < S.f_opt:
            S.f_opt, S.x_opt = out.candidate
            result.incumbent_trace.append(S.f_opt)
        if out.status == "pruned":
            if opt.record_pruned:
                result.pruned.append((dict(out.node.fixings), S.f_opt))
            return
        if out.status != "branched":
            return
        # the incumbent may have improved since the node was evaluated
        if out.bound >= S.f_opt - PRUNE_TOL:
            if opt.record_pruned:
                result.pruned.append((dict(out.node.fixings), S.f_opt))
            return
        node = Node(out.node.id, out.node.fixings, out.node.depth, out.bound, basis=out.basis)
        result.branched += 1
        open_nodes.extend(branch(node, out.branch_var, next_id=S.next_id))
