"""Bounded-variable primal simplex for small dense LPs.

Solves ``min c @ x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub`` and
``lb <= x <= ub`` with finite bounds.  Variables with ``lb == ub`` are
eliminated before the solve.  Inequalities receive slack columns; phase 1
adds one artificial per row that the starting point does not satisfy.

Pricing is Dantzig's rule; after ``BLAND_AFTER`` consecutive degenerate
pivots the solver switches to Bland's rule until a pivot makes progress.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import sparse

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
PIVOT_TOL = 1e-10
OPT_TOL = 1e-9
BLAND_AFTER = 50

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"


@dataclass
class LpProblem:
    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_ub: object = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n)
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.ones(n) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds must match the objective length")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub")
        if not (np.all(np.isfinite(self.lb)) and np.all(np.isfinite(self.ub))):
            raise ValueError("all variable bounds must be finite")

    @property
    def n(self) -> int:
        return self.c.size

    def with_objective(self, c) -> "LpProblem":
        return LpProblem(c, self.A_eq, self.b_eq, self.A_ub, self.b_ub, self.lb, self.ub)

    def with_bounds(self, lb, ub) -> "LpProblem":
        return LpProblem(self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub, lb, ub)

    def residuals(self, x):
        return self.A_eq @ x - self.b_eq, self.A_ub @ x - self.b_ub


def _rows(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    if sparse.issparse(A):
        A = A.toarray()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        A = A.reshape(0, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.shape != (b.size, n):
        raise ValueError(f"row block shape {A.shape} does not match rhs {b.size} / n {n}")
    return A, b


@dataclass
class Basis:
    """Warm-start data: basic columns and nonbasic-at-upper flags of the
    working (reduced) problem.  Only meaningful for a problem with the same
    fixed-variable pattern."""

    key: bytes
    basic: np.ndarray
    at_upper: np.ndarray
    art_rows: tuple = ()


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    value: float = float("nan")
    iterations: int = 0
    basis: Basis | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Simplex:
    def __init__(self, A, b, c, lb, ub, debug=False):
        self.A = A
        self.b = b
        self.c = c
        self.lb = lb
        self.ub = ub
        self.m, self.ncol = A.shape
        self.debug = debug
        self.iterations = 0

    def start(self, basic, at_upper):
        self.basic = np.array(basic, dtype=int)
        self.at_upper = np.array(at_upper, dtype=bool)
        self.is_basic = np.zeros(self.ncol, dtype=bool)
        self.is_basic[self.basic] = True
        self._refresh()

    def _refresh(self):
        x = np.where(self.at_upper, self.ub, self.lb)
        x[self.basic] = 0.0
        B = self.A[:, self.basic]
        self.lu = sla.lu_factor(B, check_finite=False)
        rhs = self.b - self.A @ x
        x[self.basic] = sla.lu_solve(self.lu, rhs, check_finite=False)
        self.x = x

    def primal_feasible(self, tol=FEAS_TOL) -> bool:
        xb = self.x[self.basic]
        return bool(np.all(xb >= self.lb[self.basic] - tol) and
                    np.all(xb <= self.ub[self.basic] + tol))

    def infeasibility(self, tol=FEAS_TOL):
        xb = self.x[self.basic]
        below = xb < self.lb[self.basic] - tol
        above = xb > self.ub[self.basic] + tol
        return below, above

    def run(self, cost, max_iter, composite=False):
        """Primal simplex iterations.

        With ``composite`` the basis may start primal infeasible and the
        objective is the sum of bound violations (recomputed every pivot);
        returns OPTIMAL once feasible and INFEASIBLE if stuck.
        """
        degenerate = 0
        movable = self.lb < self.ub
        while True:
            if self.iterations >= max_iter:
                return FAILED, "iteration limit"
            if composite:
                below, above = self.infeasibility()
                if not (below.any() or above.any()):
                    return OPTIMAL, ""
                cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                d = -(self.A.T @ sla.lu_solve(self.lu, cb, trans=1, check_finite=False))
            else:
                cb = cost[self.basic]
                pi = sla.lu_solve(self.lu, cb, trans=1, check_finite=False)
                d = cost - self.A.T @ pi
            elig = movable & ~self.is_basic & np.where(self.at_upper, d > OPT_TOL, d < -OPT_TOL)
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return (INFEASIBLE, "no improving column") if composite else (OPTIMAL, "")
            bland = degenerate >= BLAND_AFTER
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = -1.0 if self.at_upper[q] else 1.0
            w = sla.lu_solve(self.lu, self.A[:, q], check_finite=False)
            if not np.all(np.isfinite(w)):
                return FAILED, "singular basis"
            delta = direction * w
            xb = self.x[self.basic]
            lbb = self.lb[self.basic]
            ubb = self.ub[self.basic]
            ratios = np.full(self.m, np.inf)
            dec = delta > PIVOT_TOL
            inc = delta < -PIVOT_TOL
            if composite:
                # infeasible basics block only where they reach their violated bound
                lo_stop = np.where(below, -np.inf, lbb)
                hi_stop = np.where(above, np.inf, ubb)
                hi_stop = np.where(below, lbb, hi_stop)
                lo_stop = np.where(above, ubb, lo_stop)
                dec &= np.isfinite(lo_stop)
                inc &= np.isfinite(hi_stop)
                ratios[dec] = np.maximum(xb[dec] - lo_stop[dec], 0.0) / delta[dec]
                ratios[inc] = np.maximum(hi_stop[inc] - xb[inc], 0.0) / -delta[inc]
                leave_upper = inc
            else:
                ratios[dec] = np.maximum(xb[dec] - lbb[dec], 0.0) / delta[dec]
                inc_fin = inc & np.isfinite(ubb)
                ratios[inc_fin] = np.maximum(ubb[inc_fin] - xb[inc_fin], 0.0) / -delta[inc_fin]
                leave_upper = inc
            if composite:
                # a variable below lb that increases leaves at lb, not ub
                leave_upper = leave_upper & ~below
                leave_upper = leave_upper | (dec & above)
            theta_row = ratios.min() if self.m else np.inf
            span = self.ub[q] - self.lb[q]
            self.iterations += 1
            if span <= theta_row:
                if not np.isfinite(span):
                    return UNBOUNDED, f"column {q} unbounded"
                # bound flip, basis unchanged
                self.at_upper[q] = not self.at_upper[q]
                degenerate = 0
                self._refresh()
                continue
            if not np.isfinite(theta_row):
                return UNBOUNDED, f"column {q} unbounded"
            ties = np.flatnonzero(ratios <= theta_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basic[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            leaving = self.basic[r]
            self.at_upper[leaving] = bool(leave_upper[r])
            self.is_basic[leaving] = False
            self.basic[r] = q
            self.is_basic[q] = True
            self.at_upper[q] = False
            degenerate = degenerate + 1 if theta_row <= 1e-12 else 0
            try:
                self._refresh()
            except (np.linalg.LinAlgError, ValueError) as exc:
                return FAILED, f"factorization failed: {exc}"
            if not np.all(np.isfinite(self.x)):
                return FAILED, "non-finite iterate"

    def dump(self):
        log.debug("simplex state: basic=%s\nx=%s", self.basic.tolist(), self.x.tolist())


def _key(*masks: np.ndarray) -> bytes:
    return b"|".join(np.packbits(mk).tobytes() + len(mk).to_bytes(4, "little") for mk in masks)


def solve_lp(p: LpProblem, basis: Basis | None = None, max_iter: int = 50_000,
             debug: bool = False, eliminate=None) -> LpResult:
    """Solve ``p``.

    ``eliminate`` masks the columns removed before the solve (default: every
    column with ``lb == ub``).  Keeping fixed columns lets a basis from a
    problem that differs only in bounds be reused: ``basis`` is accepted when
    its column pattern matches, and a primal infeasible warm start is repaired
    by a composite phase 1 before falling back to a cold start.
    """
    n = p.n
    fixed = p.lb == p.ub if eliminate is None else np.asarray(eliminate, dtype=bool)
    free = ~fixed
    xfix = np.where(fixed, p.lb, 0.0)
    Aeq = p.A_eq[:, free]
    beq = p.b_eq - p.A_eq[:, fixed] @ p.lb[fixed]
    Aub = p.A_ub[:, free]
    bub = p.b_ub - p.A_ub[:, fixed] @ p.lb[fixed]
    nf = int(free.sum())

    # empty rows are either trivially satisfied or infeasible
    keep_eq = np.any(Aeq != 0, axis=1)
    if np.any(np.abs(beq[~keep_eq]) > FEAS_TOL):
        return LpResult(INFEASIBLE, message="empty equality row with nonzero rhs")
    keep_ub = np.any(Aub != 0, axis=1)
    if np.any(bub[~keep_ub] < -FEAS_TOL):
        return LpResult(INFEASIBLE, message="empty inequality row with negative rhs")
    Aeq, beq, Aub, bub = Aeq[keep_eq], beq[keep_eq], Aub[keep_ub], bub[keep_ub]
    me, mu = Aeq.shape[0], Aub.shape[0]
    m = me + mu
    cf = p.c[free]
    lbf, ubf = p.lb[free], p.ub[free]

    A = np.zeros((m, nf + mu))
    A[:me, :nf] = Aeq
    A[me:, :nf] = Aub
    A[me:, nf:] = np.eye(mu)
    b = np.concatenate([beq, bub])
    lb = np.concatenate([lbf, np.zeros(mu)])
    ub = np.concatenate([ubf, np.full(mu, np.inf)])
    cost = np.concatenate([cf, np.zeros(mu)])
    key = _key(free, keep_eq, keep_ub)
    total_iter = 0

    def finish(sx: _Simplex, status, msg="", art_rows=()):
        if status != OPTIMAL:
            if debug:
                sx.dump()
            return LpResult(status, iterations=total_iter, message=msg)
        xs = np.clip(sx.x[:nf], lbf, ubf)
        x = xfix.copy()
        x[free] = xs
        bas = Basis(key, sx.basic.copy(), sx.at_upper[:nf + mu].copy(), tuple(art_rows))
        return LpResult(OPTIMAL, x, float(p.c @ x), total_iter, bas)

    if m == 0:
        x = xfix.copy()
        x[free] = np.where(cf < 0, ubf, lbf)
        return LpResult(OPTIMAL, x, float(p.c @ x), 0, None)

    if basis is not None and basis.key == key and basis.basic.size == m:
        na = len(basis.art_rows)
        Aw = np.hstack([A, np.eye(m)[:, list(basis.art_rows)]]) if na else A
        sx = _Simplex(Aw, b, np.concatenate([cost, np.zeros(na)]),
                      np.concatenate([lb, np.zeros(na)]), np.concatenate([ub, np.zeros(na)]),
                      debug)
        try:
            sx.start(basis.basic, np.concatenate([basis.at_upper, np.zeros(na, dtype=bool)]))
            warm = sx.primal_feasible()
            if not warm:
                status, _ = sx.run(sx.c, max_iter, composite=True)
                warm = status == OPTIMAL
        except (np.linalg.LinAlgError, ValueError):
            warm = False
        if warm:
            status, msg = sx.run(sx.c, max_iter)
            total_iter = sx.iterations
            if status != FAILED:
                return finish(sx, status, msg, basis.art_rows)
        total_iter = sx.iterations

    # phase 1: structurals at lower bound, slacks basic where feasible
    x0 = lbf.copy()
    resid = b - A[:, :nf] @ x0
    art_rows = list(range(me)) + [me + r for r in range(mu) if resid[me + r] < 0]
    slack_basic = {me + r for r in range(mu) if resid[me + r] >= 0}
    na = len(art_rows)
    Aart = np.zeros((m, na))
    for a, r in enumerate(art_rows):
        Aart[r, a] = 1.0 if resid[r] >= 0 else -1.0
    A1 = np.hstack([A, Aart])
    lb1 = np.concatenate([lb, np.zeros(na)])
    ub1 = np.concatenate([ub, np.full(na, np.inf)])
    cost1 = np.concatenate([np.zeros(nf + mu), np.ones(na)])
    basic = np.empty(m, dtype=int)
    for a, r in enumerate(art_rows):
        basic[r] = nf + mu + a
    for r in slack_basic:
        basic[r] = nf + (r - me)
    sx = _Simplex(A1, b, cost1, lb1, ub1, debug)
    sx.start(basic, np.zeros(nf + mu + na, dtype=bool))
    status, msg = sx.run(cost1, max_iter)
    total_iter = sx.iterations
    if status != OPTIMAL:
        return finish(sx, status, "phase 1: " + msg)
    infeas = float(sx.x[nf + mu:].sum())
    if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max())):
        return LpResult(INFEASIBLE, iterations=total_iter,
                        message=f"phase 1 infeasibility {infeas:.3g}")

    # phase 2: artificials pinned to zero and driven out of the basis where possible
    sx.ub[nf + mu:] = 0.0
    sx._refresh()
    _drive_out_artificials(sx, nf + mu)
    basic_art = sx.basic[sx.basic >= nf + mu]
    keep = np.ones(sx.ncol, dtype=bool)
    art_cols = [c for c in range(nf + mu, nf + mu + na) if c not in set(basic_art)]
    keep[art_cols] = False
    # nonbasic artificials can never re-enter; drop them
    remap = np.cumsum(keep) - 1
    sx.A = sx.A[:, keep]
    sx.lb, sx.ub = sx.lb[keep], sx.ub[keep]
    sx.at_upper = sx.at_upper[keep]
    sx.is_basic = sx.is_basic[keep]
    sx.basic = remap[sx.basic]
    sx.ncol = sx.A.shape[1]
    sx._refresh()
    art_rows = [int(np.flatnonzero(sx.A[:, col])[0]) for col in range(nf + mu, sx.ncol)]
    cost2 = np.concatenate([cost, np.zeros(sx.ncol - nf - mu)])
    status, msg = sx.run(cost2, max_iter)
    total_iter = sx.iterations
    if status != OPTIMAL:
        return finish(sx, status, "phase 2: " + msg)
    # warm starts rebuild artificial columns as +e_r
    sx.A[:, nf + mu:] = np.abs(sx.A[:, nf + mu:])
    return finish(sx, status, art_rows=art_rows)


def _drive_out_artificials(sx: _Simplex, first_art: int) -> None:
    for r in range(sx.m):
        if sx.basic[r] < first_art:
            continue
        e = np.zeros(sx.m)
        e[r] = 1.0
        row = sla.lu_solve(sx.lu, e, trans=1, check_finite=False) @ sx.A[:, :first_art]
        row[sx.is_basic[:first_art]] = 0.0
        row[sx.lb[:first_art] == sx.ub[:first_art]] = 0.0
        q = int(np.argmax(np.abs(row)))
        if abs(row[q]) <= 1e-7:
            continue  # redundant row
        leaving = sx.basic[r]
        sx.is_basic[leaving] = False
        sx.at_upper[leaving] = False
        sx.basic[r] = q
        sx.is_basic[q] = True
        sx.at_upper[q] = False
        sx._refresh()
