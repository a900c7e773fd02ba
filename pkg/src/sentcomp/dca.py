"""Exact-penalty DC reformulation of a 0-1 LP and the DCA loop.

The integer set is replaced by a penalty ``p`` that vanishes exactly on
``{0,1}^N``::

    kind   p(x)                     g(x)           h(x)
    pwl    sum min(x_i, 1 - x_i)    0              -p(x)
    quad   sum x_i (1 - x_i)        0              -p(x)
    trig   sum sin^2(pi x_i)        pi^2 |x|^2     g(x) - p(x)

and ``F_t = f + t p = g_t - h_t`` with ``g_t = t g`` and ``h_t = t h - f``.
Each DCA iteration linearizes ``h_t`` at the current point and minimizes the
convex remainder over the LP relaxation ``K``: an LP for ``pwl``/``quad``,
a Euclidean projection onto ``K`` for ``trig``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .lpsolve import LpProblem, solve_lp

log = logging.getLogger(__name__)

EPS1 = 1e-6
EPS2 = 1e-6
MAX_ITER = 200
INT_TOL = 1e-6
MAX_DOUBLINGS = 6


class PenaltyKind(str, enum.Enum):
    PWL = "pwl"
    QUAD = "quad"
    TRIG = "trig"


class DcaError(RuntimeError):
    pass


def penalty_value(kind, x) -> float:
    kind = PenaltyKind(kind)
    x = np.asarray(x, dtype=float)
    if kind is PenaltyKind.PWL:
        return float(np.minimum(x, 1.0 - x).sum())
    if kind is PenaltyKind.QUAD:
        return float((x * (1.0 - x)).sum())
    # sin^2 is symmetric about 1/2; folding makes the corners exact zeros
    return float((np.sin(np.pi * np.minimum(x, 1.0 - x)) ** 2).sum())


def is_integral(x, tol: float = INT_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(np.abs(x - np.round(x)) <= tol))


@dataclass
class DcProgram:
    """``min c @ x + t p(x)`` over the polytope of ``lp`` (its ``c`` is ``f``)."""

    lp: LpProblem
    kind: PenaltyKind = PenaltyKind.PWL
    t: float = 100.0
    # columns the LP steps eliminate; shared across B&B nodes for warm starts
    eliminate: np.ndarray | None = None

    def __post_init__(self):
        self.kind = PenaltyKind(self.kind)
        if self.t < 0:
            raise ValueError("penalty parameter must be non-negative")

    @classmethod
    def from_instance(cls, inst, kind=PenaltyKind.PWL, t=100.0, lb=None, ub=None):
        lp = LpProblem(inst.c, inst.A_eq, inst.b_eq, inst.A_ub, inst.b_ub,
                       inst.lb if lb is None else lb, inst.ub if ub is None else ub)
        return cls(lp, kind, t)

    @property
    def c(self) -> np.ndarray:
        return self.lp.c

    def f(self, x) -> float:
        return float(self.c @ x)

    def p(self, x) -> float:
        return penalty_value(self.kind, x)

    def F(self, x) -> float:
        return self.f(x) + self.t * self.p(x)

    def g(self, x) -> float:
        if self.kind is PenaltyKind.TRIG:
            return self.t * math.pi ** 2 * float(np.dot(x, x))
        return 0.0

    def h(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.kind is PenaltyKind.TRIG:
            hp = math.pi ** 2 * float(np.dot(x, x)) - self.p(x)
        else:
            hp = -self.p(x)
        return self.t * hp - self.f(x)


def subgradient_h(dc: DcProgram, x) -> np.ndarray:
    """An element of the subdifferential of ``h_t`` at ``x``.

    For ``pwl`` the kink at 0.5 takes the right derivative (+t).
    """
    x = np.asarray(x, dtype=float)
    t, c = dc.t, dc.c
    if dc.kind is PenaltyKind.PWL:
        sigma = np.where(x < 0.5, -1.0, 1.0)
        return t * sigma - c
    if dc.kind is PenaltyKind.QUAD:
        return t * (2.0 * x - 1.0) - c
    return t * (2.0 * math.pi ** 2 * x - math.pi * np.sin(2.0 * math.pi * x)) - c


def project_polytope(lp: LpProblem, z, x0, max_iter: int | None = None) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{A_eq x = b_eq, A_ub x <= b_ub, lb <= x <= ub}``.

    Primal active-set method started from the feasible point ``x0``.
    """
    z = np.asarray(z, dtype=float)
    x = np.array(x0, dtype=float)
    n = x.size
    eye = np.eye(n)
    G = np.vstack([lp.A_ub, eye, -eye])
    h = np.concatenate([lp.b_ub, lp.ub, -lp.lb])
    E = _independent_rows(lp.A_eq)
    work: list[int] = []
    max_iter = max_iter or 20 * (n + G.shape[0])
    for _ in range(max_iter):
        C = np.vstack([E, G[work]]) if work else E
        grad = x - z
        if C.shape[0]:
            Q, R = np.linalg.qr(C.T)
            step = -(grad - Q @ (Q.T @ grad))
        else:
            step = -grad
        if np.linalg.norm(step) <= 1e-12 * max(1.0, np.linalg.norm(x)):
            if not work:
                return x
            # multipliers of C^T lam = -grad
            lam = np.linalg.solve(R, -(Q.T @ grad)) if C.shape[0] else np.zeros(0)
            lam_w = lam[E.shape[0]:]
            j = int(np.argmin(lam_w))
            if lam_w[j] >= -1e-12:
                return x
            work.pop(j)
            continue
        Gp = G @ step
        slack = h - G @ x
        alpha, block = 1.0, -1
        inactive = np.ones(G.shape[0], dtype=bool)
        inactive[work] = False
        cand = np.flatnonzero(inactive & (Gp > 1e-14))
        if cand.size:
            ratios = np.maximum(slack[cand], 0.0) / Gp[cand]
            k = int(np.argmin(ratios))
            if ratios[k] < 1.0:
                alpha, block = float(ratios[k]), int(cand[k])
        x = x + alpha * step
        if block >= 0:
            work.append(block)
    raise DcaError("projection did not converge")


def _independent_rows(A) -> np.ndarray:
    if A.shape[0] == 0:
        return A
    Q, R = np.linalg.qr(A.T)
    diag = np.abs(np.diag(R))
    if np.all(diag > 1e-10 * max(1.0, diag.max())):
        return A
    keep = []
    basis = np.zeros((A.shape[1], 0))
    for i, row in enumerate(A):
        r = row - basis @ (basis.T @ row)
        nr = np.linalg.norm(r)
        if nr > 1e-10 * max(1.0, np.linalg.norm(row)):
            keep.append(i)
            basis = np.column_stack([basis, r / nr])
    return A[keep]


def dca_step(dc: DcProgram, y, x_prev=None, basis=None):
    """Minimize ``g_t(x) - <x, y>`` over K.

    Returns ``(x, basis)``; ``basis`` is an LP warm start (``None`` for trig).
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DcaError("non-finite linearization")
    if dc.kind is PenaltyKind.TRIG and dc.t > 0:
        if x_prev is None:
            res = solve_lp(dc.lp.with_objective(np.zeros_like(y)))
            if not res.ok:
                raise DcaError(f"feasible set is {res.status}")
            x_prev = res.x
        z = y / (2.0 * dc.t * math.pi ** 2)
        return project_polytope(dc.lp, z, x_prev), None
    res = solve_lp(dc.lp.with_objective(-y), basis=basis, eliminate=dc.eliminate)
    if not res.ok:
        raise DcaError(f"DCA subproblem {res.status}: {res.message}")
    return res.x, res.basis


@dataclass
class DcaResult:
    x: np.ndarray
    value: float
    iterations: int
    trace: list = field(default_factory=list)
    integral: bool = False
    converged: bool = True
    t: float = 0.0
    doublings: int = 0


def dca_solve(dc: DcProgram, x0, eps1: float = EPS1, eps2: float = EPS2,
              max_iter: int = MAX_ITER, basis=None) -> DcaResult:
    x = np.asarray(x0, dtype=float) if x0 is not None else None
    if x is None or x.shape != dc.c.shape:
        raise DcaError("starting point must be a vector of the program's dimension")
    Fx = dc.F(x)
    trace = [Fx]
    it = 0
    while it < max_iter:
        y = subgradient_h(dc, x)
        x_new, basis = dca_step(dc, y, x_prev=x, basis=basis)
        F_new = dc.F(x_new)
        it += 1
        trace.append(F_new)
        stop = (np.linalg.norm(x_new - x) <= eps1 or abs(F_new - Fx) <= eps2)
        x, Fx = x_new, F_new
        if stop:
            return DcaResult(x, Fx, it, trace, is_integral(x), True, dc.t)
    return DcaResult(x, Fx, it, trace, is_integral(x), False, dc.t)


def initial_penalty(c) -> float:
    return max(100.0, 10.0 * float(np.abs(c).sum()))


def dca_adaptive(dc: DcProgram, x0, max_doublings: int = MAX_DOUBLINGS, **kw) -> DcaResult:
    """Run DCA, doubling ``t`` and restarting from ``x0`` while the output is fractional.

    Starts from ``dc.t``; at most ``max_doublings`` restarts.
    """
    res = None
    t = dc.t
    for k in range(max_doublings + 1):
        trial = DcProgram(dc.lp, dc.kind, t, dc.eliminate)
        res = dca_solve(trial, x0, **kw)
        res.doublings = k
        if res.integral:
            break
        t *= 2.0
    return res
