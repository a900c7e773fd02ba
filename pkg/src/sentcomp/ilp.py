"""Binary linear program for trigram sentence compression.

For a sentence ``x_1 .. x_n`` (with ``x_0`` the start token) the model has

* ``d_i``        word ``i`` is kept,                  1 <= i <= n
* ``a_i``        word ``i`` starts the compression,   1 <= i <= n
* ``b_ij``       ``x_i x_j`` ends the compression,     0 <= i < j <= n
* ``g_ijk``      ``x_i x_j x_k`` is a kept trigram,    0 <= i < j < k <= n

which is ``(n^3 + 3n^2 + 14n) / 6`` binaries.  The objective maximizes the
sum of start, trigram and end probabilities of the kept chain; it is stored
negated so that every solver in this package minimizes ``c @ x``.
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .lm import AugmentedSentence, TrigramModel

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
BRUTE_FORCE_MAX_N = 14


class ModelError(ValueError):
    pass


class InfeasibleModelError(ModelError):
    pass


class IntegrityError(RuntimeError):
    """A 0/1 vector does not encode a consistent compression."""


def variable_count(n: int) -> int:
    return (n ** 3 + 3 * n ** 2 + 14 * n) // 6


class VariableIndex:
    """Bijection between flat indices and typed coordinates.

    Typed coordinates are tuples ``("d", i)``, ``("a", i)``, ``("b", i, j)``
    and ``("g", i, j, k)``.
    """

    def __init__(self, n: int):
        if n < 2:
            raise ModelError(f"sentence length must be at least 2, got {n}")
        self.n = n
        coords: list[tuple] = [("d", i) for i in range(1, n + 1)]
        coords += [("a", i) for i in range(1, n + 1)]
        coords += [("b", i, j) for i, j in itertools.combinations(range(n + 1), 2)]
        coords += [("g", *t) for t in itertools.combinations(range(n + 1), 3)]
        self._coords = coords
        self._flat = {c: k for k, c in enumerate(coords)}
        self.N = len(coords)

    def __len__(self):
        return self.N

    def typed(self, k: int) -> tuple:
        return self._coords[k]

    def flat(self, coord: tuple) -> int:
        return self._flat[coord]

    def delta(self, i: int) -> int:
        return self._flat[("d", i)]

    def alpha(self, i: int) -> int:
        return self._flat[("a", i)]

    def beta(self, i: int, j: int) -> int:
        return self._flat[("b", i, j)]

    def gamma(self, i: int, j: int, k: int) -> int:
        return self._flat[("g", i, j, k)]

    def name(self, k: int) -> str:
        kind, *pos = self._coords[k]
        return kind + "_".join(str(p) for p in pos)

    def parse_name(self, name: str) -> int:
        m = re.fullmatch(r"([dabg])(\d+(?:_\d+)*)", name)
        if not m:
            raise KeyError(name)
        return self._flat[(m.group(1), *(int(p) for p in m.group(2).split("_")))]

    def coords(self) -> list[tuple]:
        return list(self._coords)


def build_index(n: int) -> VariableIndex:
    return VariableIndex(n)


@dataclass(frozen=True)
class Scorer:
    """Probability source for the objective.

    ``scale`` multiplies every probability; ``log_probs`` replaces each
    probability by its logarithm (applied before scaling).
    """

    model: TrigramModel
    scale: float = 1.0
    log_probs: bool = False

    def _t(self, p: float) -> float:
        return self.scale * (math.log(p) if self.log_probs else p)

    def start(self, w: str) -> float:
        return self._t(self.model.prob_start(w))

    def trigram(self, u: str, v: str, w: str) -> float:
        return self._t(self.model.prob_trigram(u, v, w))

    def end(self, u: str, v: str) -> float:
        return self._t(self.model.prob_end(u, v))


@dataclass
class IlpInstance:
    index: VariableIndex
    c: np.ndarray
    A_eq: sparse.csr_matrix
    b_eq: np.ndarray
    A_ub: sparse.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    fixings: dict = field(default_factory=dict)
    eq_names: list = field(default_factory=list)
    ub_names: list = field(default_factory=list)
    sentence: AugmentedSentence | None = None
    lmin: int | None = None
    lmax: int | None = None
    phrases: tuple = ()

    @property
    def n(self) -> int:
        return self.index.n

    @property
    def N(self) -> int:
        return self.index.N

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float))

    def residuals(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return self.A_eq @ x - self.b_eq, self.A_ub @ x - self.b_ub

    def is_feasible(self, x, tol: float = FEAS_TOL, integral: bool = True) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.N,):
            return False
        req, rub = self.residuals(x)
        if np.any(np.abs(req) > tol) or np.any(rub > tol):
            return False
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            return False
        if integral and np.any(np.abs(x - np.round(x)) > tol):
            return False
        return True

    def free_mask(self) -> np.ndarray:
        return self.lb < self.ub


def chain_of(index: VariableIndex, kept: Sequence[int]) -> list[int]:
    """Flat indices of the alpha, gamma and beta variables of a kept sequence."""
    kept = list(kept)
    if len(kept) < 2:
        raise IntegrityError("a compression needs at least two words")
    out = [index.alpha(kept[0])]
    path = [0] + kept
    for a, b, c in zip(path, path[1:], path[2:]):
        out.append(index.gamma(a, b, c))
    out.append(index.beta(kept[-2], kept[-1]))
    return out


def assignment(index: VariableIndex, kept: Sequence[int]) -> np.ndarray:
    x = np.zeros(index.N)
    for i in kept:
        x[index.delta(i)] = 1.0
    x[chain_of(index, kept)] = 1.0
    return x


def _coef_table(index: VariableIndex, sent: AugmentedSentence, scorer: Scorer) -> np.ndarray:
    w = sent.tokens
    weights = np.zeros(index.N)
    for k, coord in enumerate(index.coords()):
        kind = coord[0]
        if kind == "a":
            weights[k] = scorer.start(w[coord[1]])
        elif kind == "b":
            weights[k] = scorer.end(w[coord[1]], w[coord[2]])
        elif kind == "g":
            _, i, j, kk = coord
            weights[k] = scorer.trigram(w[i], w[j], w[kk])
    return weights


class _Rows:
    def __init__(self):
        self.entries: list[dict] = []
        self.rhs: list[float] = []
        self.names: list[str] = []

    def add(self, name, coefs: dict, rhs):
        self.entries.append(coefs)
        self.rhs.append(float(rhs))
        self.names.append(name)

    def matrix(self, N: int) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for r, coefs in enumerate(self.entries):
            for col in sorted(coefs):
                rows.append(r)
                cols.append(col)
                vals.append(coefs[col])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.entries), N))


def _propagate_zeros(index: VariableIndex, fixings: dict) -> dict:
    out = dict(fixings)
    dropped = {i for i in range(1, index.n + 1) if fixings.get(index.delta(i)) == 0}
    if not dropped:
        return out
    for k, coord in enumerate(index.coords()):
        if coord[0] != "d" and dropped.intersection(coord[1:]):
            if out.get(k, 0) != 0:
                raise InfeasibleModelError(f"{index.name(k)} fixed to 1 but uses a deleted word")
            out[k] = 0
    return out


def build_model(sent: AugmentedSentence, model: TrigramModel, lmin: int, lmax: int,
                fixing: dict | None = None, phrases=(), *, scale: float = 1.0,
                log_probs: bool = False) -> IlpInstance:
    """Assemble the ILP for one sentence.

    Parameters
    ----------
    sent : AugmentedSentence
    model : TrigramModel
    lmin, lmax : int
        Bounds on the number of kept words.  ``lmin`` is raised to 2 (a
        compression must end with a word pair) and ``lmax`` is widened to
        the number of words fixed to 1, with a warning.
    fixing : dict, optional
        Word position -> 0/1 from the parse-tree stage.
    phrases : sequence of (i, positions)
        PP/SBAR phrase sets; word ``i`` introduces the phrase.
    scale, log_probs
        Objective transform, see :class:`Scorer`.
    """
    n = sent.n
    fixing = dict(fixing or {})
    if not 1 <= lmin <= lmax <= n:
        raise ModelError(f"length bounds must satisfy 1 <= lmin <= lmax <= n, got "
                         f"lmin={lmin}, lmax={lmax}, n={n}")
    for pos, val in fixing.items():
        if not 1 <= pos <= n or val not in (0, 1):
            raise ModelError(f"bad fixing {pos} -> {val}")
    if lmin < 2:
        log.warning("lmin=%d raised to 2: a compression must end with a word pair", lmin)
        lmin = 2
        lmax = max(lmax, lmin)
    ones = sum(1 for v in fixing.values() if v == 1)
    zeros = sum(1 for v in fixing.values() if v == 0)
    if ones > lmax:
        log.warning("lmax=%d widened to %d to admit the words fixed by the parse tree",
                    lmax, ones)
        lmax = ones
    if lmin > n - zeros:
        raise InfeasibleModelError(
            f"lmin={lmin} exceeds the {n - zeros} words not deleted by the parse tree")

    index = build_index(n)
    fixed = {index.delta(i): v for i, v in fixing.items()}
    fixed = _propagate_zeros(index, fixed)
    zero = {k for k, v in fixed.items() if v == 0}

    eq, ub = _Rows(), _Rows()

    def row(terms):
        coefs: dict = {}
        for k, v in terms:
            if k not in zero:
                coefs[k] = coefs.get(k, 0.0) + v
        return coefs

    eq.add("c1", row((index.alpha(i), 1.0) for i in range(1, n + 1)), 1)
    for k in range(1, n + 1):
        terms = [(index.delta(k), 1.0), (index.alpha(k), -1.0)]
        terms += [(index.gamma(i, j, k), -1.0) for i, j in itertools.combinations(range(k), 2)]
        eq.add(f"c2_{k}", row(terms), 0)
    for j in range(1, n + 1):
        terms = [(index.delta(j), 1.0)]
        terms += [(index.gamma(i, j, k), -1.0) for i in range(j) for k in range(j + 1, n + 1)]
        terms += [(index.beta(i, j), -1.0) for i in range(j)]
        eq.add(f"c3_{j}", row(terms), 0)
    for i in range(1, n + 1):
        terms = [(index.delta(i), 1.0)]
        terms += [(index.gamma(i, j, k), -1.0) for j, k in itertools.combinations(range(i + 1, n + 1), 2)]
        terms += [(index.beta(i, j), -1.0) for j in range(i + 1, n + 1)]
        terms += [(index.beta(h, i), -1.0) for h in range(i)]
        eq.add(f"c4_{i}", row(terms), 0)
    eq.add("c5", row((index.beta(i, j), 1.0)
                     for i, j in itertools.combinations(range(1, n + 1), 2)), 1)

    deltas = [index.delta(i) for i in range(1, n + 1)]
    ub.add("c6_lo", row((d, -1.0) for d in deltas), -lmin)
    ub.add("c6_hi", row((d, 1.0) for d in deltas), lmax)
    for intro, others in phrases:
        others = tuple(others)
        if intro in others or not others:
            raise ModelError(f"bad phrase set ({intro}, {others})")
        di = index.delta(intro)
        ub.add(f"c7_{intro}", row([(di, 1.0)] + [(index.delta(j), -1.0) for j in others]), 0)
        for j in others:
            ub.add(f"c7_{intro}_{j}", row([(index.delta(j), 1.0), (di, -1.0)]), 0)

    weights = _coef_table(index, sent, Scorer(model, scale, log_probs))
    lb = np.zeros(index.N)
    ubd = np.ones(index.N)
    for k, v in fixed.items():
        lb[k] = ubd[k] = v
    return IlpInstance(
        index=index, c=-weights,
        A_eq=eq.matrix(index.N), b_eq=np.array(eq.rhs),
        A_ub=ub.matrix(index.N), b_ub=np.array(ub.rhs),
        lb=lb, ub=ubd, fixings=fixed,
        eq_names=eq.names, ub_names=ub.names,
        sentence=sent, lmin=lmin, lmax=lmax,
        phrases=tuple((i, tuple(o)) for i, o in phrases),
    )


@dataclass(frozen=True)
class Compression:
    kept: tuple[int, ...]
    words: tuple[str, ...]
    objective: float
    chain: tuple[tuple, ...] = ()

    @property
    def text(self) -> str:
        return " ".join(self.words)

    def __len__(self):
        return len(self.kept)


def decode(inst: IlpInstance, x) -> Compression:
    """Turn a feasible 0/1 vector into a compression, verifying the chain."""
    x = np.asarray(x, dtype=float)
    if not inst.is_feasible(x):
        raise IntegrityError("vector is not a feasible 0/1 point of the model")
    xr = np.round(x)
    idx = inst.index
    kept = [i for i in range(1, idx.n + 1) if xr[idx.delta(i)] == 1]
    expected = assignment(idx, kept)
    bad = np.flatnonzero(expected != xr)
    if bad.size:
        names = ", ".join(idx.name(k) for k in bad[:5])
        raise IntegrityError(f"chain does not match kept words {kept}: {names}")
    chain = chain_of(idx, kept)
    objective = -math.fsum(inst.c[chain])
    if abs(objective + inst.objective(xr)) > 1e-9:
        raise IntegrityError("objective mismatch between chain and c @ x")
    words = tuple(inst.sentence.tokens[i] for i in kept) if inst.sentence else ()
    return Compression(tuple(kept), words, objective, tuple(idx.typed(k) for k in chain))


def _subset_ok(kept, n, lmin, lmax, fixing, phrases) -> bool:
    if not lmin <= len(kept) <= lmax:
        return False
    ks = set(kept)
    for pos, val in fixing.items():
        if (pos in ks) != bool(val):
            return False
    for intro, others in phrases:
        if intro in ks:
            if not any(j in ks for j in others):
                return False
        elif any(j in ks for j in others):
            return False
    return True


def chain_score(words: Sequence[str], kept: Sequence[int], scorer: Scorer) -> float:
    """Start + trigram + end score of a kept sequence; ``words[0]`` is the start token."""
    path = [0] + list(kept)
    terms = [scorer.start(words[kept[0]])]
    for a, b, c in zip(path, path[1:], path[2:]):
        terms.append(scorer.trigram(words[a], words[b], words[c]))
    terms.append(scorer.end(words[kept[-2]], words[kept[-1]]))
    return math.fsum(terms)


def brute_force_solve(sent: AugmentedSentence, model: TrigramModel, lmin: int, lmax: int,
                      fixing: dict | None = None, phrases=(), *, scale: float = 1.0,
                      log_probs: bool = False) -> Compression:
    """Exhaustive search over word subsets.  Ties go to the lexicographically
    smallest kept-position tuple."""
    n = sent.n
    if n > BRUTE_FORCE_MAX_N:
        raise ModelError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    fixing = dict(fixing or {})
    lmin = max(lmin, 2)
    scorer = Scorer(model, scale, log_probs)
    best = None
    for mask in range(1, 1 << n):
        kept = tuple(i + 1 for i in range(n) if mask >> i & 1)
        if not _subset_ok(kept, n, lmin, lmax, fixing, phrases):
            continue
        score = chain_score(sent.tokens, kept, scorer)
        if best is None or score > best[0] or (score == best[0] and kept < best[1]):
            best = (score, kept)
    if best is None:
        raise InfeasibleModelError("no word subset satisfies the constraints")
    score, kept = best
    idx = build_index(n)
    chain = tuple(idx.typed(k) for k in chain_of(idx, kept))
    return Compression(kept, tuple(sent.tokens[i] for i in kept), score, chain)


# -- LP file export -----------------------------------------------------------

_TERMS_PER_LINE = 6


def _fmt(v: float) -> str:
    return "%.17g" % v


def _linear(coefs: list[tuple[float, str]]) -> list[str]:
    parts = []
    for v, name in coefs:
        sign = "-" if v < 0 or (v == 0 and math.copysign(1, v) < 0) else "+"
        parts.append(f"{sign} {_fmt(abs(v))} {name}")
    if not parts:
        parts = ["0 " + "d1"]
    lines = []
    for s in range(0, len(parts), _TERMS_PER_LINE):
        lines.append("   " + " ".join(parts[s:s + _TERMS_PER_LINE]))
    return lines


def export_lp(inst: IlpInstance, path) -> None:
    """Write the instance in CPLEX LP format.

    Coefficients are printed with 17 significant digits so that
    :func:`import_lp` restores them bit-exactly.  Fixed variables are written
    as ``name = value`` bounds.
    """
    idx = inst.index
    out = [f"\\ sentcomp ILP v1 n={idx.n}", "Minimize", " obj:"]
    out += _linear([(inst.c[k], idx.name(k)) for k in range(idx.N) if inst.c[k] != 0])
    out.append("Subject To")
    for A, b, names, op in ((inst.A_eq, inst.b_eq, inst.eq_names, "="),
                            (inst.A_ub, inst.b_ub, inst.ub_names, "<=")):
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            coefs = [(A.data[p], idx.name(A.indices[p])) for p in range(lo, hi)]
            out.append(f" {names[r]}:")
            out += _linear(coefs)
            out.append(f"   {op} {_fmt(b[r])}")
    out.append("Bounds")
    for k in range(idx.N):
        if inst.lb[k] == inst.ub[k]:
            out.append(f" {idx.name(k)} = {_fmt(inst.lb[k])}")
    out.append("Binaries")
    names = [idx.name(k) for k in range(idx.N)]
    for s in range(0, len(names), 10):
        out.append(" " + " ".join(names[s:s + 10]))
    out.append("End")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


_TERM_RE = re.compile(r"([+-])\s*([0-9.eE+-]+)\s+([A-Za-z]\w*)")


def import_lp(path) -> IlpInstance:
    """Read back a file written by :func:`export_lp` (not a general LP reader)."""
    text = Path(path).read_text(encoding="utf-8")
    m = re.match(r"\\ sentcomp ILP v1 n=(\d+)", text)
    if not m:
        raise ModelError(f"{path}: not a sentcomp LP export")
    idx = build_index(int(m.group(1)))
    body = text[m.end():]
    sec = re.split(r"^(Minimize|Subject To|Bounds|Binaries|End)\s*$", body, flags=re.M)
    sections = dict(zip(sec[1::2], sec[2::2]))

    def terms(chunk):
        coefs = {}
        for sign, val, name in _TERM_RE.findall(chunk):
            v = float(val)
            coefs[idx.parse_name(name)] = -v if sign == "-" else v
        return coefs

    c = np.zeros(idx.N)
    for k, v in terms(sections["Minimize"].split(":", 1)[1]).items():
        c[k] = v
    eq, ub = _Rows(), _Rows()
    for name, expr, op, rhs in re.findall(r"^\s*(\w+):\s*\n(.*?)^\s*(=|<=)\s*(\S+)\s*$",
                                          sections["Subject To"], flags=re.M | re.S):
        (eq if op == "=" else ub).add(name, terms(expr), float(rhs))
    lb = np.zeros(idx.N)
    ubd = np.ones(idx.N)
    fixings = {}
    for name, val in re.findall(r"^\s*(\w+)\s*=\s*(\S+)\s*$", sections["Bounds"], flags=re.M):
        k = idx.parse_name(name)
        lb[k] = ubd[k] = float(val)
        fixings[k] = int(float(val))
    return IlpInstance(index=idx, c=c, A_eq=eq.matrix(idx.N), b_eq=np.array(eq.rhs),
                       A_ub=ub.matrix(idx.N), b_ub=np.array(ub.rhs), lb=lb, ub=ubd,
                       fixings=fixings, eq_names=eq.names, ub_names=ub.names)
