"""End-to-end compression pipeline, F-score and benchmark harness."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ilp
from .lm import Sentence, TrigramModel, augment
from .parsetree import ParseTree, RuleSet, assign_labels, fix_variables, phrase_sets, read_trees
from .pdcabb import SolveResult, SolverOptions, solve

log = logging.getLogger(__name__)

HYBRID = "hybrid"
PROB = "prob"
VARIANTS = (HYBRID, PROB)

CSV_COLUMNS = ["sentence_id", "variant", "rate", "n", "kept", "objective", "f1",
               "time_ms", "nodes", "dca_calls"]
SUMMARY_COLUMNS = ["variant", "rate", "count", "mean_f1", "mean_time_ms",
                   "f1_min", "f1_q1", "f1_median", "f1_q3", "f1_max"]
QUARTILE_NOTE = "# quartiles: linear interpolation between order statistics (inclusive)"


class CompressionInputError(ValueError):
    pass


class InfeasibleCompression(RuntimeError):
    pass


def rate_to_bounds(rate: float, n: int, fixed_ones: int = 0) -> tuple[int, int]:
    """Length bounds for a target compression rate.

    ``lmax = ceil(rate * n)``, ``lmin = max(2, floor(0.75 * rate * n))``,
    both clamped to ``[fixed_ones, n]``.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"rate must lie in (0, 1], got {rate}")
    # guard against 0.7 * 10 = 7.000000000000001
    lmax = math.ceil(rate * n - 1e-9)
    lmin = max(2, math.floor(0.75 * rate * n + 1e-9))
    lmax = min(max(lmax, fixed_ones), n)
    lmin = min(max(lmin, fixed_ones), n)
    return lmin, max(lmin, lmax)


@dataclass
class CompressionRequest:
    sentence: Sentence
    model: TrigramModel
    tree: ParseTree | None = None
    rules: RuleSet | None = None
    rate: float | None = None
    lmin: int | None = None
    lmax: int | None = None
    variant: str = HYBRID
    solver: str = "pdcabb"
    options: SolverOptions = field(default_factory=SolverOptions)
    log_probs: bool = False
    scale: float = 1.0

    def __post_init__(self):
        if isinstance(self.sentence, str):
            self.sentence = Sentence.from_text(self.sentence)
        if (self.rate is None) == (self.lmin is None or self.lmax is None):
            raise CompressionInputError("give either a rate or both lmin and lmax")
        if self.variant not in VARIANTS:
            raise CompressionInputError(f"unknown variant {self.variant!r}")
        if self.solver not in ("pdcabb", "bruteforce"):
            raise CompressionInputError(f"unknown solver {self.solver!r}")
        if self.variant == HYBRID and self.tree is None:
            raise CompressionInputError("the hybrid variant needs a parse tree")


@dataclass
class CompressionResult:
    original: Sentence
    compression: ilp.Compression
    objective: float
    lmin: int
    lmax: int
    variant: str
    fixing: dict
    wall_time: float
    stats: SolveResult | None = None

    @property
    def text(self) -> str:
        return self.compression.text

    def record(self) -> dict:
        rec = {
            "sentence": " ".join(self.original.tokens),
            "compression": self.text,
            "kept": list(self.compression.kept),
            "objective": self.objective,
            "lmin": self.lmin,
            "lmax": self.lmax,
            "variant": self.variant,
            "status": self.stats.status if self.stats else "optimal",
            "nodes": self.stats.nodes if self.stats else 0,
            "dca_calls": self.stats.dca_calls if self.stats else 0,
            "time_ms": round(1000.0 * self.wall_time, 3),
        }
        return rec


def prepare(req: CompressionRequest):
    """Fixings, phrase sets and length bounds for ``req``."""
    tokens = req.sentence.tokens
    n = len(tokens)
    if n < 2:
        raise CompressionInputError("sentence must have at least two tokens")
    fixing: dict = {}
    phrases: list = []
    if req.tree is not None:
        if tuple(req.tree.words) != tuple(tokens):
            raise CompressionInputError(
                f"tree leaves {req.tree.words} do not match sentence tokens {list(tokens)}")
        phrases = phrase_sets(req.tree)
        if req.variant == HYBRID:
            rules = req.rules or RuleSet.default_rules()
            fixing = fix_variables(assign_labels(req.tree, rules))
    ones = sum(1 for v in fixing.values() if v == 1)
    if req.rate is not None:
        lmin, lmax = rate_to_bounds(req.rate, n, ones)
    else:
        lmin, lmax = req.lmin, req.lmax
    return fixing, phrases, lmin, lmax


def compress(req: CompressionRequest) -> CompressionResult:
    t0 = time.perf_counter()
    fixing, phrases, lmin, lmax = prepare(req)
    sent = augment(req.sentence)
    try:
        inst = ilp.build_model(sent, req.model, lmin, lmax, fixing, phrases,
                               scale=req.scale, log_probs=req.log_probs)
    except ilp.InfeasibleModelError as exc:
        raise InfeasibleCompression(
            f"{exc}; lower the rate or relax the compression rules") from exc
    stats = None
    if req.solver == "bruteforce":
        try:
            comp = ilp.brute_force_solve(sent, req.model, inst.lmin, inst.lmax, fixing, phrases,
                                         scale=req.scale, log_probs=req.log_probs)
        except ilp.InfeasibleModelError as exc:
            raise InfeasibleCompression(str(exc)) from exc
    else:
        stats = solve(inst, req.options)
        if stats.x is None:
            raise InfeasibleCompression(
                "no compression satisfies the length bounds, fixings and phrase rules")
        comp = ilp.decode(inst, stats.x)
    return CompressionResult(req.sentence, comp, comp.objective, inst.lmin, inst.lmax,
                             req.variant, fixing, time.perf_counter() - t0, stats)


@dataclass(frozen=True)
class FScoreReport:
    A: int
    B: int
    C: int
    P: float
    R: float
    mu: float
    F: float


def fscore(candidate, reference, mu: float = 1.0) -> FScoreReport:
    """Precision/recall F-measure over case-insensitive token multisets.

    >>> fscore("the man saw", "the man saw the dog").F
    0.75
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    cand = _tokens(candidate)
    ref = _tokens(reference)
    if not ref:
        raise ValueError("reference compression is empty")
    cc, rc = Counter(cand), Counter(ref)
    A = sum((cc & rc).values())
    B = len(ref) - A
    C = len(cand) - A
    if A == 0:
        return FScoreReport(A, B, C, 0.0, 0.0, mu, 0.0)
    P = A / (A + C)
    R = A / (A + B)
    # (m2+1)PR/(m2 P + R) with P, R substituted: fewer roundings
    m2 = mu * mu
    F = 1.0 if B == C == 0 else (m2 + 1.0) * A / (m2 * (A + B) + A + C)
    return FScoreReport(A, B, C, P, R, mu, F)


def _tokens(s) -> list[str]:
    if isinstance(s, Sentence):
        toks = s.tokens
    elif isinstance(s, str):
        toks = s.split()
    else:
        toks = list(s)
    return [t.lower() for t in toks]


def five_number(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(min, Q1, median, Q3, max) with linear interpolation between order statistics."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return (math.nan,) * 5
    q = np.percentile(v, [0, 25, 50, 75, 100], method="linear")
    return tuple(float(x) for x in q)


@dataclass
class BenchItem:
    sentence_id: str
    tree: ParseTree
    reference: str


def load_bench_dir(path) -> tuple[list[BenchItem], RuleSet | None]:
    """``trees.txt`` (blank-line separated), ``references.txt`` (one per line,
    aligned), optional ``rules.txt``."""
    path = Path(path)
    trees = read_trees(path / "trees.txt")
    refs = [ln.strip() for ln in (path / "references.txt").read_text(encoding="utf-8")
            .splitlines() if ln.strip()]
    if len(trees) != len(refs):
        raise CompressionInputError(
            f"{len(trees)} trees but {len(refs)} reference compressions in {path}")
    rules = RuleSet.load(path / "rules.txt") if (path / "rules.txt").exists() else None
    items = [BenchItem(f"s{i + 1:03d}", t, r) for i, (t, r) in enumerate(zip(trees, refs))]
    return items, rules


def benchmark(items: Sequence[BenchItem], model: TrigramModel, variants=VARIANTS,
              rates=(0.5, 0.7, 0.9), rules: RuleSet | None = None,
              options: SolverOptions | None = None):
    """Compress every item under every (variant, rate).

    Returns ``(rows, summary)``: per-sentence dicts keyed by
    :data:`CSV_COLUMNS` and per-(variant, rate) dicts keyed by
    :data:`SUMMARY_COLUMNS`.
    """
    options = options or SolverOptions()
    rows = []
    for variant in variants:
        for rate in rates:
            for item in items:
                sent = Sentence(tuple(item.tree.words))
                req = CompressionRequest(sent, model, item.tree, rules, rate=rate,
                                         variant=variant, options=options)
                t0 = time.perf_counter()
                try:
                    res = compress(req)
                except InfeasibleCompression as exc:
                    log.warning("%s (%s, %.2f): %s", item.sentence_id, variant, rate, exc)
                    rows.append(dict(sentence_id=item.sentence_id, variant=variant, rate=rate,
                                     n=len(sent), kept="", objective=math.nan, f1=0.0,
                                     time_ms=1000.0 * (time.perf_counter() - t0),
                                     nodes=0, dca_calls=0))
                    continue
                rows.append(dict(
                    sentence_id=item.sentence_id, variant=variant, rate=rate, n=len(sent),
                    kept=" ".join(map(str, res.compression.kept)),
                    objective=res.objective,
                    f1=fscore(res.compression.words, item.reference).F,
                    time_ms=1000.0 * res.wall_time,
                    nodes=res.stats.nodes if res.stats else 0,
                    dca_calls=res.stats.dca_calls if res.stats else 0))
    rows.sort(key=lambda r: (r["sentence_id"], VARIANTS.index(r["variant"]), r["rate"]))
    summary = []
    for variant in variants:
        for rate in rates:
            sel = [r for r in rows if r["variant"] == variant and r["rate"] == rate]
            f1s = [r["f1"] for r in sel]
            mn, q1, med, q3, mx = five_number(f1s)
            summary.append(dict(variant=variant, rate=rate, count=len(sel),
                                mean_f1=float(np.mean(f1s)) if f1s else math.nan,
                                mean_time_ms=float(np.mean([r["time_ms"] for r in sel]))
                                if sel else math.nan,
                                f1_min=mn, f1_q1=q1, f1_median=med, f1_q3=q3, f1_max=mx))
    return rows, summary


def write_report(rows, summary, out) -> Path:
    """Write the per-sentence CSV to ``out`` and the summary next to it
    (``<stem>_summary.csv``)."""
    out = Path(out)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    summary_path = out.with_name(out.stem + "_summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(QUARTILE_NOTE + "\n")
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(summary)
    return summary_path
