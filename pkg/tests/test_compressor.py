import csv
import math

import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import (DATA, TELESCOPE_SENTENCE, TELESCOPE_TREE, TOY_VOCAB, telescope_model, telescope_tree,
                     mini_model, toy_corpus)
from sentcomp import ilp
from sentcomp.compressor import (CSV_COLUMNS, HYBRID, PROB, QUARTILE_NOTE, SUMMARY_COLUMNS,
                                 BenchItem, CompressionInputError, CompressionRequest,
                                 InfeasibleCompression, benchmark, compress, five_number, fscore,
                                 load_bench_dir, prepare, rate_to_bounds, write_report)
from sentcomp.lm import Sentence, augment, train
from sentcomp.parsetree import KEEP, RuleSet, parse_bracketed

import random


# -- rate_to_bounds --------------------------------------------------------------

@pytest.mark.parametrize("rate, n, ones, want", [
    (0.5, 10, 0, (3, 5)),
    (1.0, 7, 0, (5, 7)),
    (0.5, 10, 6, (6, 6)),
    (0.7, 10, 0, (5, 7)),
    (0.1, 4, 0, (2, 2)),
])
def test_rate_to_bounds(rate, n, ones, want):
    assert rate_to_bounds(rate, n, ones) == want


def test_rate_to_bounds_rejects():
    for r in (0.0, -0.1, 1.01):
        with pytest.raises(ValueError):
            rate_to_bounds(r, 10)


# -- F-score ---------------------------------------------------------------------

def test_fscore_worked_example():
    r = fscore("the man saw", "the man saw the dog")
    assert (r.A, r.B, r.C) == (3, 2, 0)
    assert r.P == 1.0 and r.R == 0.6 and r.F == 0.75


def test_fscore_identity():
    r = fscore("The man saw the dog .", "the man saw the dog .")
    assert r.P == r.R == r.F == 1.0
    assert fscore("a b", "a b", mu=0.3).F == 1.0


def test_fscore_limits():
    cand, ref = "the man saw a cat", "the man saw the dog"
    r = fscore(cand, ref)
    assert fscore(cand, ref, 1e-6).F == pytest.approx(r.P, abs=1e-4)
    assert fscore(cand, ref, 1e6).F == pytest.approx(r.R, abs=1e-4)


def test_fscore_zero_overlap_and_errors():
    r = fscore("x y", "a b")
    assert r.A == 0 and r.P == r.R == r.F == 0.0
    with pytest.raises(ValueError):
        fscore("a", "")
    with pytest.raises(ValueError):
        fscore("a", "a", mu=0.0)


def test_fscore_multiset():
    r = fscore("the the the", "the dog")
    assert (r.A, r.B, r.C) == (1, 1, 2)


def test_fscore_formula_agrees():
    r = fscore("a b c d", "a b e f g", mu=2.0)
    m2 = 4.0
    assert r.F == pytest.approx((m2 + 1) * r.P * r.R / (m2 * r.P + r.R), abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20),
       st.floats(0.01, 100.0))
def test_property_fscore_bounds_monotone(A, B, C, mu):
    assume(A + B > 0)
    cand = ["w"] * A + ["c"] * C
    ref = ["w"] * A + ["r"] * B
    f = fscore(cand, ref, mu).F
    assert 0.0 <= f <= 1.0
    f2 = fscore(cand + ["w"], ref + ["w"], mu).F
    assert f2 >= f - 1e-12


def test_five_number():
    assert five_number([0.2, 0.4, 0.6, 0.8, 1.0]) == pytest.approx((0.2, 0.4, 0.6, 0.8, 1.0))
    assert five_number([1.0, 0.0]) == pytest.approx((0.0, 0.25, 0.5, 0.75, 1.0))
    assert all(math.isnan(v) for v in five_number([]))


# -- pipeline ----------------------------------------------------------------------

def test_telescope_pipeline():
    model = telescope_model()
    for variant in (HYBRID, PROB):
        for solver in ("pdcabb", "bruteforce"):
            res = compress(CompressionRequest(TELESCOPE_SENTENCE, model, telescope_tree(), rate=0.6,
                                              variant=variant, solver=solver))
            assert res.text == "The man saw the dog ."
            assert (res.lmin, res.lmax) == (4, 6)


def test_telescope_pp_deleted():
    rules = RuleSet.parse("PP 0\nDEFAULT 2\n")
    res = compress(CompressionRequest(TELESCOPE_SENTENCE, telescope_model(), telescope_tree(), rules,
                                      rate=0.7))
    assert res.fixing == {6: 0, 7: 0, 8: 0}
    assert res.text == "The man saw the dog ."


def test_rate_one_all_keep():
    rules = RuleSet({}, KEEP)
    res = compress(CompressionRequest(TELESCOPE_SENTENCE, telescope_model(), telescope_tree(), rules, rate=1.0))
    assert res.text == TELESCOPE_SENTENCE
    assert res.compression.kept == tuple(range(1, 10))


def test_five_word_matches_bruteforce():
    model = train(toy_corpus(random.Random(3)))
    s = "the big dog saw a"
    a = compress(CompressionRequest(s, model, lmin=2, lmax=4, variant=PROB))
    b = compress(CompressionRequest(s, model, lmin=2, lmax=4, variant=PROB, solver="bruteforce"))
    assert a.compression.kept == b.compression.kept
    assert a.objective == pytest.approx(b.objective, abs=1e-12)


def test_request_validation():
    m = telescope_model()
    with pytest.raises(CompressionInputError):
        CompressionRequest("a b", m, variant=PROB)
    with pytest.raises(CompressionInputError):
        CompressionRequest("a b", m, rate=0.5, lmin=2, lmax=2, variant=PROB)
    with pytest.raises(CompressionInputError):
        CompressionRequest("a b", m, rate=0.5)
    with pytest.raises(CompressionInputError):
        CompressionRequest("a b", m, rate=0.5, variant="other")


def test_tree_mismatch():
    req = CompressionRequest("The man saw a dog with the telescope .", telescope_model(),
                             telescope_tree(), rate=0.6)
    with pytest.raises(CompressionInputError):
        compress(req)


def test_infeasible_hint():
    rules = RuleSet.parse("PP 0\nDEFAULT 2\n")
    req = CompressionRequest(TELESCOPE_SENTENCE, telescope_model(), telescope_tree(), rules, lmin=7, lmax=9)
    with pytest.raises(InfeasibleCompression) as exc:
        compress(req)
    assert "lower the rate" in str(exc.value)


def test_record_schema():
    res = compress(CompressionRequest(TELESCOPE_SENTENCE, telescope_model(), telescope_tree(), rate=0.6))
    rec = res.record()
    assert set(rec) == {"sentence", "compression", "kept", "objective", "lmin", "lmax",
                        "variant", "status", "nodes", "dca_calls", "time_ms"}
    assert rec["compression"] == "The man saw the dog ."


# -- pipeline properties -------------------------------------------------------------

SYMS = ["S", "NP", "VP", "PP", "SBAR", "DT", "NN"]
MODEL = train(toy_corpus(random.Random(11), sentences=25))


@st.composite
def tree_text(draw):
    words = iter(draw(st.lists(st.sampled_from(TOY_VOCAB), min_size=40, max_size=40)))
    count = [0]

    def build(d):
        sym = draw(st.sampled_from(SYMS))
        if count[0] >= 7 or d == 0 or draw(st.booleans()):
            count[0] += 1
            return f"({sym} {next(words)})"
        kids = [build(d - 1) for _ in range(draw(st.integers(1, 3)))]
        return f"({sym} {' '.join(kids)})"
    return f"(S {build(3)} {build(2)})"


rules_st = st.builds(RuleSet, st.dictionaries(st.sampled_from(SYMS), st.sampled_from([0, 1, 2])),
                     st.sampled_from([1, 2]))


@settings(max_examples=60, deadline=None)
@given(tree_text(), rules_st, st.sampled_from([0.5, 0.7, 0.9, 1.0]))
def test_property_pipeline(text, rules, rate):
    tree = parse_bracketed(text)
    assume(tree.n >= 2)
    sent = Sentence(tuple(tree.words))
    req = CompressionRequest(sent, MODEL, tree, rules, rate=rate)
    try:
        res = compress(req)
    except InfeasibleCompression:
        with pytest.raises(ilp.InfeasibleModelError):
            fixing, phrases, lmin, lmax = prepare(req)
            ilp.brute_force_solve(augment(sent), MODEL, lmin, lmax, fixing, phrases)
        return
    kept = res.compression.kept
    assert list(kept) == sorted(set(kept))
    assert res.compression.words == tuple(sent.tokens[i - 1] for i in kept)
    assert res.lmin <= len(kept) <= res.lmax
    for i, v in res.fixing.items():
        assert (i in kept) == (v == 1)
    bf = compress(CompressionRequest(sent, MODEL, tree, rules, rate=rate, solver="bruteforce"))
    assert res.objective == pytest.approx(bf.objective, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(tree_text(), st.sampled_from([0.5, 0.7, 0.9]))
def test_property_variant_consistency(text, rate):
    tree = parse_bracketed(text)
    assume(tree.n >= 2)
    free = RuleSet({}, 2)
    sent = Sentence(tuple(tree.words))
    try:
        h = compress(CompressionRequest(sent, MODEL, tree, free, rate=rate, variant=HYBRID))
    except InfeasibleCompression:
        return
    assert h.fixing == {}
    p = compress(CompressionRequest(sent, MODEL, tree, free, rate=rate, variant=PROB))
    assert p.compression.kept == h.compression.kept
    assert p.objective == h.objective


# -- benchmark -------------------------------------------------------------------------

def test_bench_singleton(tmp_path):
    item = BenchItem("s001", telescope_tree(), "The man saw the dog .")
    rows, summary = benchmark([item], telescope_model(), [HYBRID], [0.6])
    assert len(rows) == 1 and rows[0]["f1"] == 1.0 and rows[0]["time_ms"] > 0
    out = tmp_path / "r.csv"
    sp = write_report(rows, summary, out)
    with open(out) as fh:
        data = list(csv.reader(fh))
    assert data[0] == CSV_COLUMNS and len(data) == 2
    lines = sp.read_text().splitlines()
    assert lines[0] == QUARTILE_NOTE
    assert lines[1].split(",") == SUMMARY_COLUMNS


def test_bench_fixture_schema(tmp_path):
    items, rules = load_bench_dir(DATA / "bench")
    assert len(items) == 10
    rows, summary = benchmark(items, mini_model(), rates=[0.7], rules=rules)
    assert len(rows) == 20 and len(summary) == 2
    assert [r["sentence_id"] for r in rows] == sorted(r["sentence_id"] for r in rows)
    out = tmp_path / "r.csv"
    write_report(rows, summary, out)
    with open(out) as fh:
        assert next(csv.reader(fh)) == ["sentence_id", "variant", "rate", "n", "kept",
                                        "objective", "f1", "time_ms", "nodes", "dca_calls"]
    for s in summary:
        assert s["count"] == 10
        assert s["f1_min"] <= s["f1_q1"] <= s["f1_median"] <= s["f1_q3"] <= s["f1_max"]


def test_bench_misaligned(tmp_path):
    (tmp_path / "trees.txt").write_text(TELESCOPE_TREE + "\n\n" + TELESCOPE_TREE + "\n")
    (tmp_path / "references.txt").write_text("The man saw the dog .\n")
    with pytest.raises(CompressionInputError):
        load_bench_dir(tmp_path)


def test_bench_infeasible_row():
    item = BenchItem("s001", telescope_tree(), "The man saw the dog .")
    rules = RuleSet.parse("VP 0\nDEFAULT 2\n")
    rows, _ = benchmark([item], telescope_model(), [HYBRID], [1.0], rules=rules)
    assert rows[0]["f1"] == 0.0 and math.isnan(rows[0]["objective"])
