"""Command-line interface.

Exit codes: 0 success, 2 infeasible, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import ilp
from .compressor import (CompressionInputError, CompressionRequest, InfeasibleCompression,
                         benchmark, compress, fscore, load_bench_dir, prepare, write_report)
from .lm import CorpusError, Sentence, TrigramModel, augment, read_corpus, train
from .parsetree import RuleSet, TreeParseError, read_trees
from .pdcabb import SolverOptions

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3

log = logging.getLogger("sentcomp")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sentcomp", description="Extractive sentence compression.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a trigram model")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--keep-case", action="store_true")

    def problem_args(p):
        p.add_argument("--model", required=True, type=Path)
        p.add_argument("--sentence", required=True)
        p.add_argument("--tree", type=Path)
        p.add_argument("--rules", type=Path, help="defaults to the bundled rules")
        p.add_argument("--rate", type=float)
        p.add_argument("--lmin", type=int)
        p.add_argument("--lmax", type=int)
        p.add_argument("--variant", choices=["hybrid", "prob"], default="hybrid")
        p.add_argument("--log-probs", action="store_true")

    p = sub.add_parser("compress", help="compress one sentence")
    problem_args(p)
    p.add_argument("--penalty", choices=["pwl", "quad", "trig"], default="pwl")
    p.add_argument("--t0", type=float)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--solver", choices=["pdcabb", "bruteforce"], default="pdcabb")
    p.add_argument("--json", action="store_true", help="emit one JSON record")

    p = sub.add_parser("eval", help="F-score of a candidate against a reference")
    p.add_argument("--candidate", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--mu", type=float, default=1.0)

    p = sub.add_parser("bench", help="benchmark a directory of trees and references")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--rates", default="0.5,0.7,0.9")
    p.add_argument("--variants", default="hybrid,prob")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("export-lp", help="write the ILP in CPLEX LP format")
    problem_args(p)
    p.add_argument("--out", required=True, type=Path)
    return ap


def _request(args, options=None) -> CompressionRequest:
    model = TrigramModel.load(args.model)
    sentence = Sentence.from_text(args.sentence)
    tree = None
    if args.tree is not None:
        trees = read_trees(args.tree)
        if not trees:
            raise CompressionInputError(f"no tree in {args.tree}")
        tree = trees[0]
    rules = RuleSet.load(args.rules) if args.rules else None
    if args.rate is not None and (args.lmin is not None or args.lmax is not None):
        raise CompressionInputError("give either --rate or --lmin/--lmax, not both")
    return CompressionRequest(sentence, model, tree, rules, rate=args.rate, lmin=args.lmin,
                              lmax=args.lmax, variant=args.variant,
                              solver=getattr(args, "solver", "pdcabb"),
                              options=options or SolverOptions(), log_probs=args.log_probs)


def cmd_train(args) -> int:
    sentences, skipped = read_corpus(args.corpus, lowercase=not args.keep_case)
    model = train(sentences, lowercase=not args.keep_case)
    model.save(args.out)
    print(json.dumps({"sentences": len(sentences), "skipped": skipped,
                      "vocabulary": model.V, "out": str(args.out)}))
    return EXIT_OK


def cmd_compress(args) -> int:
    opts = SolverOptions(workers=args.workers, eps=args.eps, penalty=args.penalty, t0=args.t0)
    res = compress(_request(args, opts))
    if args.json:
        print(json.dumps(res.record()))
    else:
        print(res.text)
    return EXIT_OK


def cmd_eval(args) -> int:
    r = fscore(args.candidate, args.reference, args.mu)
    print(json.dumps({"A": r.A, "B": r.B, "C": r.C, "P": r.P, "R": r.R, "mu": r.mu, "F": r.F}))
    return EXIT_OK


def cmd_bench(args) -> int:
    model = TrigramModel.load(args.model)
    items, rules = load_bench_dir(args.input)
    rates = [float(r) for r in args.rates.split(",") if r.strip()]
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows, summary = benchmark(items, model, variants, rates, rules,
                              SolverOptions(workers=args.workers))
    summary_path = write_report(rows, summary, args.out)
    for s in summary:
        print(json.dumps(s))
    log.info("wrote %s and %s", args.out, summary_path)
    return EXIT_OK


def cmd_export_lp(args) -> int:
    req = _request(args)
    fixing, phrases, lmin, lmax = prepare(req)
    inst = ilp.build_model(augment(req.sentence), req.model, lmin, lmax, fixing, phrases,
                           log_probs=req.log_probs)
    ilp.export_lp(inst, args.out)
    print(json.dumps({"out": str(args.out), "variables": inst.index.N,
                      "equalities": inst.A_eq.shape[0], "inequalities": inst.A_ub.shape[0]}))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "compress": cmd_compress, "eval": cmd_eval,
            "bench": cmd_bench, "export-lp": cmd_export_lp}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InfeasibleCompression, ilp.InfeasibleModelError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (CompressionInputError, CorpusError, TreeParseError, ilp.ModelError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
