"""Command-line front end.

Exit status is 0 when every example went through, 1 when some examples
failed (each failure is reported) and 2 on fatal input, output or
configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .config import ConfigError, load_config
from .corpus_io import (
    CorpusError,
    DgRecord,
    LfRecord,
    read_break_csv,
    read_dg_file,
    read_lf_file,
    read_tensor_file,
    AlignmentRecord,
    write_alignment_file,
    write_dg_file,
    write_lf_file,
)
from .core import QdmrError, parse_qdmr_text, tokenize
from .decode_ilp import decode, load_combinations, validate_dg
from .graphs import dg_to_lf
from .lexicon import LexiconError
from .lf_em import lf_em
from . import pipeline

EXIT_OK, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2


class Reporter:
    """Collects per-example failures; prints them as text or JSON lines on
    stderr."""

    def __init__(self, json_errors: bool):
        self.json_errors = json_errors
        self.failures = 0

    def example(self, ex_id, stage, error_type, message):
        self.failures += 1
        if self.json_errors:
            sys.stderr.write(json.dumps({"id": ex_id, "stage": stage, "error_type": error_type,
                                         "message": message}, sort_keys=True) + "\n")
        else:
            sys.stderr.write(f"{ex_id}: {stage}: {error_type}: {message}\n")

    def fatal(self, exc: BaseException) -> int:
        if self.json_errors:
            sys.stderr.write(json.dumps({"id": None, "stage": "fatal", "error_type": type(exc).__name__,
                                         "message": str(exc)}, sort_keys=True) + "\n")
        else:
            sys.stderr.write(f"error: {exc}\n")
        return EXIT_FATAL

    @property
    def status(self) -> int:
        return EXIT_PARTIAL if self.failures else EXIT_OK


def _pct(k, n):
    return 100.0 * k / n if n else 0.0


def _load_examples(path):
    if path is None:
        return pipeline.load_sample_corpus()
    return read_break_csv(path)


# -- subcommands -----------------------------------------------------------

def cmd_qdmr2lf(args, cfg, rep):
    examples = _load_examples(args.input)
    results = pipeline.run_parallel(pipeline.to_lf, examples, cfg)
    records = []
    for r in results:
        if not r.ok and args.report_failures:
            rep.example(r.id, r.stage, r.error_type, r.error)
        elif not r.ok:
            rep.failures += 1
        records.append(LfRecord(r.id, r.lf, r.question, r.decomposition, r.error))
    write_lf_file(args.output, records)
    ok = sum(r.ok for r in results)
    print(f"converted {ok}/{len(results)} decompositions ({_pct(ok, len(results)):.2f}%)", file=sys.stderr)


def cmd_lfem(args, cfg, rep):
    gold = read_lf_file(args.gold)
    pred = {r.id: r for r in read_lf_file(args.pred)}
    lex = pipeline.get_lexicon(cfg.lexicon)
    hits = 0
    for g in gold:
        if g.lf is None:
            rep.example(g.id, "lfem", "MissingGold", "gold record has no LF")
            continue
        p = pred.get(g.id)
        ok = p is not None and p.lf is not None and lf_em(p.lf, g.lf, lex)
        hits += ok
        if args.per_example:
            print(f"{g.id}\t{int(ok)}")
    n = sum(g.lf is not None for g in gold)
    print(f"LF-EM: {hits / n if n else 0.0:.3f}")


def cmd_align(args, cfg, rep):
    if args.weights_config:
        w = load_config(args.weights_config).weights
        cfg = cfg.override(**{k: getattr(w, k) for k in w.__dataclass_fields__})
    examples = _load_examples(args.input)
    results = pipeline.run_parallel(pipeline.to_alignment, examples, cfg)
    records = []
    for r in results:
        if not r.ok:
            rep.example(r.id, r.stage, r.error_type, r.error)
        try:
            steps = tuple(s.tokens for s in parse_qdmr_text(r.decomposition).steps)
        except QdmrError:
            steps = ()
        qt = r.aug.tokens[: r.aug.alignable_len] if r.aug else tuple(tokenize(r.question))
        records.append(AlignmentRecord(r.id, qt, steps, r.alignment, r.error))
    write_alignment_file(args.output, records)


def cmd_qdmr2dg(args, cfg, rep):
    cfg = cfg.override(k_dum=args.k_dum, k_dup=args.k_dup)
    examples = _load_examples(args.input)
    results = pipeline.run_parallel(pipeline.to_dg, examples, cfg)
    records = []
    for r in results:
        if not r.ok:
            rep.example(r.id, r.stage, r.error_type, r.error)
        records.append(DgRecord(r.id, r.dg, r.error))
    write_dg_file(args.output, records)
    ok = sum(r.ok for r in results)
    print(f"converted {ok}/{len(results)} decompositions to graphs ({_pct(ok, len(results)):.2f}%)",
          file=sys.stderr)


def cmd_dg2lf(args, cfg, rep):
    records = read_dg_file(args.input)
    combos = load_combinations(cfg.combinations)
    lex = pipeline.get_lexicon(cfg.lexicon)
    out = []
    for r in records:
        if r.dg is None:
            rep.example(r.id, "dg2lf", "MissingGraph", r.error or "no graph")
            out.append(LfRecord(r.id, None, error=r.error or "no graph"))
            continue
        try:
            if args.mode == "strict":
                bad = validate_dg(r.dg, None, lex, combos)
                if bad:
                    raise QdmrError(f"invalid graph: {', '.join(bad)}")
            out.append(LfRecord(r.id, dg_to_lf(r.dg)))
        except QdmrError as exc:
            rep.example(r.id, "dg2lf", type(exc).__name__, str(exc))
            out.append(LfRecord(r.id, None, error=str(exc)))
    write_lf_file(args.output, out)


def cmd_decode(args, cfg, rep):
    tensors = read_tensor_file(args.probs)
    combos = load_combinations(cfg.combinations)
    lex = pipeline.get_lexicon(cfg.lexicon)
    limit = args.time_limit_ms if args.time_limit_ms is not None else cfg.time_limit_ms
    out = []
    for pt in tensors:
        if args.method == "ilp":
            res = decode(pt, "ilp", combos=combos, lexicon=lex, time_limit_ms=limit)
        else:
            res = decode(pt, "greedy")
        violations = validate_dg(res.graph, pt.augmented(), lex, combos)
        if res.status != "optimal":
            rep.example(pt.id, "decode", res.status, f"solver status {res.status}")
        out.append(DgRecord(pt.id, res.graph, extra={"status": res.status, "objective": res.objective,
                                                     "violations": violations}))
    write_dg_file(args.output, out)


def cmd_roundtrip(args, cfg, rep):
    examples = _load_examples(args.input)
    results = pipeline.run_parallel(pipeline.roundtrip, examples, cfg)
    by_stage: dict = {}
    for r in results:
        if not r.ok:
            by_stage[r.stage] = by_stage.get(r.stage, 0) + 1
            if args.report_failures:
                rep.example(r.id, r.stage, r.error_type, r.error)
            else:
                rep.failures += 1
    ok = sum(r.ok for r in results)
    print(f"round trip: {ok}/{len(results)} self-match ({_pct(ok, len(results)):.2f}%)")
    if args.stats:
        converted = sum(r.lf is not None for r in results)
        print(f"qdmr->lf converted: {converted}/{len(results)} ({_pct(converted, len(results)):.2f}%)")
        for stage in ("qdmr2lf", "align", "qdmr2dg", "dg2lf", "lfem"):
            print(f"failed at {stage}: {by_stage.get(stage, 0)}")
    if args.output:
        write_lf_file(args.output, [LfRecord(r.id, r.lf2, r.question, r.decomposition, r.error)
                                    for r in results])


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--lexicon", help="lexicon file or directory")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="accepted for compatibility; has no effect")
    common.add_argument("--json-errors", action="store_true", help="report errors as JSON lines on stderr")

    ap = argparse.ArgumentParser(prog="qdecomp", description="QDMR logical forms, alignments and graphs.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qdmr2lf", parents=[common], help="convert decompositions to logical forms")
    p.add_argument("--input", help="corpus CSV (default: bundled sample)")
    p.add_argument("--output", default="-")
    p.add_argument("--report-failures", action="store_true")
    p.set_defaults(func=cmd_qdmr2lf)

    p = sub.add_parser("lfem", parents=[common], help="LF exact match between two LF files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--per-example", action="store_true")
    p.set_defaults(func=cmd_lfem)

    p = sub.add_parser("align", parents=[common], help="align decomposition tokens to the question")
    p.add_argument("--input")
    p.add_argument("--output", default="-")
    p.add_argument("--weights-config", help="config file holding c_min, c_unique, ... values")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("qdmr2dg", parents=[common], help="convert decompositions to dependency graphs")
    p.add_argument("--input")
    p.add_argument("--output", default="-")
    p.add_argument("--k-dum", type=int)
    p.add_argument("--k-dup", type=int)
    p.set_defaults(func=cmd_qdmr2dg)

    p = sub.add_parser("dg2lf", parents=[common], help="read logical forms off dependency graphs")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--mode", choices=("soft", "strict"), default="soft")
    p.set_defaults(func=cmd_dg2lf)

    p = sub.add_parser("decode", parents=[common], help="decode probability tensors into graphs")
    p.add_argument("--probs", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--method", choices=("greedy", "ilp"), default="ilp")
    p.add_argument("--time-limit-ms", type=int)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("roundtrip", parents=[common], help="QDMR -> LF -> DG -> LF self-match")
    p.add_argument("--input", help="corpus CSV (default: bundled sample)")
    p.add_argument("--output", help="write reconstructed LFs here")
    p.add_argument("--stats", action="store_true")
    p.add_argument("--report-failures", action="store_true")
    p.set_defaults(func=cmd_roundtrip)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    rep = Reporter(args.json_errors)
    try:
        cfg = load_config(args.config).override(lexicon=args.lexicon, jobs=args.jobs, seed=args.seed)
        pipeline.get_lexicon(cfg.lexicon)
        args.func(args, cfg, rep)
    except (OSError, CorpusError, ConfigError, LexiconError, json.JSONDecodeError) as exc:
        return rep.fatal(exc)
    return rep.status


if __name__ == "__main__":
    sys.exit(main())
