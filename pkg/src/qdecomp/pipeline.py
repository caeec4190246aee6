"""Per-example pipeline stages shared by the command line and the demos.

Each stage returns a record and never raises for a bad example; the error
is stored on the record instead so a corpus run can report it and go on.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Sequence

from .alignment import Alignment, align
from .config import Config
from .core import AugmentedQuestion, DependencyGraph, LogicalForm, Question, QdmrError, parse_qdmr_text
from .corpus_io import CorpusExample, read_break_csv
from .graphs import augment_question, dg_to_lf, extract_sdg, sdg_to_dg
from .ilp import SolverTimeout
from .lexicon import Lexicon
from .lf_em import lf_em
from .qdmr_to_lf import qdmr_to_lf

SAMPLE_CORPUS = "sample_corpus.csv"


@lru_cache(maxsize=4)
def get_lexicon(path: str | None = None) -> Lexicon:
    return Lexicon.load(path)


def sample_corpus_path():
    return resources.files("qdecomp.data").joinpath(SAMPLE_CORPUS)


def load_sample_corpus() -> list[CorpusExample]:
    with resources.as_file(sample_corpus_path()) as p:
        return read_break_csv(p)


@dataclass
class StageResult:
    id: str
    question: str
    decomposition: str
    lf: LogicalForm | None = None
    alignment: Alignment | None = None
    aug: AugmentedQuestion | None = None
    dg: DependencyGraph | None = None
    lf2: LogicalForm | None = None
    stage: str | None = None  # stage that failed
    error: str | None = None
    error_type: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def fail(self, stage: str, exc: BaseException) -> "StageResult":
        self.stage, self.error, self.error_type = stage, str(exc), type(exc).__name__
        return self


def to_lf(ex: CorpusExample, cfg: Config) -> StageResult:
    res = StageResult(ex.id, ex.question, ex.decomposition)
    try:
        res.lf = qdmr_to_lf(parse_qdmr_text(ex.decomposition), get_lexicon(cfg.lexicon))
    except QdmrError as exc:
        return res.fail("qdmr2lf", exc)
    return res


def to_alignment(ex: CorpusExample, cfg: Config) -> StageResult:
    res = to_lf(ex, cfg)
    if not res.ok:
        return res
    lex = get_lexicon(cfg.lexicon)
    res.aug = augment_question(Question.from_text(ex.question), lex, cfg.k_dum, cfg.k_dup)
    try:
        res.alignment = align(res.aug, parse_qdmr_text(ex.decomposition), lex, cfg.weights, cfg.time_limit_ms)
    except SolverTimeout as exc:
        res.alignment = exc.solution
        return res.fail("align", exc)
    return res


def to_dg(ex: CorpusExample, cfg: Config) -> StageResult:
    res = to_alignment(ex, cfg)
    if not res.ok:
        return res
    try:
        res.dg = sdg_to_dg(extract_sdg(res.lf, res.alignment, res.aug), res.aug)
    except QdmrError as exc:
        return res.fail("qdmr2dg", exc)
    return res


def roundtrip(ex: CorpusExample, cfg: Config) -> StageResult:
    """QDMR -> LF -> DG -> LF, then compare the two LFs with LF-EM."""
    res = to_dg(ex, cfg)
    if not res.ok:
        return res
    try:
        res.lf2 = dg_to_lf(res.dg, res.aug)
    except QdmrError as exc:
        return res.fail("dg2lf", exc)
    if not lf_em(res.lf2, res.lf, get_lexicon(cfg.lexicon)):
        return res.fail("lfem", ValueError("reconstructed LF does not match"))
    return res


def _call(args):
    fn, item, cfg = args
    return fn(item, cfg)


def run_parallel(fn: Callable, items: Sequence | Iterable, cfg: Config, jobs: int | None = None) -> list:
    """``[fn(item, cfg) for item in items]``, over ``jobs`` processes.
    Results keep the input order."""
    items = list(items)
    jobs = cfg.jobs if jobs is None else jobs
    if jobs <= 1 or len(items) < 2:
        return [fn(it, cfg) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_call, [(fn, it, cfg) for it in items], chunksize=max(1, len(items) // (4 * jobs))))
