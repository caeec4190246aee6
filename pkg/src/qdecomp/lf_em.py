"""LF normalization and the LF-EM exact-match metric.

A logical form is normalized in three stages: token normalization of the
argument values (trigger removal, auxiliary removal, representative
mapping), merging of implicit select/filter steps into their referrer, and
a canonical reordering of the steps by layer.  Two LFs match when their
normalized step strings are equal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .core import (
    LogicalForm,
    LogicalFormStep,
    Operator,
    QdmrError,
    STRUCTURAL_TOKENS,
    is_punct,
    is_ref,
    ref_index,
    render_lf_step,
    sorted_value,
)
from .lexicon import AGG_FAMILY, Lexicon, default_lexicon


class CycleDetected(QdmrError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NormalizedLf:
    steps: tuple
    provenance: tuple  # for each output step, the input step indices (0-based) it came from

    def __len__(self):
        return len(self.steps)


# -- token normalization ---------------------------------------------------

def property_phrases(op: Operator, props: Sequence[str], lex: Lexicon) -> list:
    """Phrases removed by the property transformation of a step."""
    op = Operator(op)
    phrases = []
    for p in props:
        phrases.extend(lex.triggers(op, p))
        for base, cmp_base in (("more-than-", "more"), ("less-than-", "less"), ("equals-", "equals")):
            if p.startswith(base):
                phrases.extend(lex.triggers(Operator.COMPARATIVE, cmp_base))
                phrases.extend((w,) for w in lex.number_words(p[len(base):]))
        if p.startswith(("and-", "or-")):
            phrases.extend([("both",), ("either",), ("true",), ("false",)])
    if op in (Operator.AGGREGATE, Operator.GROUP, Operator.COMPARISON) and set(props) & set(AGG_FAMILY):
        phrases.extend(lex.triggers(op, "count"))
    return phrases


def _remove_phrases(tokens: list, phrases, keep: Callable[[str], bool]) -> list:
    """Remove contiguous occurrences of ``phrases`` from the subsequence of
    ``tokens`` selected by ``keep``; tokens outside the subsequence stay."""
    idx = [i for i, t in enumerate(tokens) if keep(t)]
    sub = [tokens[i] for i in idx]
    dead = set()
    cores = sorted({tuple(w for w in ph if keep(w)) for ph in phrases} - {()}, key=lambda c: (-len(c), c))
    for core in cores:
        k = len(core)
        i = 0
        while i + k <= len(sub):
            if tuple(sub[i:i + k]) == core and not any(j in dead for j in range(i, i + k)):
                dead.update(range(i, i + k))
                i += k
            else:
                i += 1
    drop = {idx[j] for j in dead}
    return [t for i, t in enumerate(tokens) if i not in drop]


def t_prop(op, props, value: Sequence[str], lex: Lexicon) -> list:
    return _remove_phrases(list(value), property_phrases(op, props, lex), lambda t: not lex.is_aux(t))


def t_aux(value: Sequence[str], lex: Lexicon) -> list:
    multi = [p for p in lex.op_phrases if len(p) > 1]
    toks = _remove_phrases(list(value), multi, lambda t: True)
    return [t for t in toks if not lex.is_uninformative(t) and t not in STRUCTURAL_TOKENS and not is_punct(t)]


def t_rep(value: Sequence[str], lex: Lexicon) -> list:
    return [lex.rep(t) for t in value]


def normalize_step_tokens(step: LogicalFormStep, lex: Lexicon) -> LogicalFormStep:
    args = []
    for name, value in step.args:
        v = t_rep(t_aux(t_prop(step.operator, step.properties, value, lex), lex), lex)
        v = sorted_value(set(v))
        if v:
            args.append((name, v))
    return LogicalFormStep(step.operator, step.properties, tuple(args))


def normalize_tokens(lf: LogicalForm, lexicon: Lexicon | None = None) -> LogicalForm:
    lex = lexicon or default_lexicon()
    return LogicalForm(tuple(normalize_step_tokens(s, lex) for s in lf.steps))


# -- merging ---------------------------------------------------------------

def _single_ref(value):
    refs = [t for t in value if is_ref(t)]
    return ref_index(refs[0]) if len(refs) == 1 else None


def _union(*values):
    out = set()
    for v in values:
        out.update(v)
    return sorted_value(out)


def _arg(step, name):
    vals = step.arg_values(name)
    return _union(*vals) if vals else ()


def merge_candidates(lf: LogicalForm) -> list[tuple[int, int]]:
    """All (referrer, referenced) 0-based index pairs where a merge rule
    applies."""
    out = []
    for a, step in enumerate(lf.steps):
        if step.operator not in (Operator.PROJECT, Operator.FILTER):
            continue
        subs = step.arg_values("sub")
        if len(subs) != 1:
            continue
        k = _single_ref(subs[0])
        if k is None:
            continue
        b = k - 1
        dst = lf.steps[b].operator
        if step.operator is Operator.PROJECT and dst is Operator.SELECT:
            out.append((a, b))
        elif step.operator is Operator.FILTER and dst in (Operator.SELECT, Operator.FILTER):
            out.append((a, b))
    return out


def _merged_step(src: LogicalFormStep, dst: LogicalFormStep, ref: str) -> LogicalFormStep:
    sub = tuple(t for t in _arg(src, "sub") if t != ref)
    if src.operator is Operator.PROJECT:
        # project-sub -> select = project
        args = [("sub", _union(sub, *[v for _, v in dst.args]))]
        args += [(n, v) for n, v in src.args if n != "sub"]
        return LogicalFormStep(Operator.PROJECT, src.properties, tuple(args))
    if dst.operator is Operator.SELECT:
        # filter-sub -> select: the filter condition folds into the selection
        return LogicalFormStep(Operator.SELECT, (), (("sub", _union(sub, _arg(src, "condition"), _arg(dst, "sub"))),))
    # filter-sub -> filter = filter
    args = [("sub", _union(sub, _arg(dst, "sub")))]
    cond = _union(_arg(src, "condition"), _arg(dst, "condition"))
    if cond:
        args.append(("condition", cond))
    return LogicalFormStep(Operator.FILTER, (), tuple(args))


def _rewrite_refs(step: LogicalFormStep, mapping: dict) -> LogicalFormStep:
    """``mapping`` takes old 1-based step numbers to new ones."""
    args = tuple((n, sorted_value({f"#{mapping[ref_index(t)]}" if is_ref(t) else t for t in v}))
                 for n, v in step.args)
    return LogicalFormStep(step.operator, step.properties, args)


def apply_merge(lf: LogicalForm, a: int, b: int) -> LogicalForm:
    steps = list(lf.steps)
    steps[a] = _merged_step(steps[a], steps[b], f"#{b + 1}")
    still_used = any(b + 1 in s.refs for i, s in enumerate(steps))
    if still_used:
        return LogicalForm(tuple(steps))
    mapping = {k: (k if k <= b else k - 1) for k in range(1, len(steps) + 1) if k != b + 1}
    kept = [_rewrite_refs(s, mapping) for i, s in enumerate(steps) if i != b]
    return LogicalForm(tuple(kept))


def merge_steps(lf: LogicalForm, choose: Callable[[list], int] | None = None,
                max_rounds: int = 1000) -> LogicalForm:
    """Apply the merge rules until none fires.  ``choose`` picks which of the
    applicable (referrer, referenced) pairs to apply next; by default the
    first one."""
    for _ in range(max_rounds):
        cands = merge_candidates(lf)
        if not cands:
            return lf
        a, b = cands[choose(cands) if choose else 0]
        lf = apply_merge(lf, a, b)
    raise RuntimeError("merge did not reach a fixed point")


# -- reordering ------------------------------------------------------------

def layers(lf: LogicalForm) -> list[int]:
    m = len(lf.steps)
    memo: dict = {}
    state = [0] * m

    def d(i):
        if i in memo:
            return memo[i]
        if state[i] == 1:
            raise CycleDetected(f"reference cycle through step {i + 1}")
        state[i] = 1
        refs = lf.steps[i].refs
        val = 0 if not refs else 1 + max(d(k - 1) for k in refs)
        state[i] = 2
        memo[i] = val
        return val

    return [d(i) for i in range(m)]


def step_layer(lf: LogicalForm, i: int) -> int:
    """Layer of step ``i`` (0-based): 0 without references, otherwise one
    more than the deepest referenced step."""
    return layers(lf)[i]


def reorder(lf: LogicalForm) -> NormalizedLf:
    """Order steps by layer, then by their canonical string.

    Layers are placed bottom-up, so every reference inside a step already
    has its final index when the step is rendered for comparison.  Steps
    that render identically within a layer are the same computation and are
    collapsed into one.
    """
    lay = layers(lf)
    new_index: dict = {}
    out: list = []
    prov: list = []
    for d in sorted(set(lay)):
        rendered = []
        for i, step in enumerate(lf.steps):
            if lay[i] != d:
                continue
            s = render_lf_step(_rewrite_refs(step, new_index))
            rendered.append((s, i))
        rendered.sort(key=lambda r: r[0])
        for s, i in rendered:
            if out and out[-1] == s and lay[prov[-1][0]] == d:
                prov[-1].append(i)
                new_index[i + 1] = len(out)
                continue
            out.append(s)
            prov.append([i])
            new_index[i + 1] = len(out)
    return NormalizedLf(tuple(out), tuple(tuple(p) for p in prov))


# -- metric ----------------------------------------------------------------

def normalize(lf: LogicalForm, lexicon: Lexicon | None = None) -> NormalizedLf:
    lex = lexicon or default_lexicon()
    return reorder(merge_steps(normalize_tokens(lf, lex)))


def lf_em(pred: LogicalForm | None, gold: LogicalForm, lexicon: Lexicon | None = None) -> bool:
    if pred is None:
        return False
    lex = lexicon or default_lexicon()
    return normalize(pred, lex).steps == normalize(gold, lex).steps


def corpus_lf_em(preds: Iterable[LogicalForm | None], golds: Iterable[LogicalForm],
                 lexicon: Lexicon | None = None) -> float:
    preds, golds = list(preds), list(golds)
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions for {len(golds)} gold LFs")
    if not golds:
        return 0.0
    return sum(lf_em(p, g, lexicon) for p, g in zip(preds, golds)) / len(golds)
