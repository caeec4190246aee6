"""Rule-based conversion of QDMR steps into logical-form steps.

Each step goes through three stages: an operator cascade, a property
trigger scan restricted to the chosen operator, and an argument template
for that operator.  The cascade order matters; more specific surface
patterns are tried first and ``select`` is the fallback.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import (
    LogicalForm,
    LogicalFormStep,
    Operator,
    Qdmr,
    QdmrError,
    QdmrStep,
    is_ref,
    parse_qdmr_text,  # noqa: F401  (re-exported)
)
from .lexicon import AGG_FAMILY, Lexicon, default_lexicon

DISCARD_CUES = (("besides",), ("except",), ("excluding",), ("other", "than"), ("but", "not"), ("not", "in"))
SORT_CUES = (("ordered", "by"), ("sorted", "by"), ("order", "by"), ("sort", "by"))
GROUP_CUES = (("for", "each"), ("for", "every"))
UNION_GLUE = frozenset({",", "and", "or"})
NUMERIC_BASE = {"more": "more-than", "less": "less-than", "equals": "equals"}

#: free-text slot of each operator; residue text lands here
TEXT_SLOT = {
    Operator.SELECT: "sub",
    Operator.FILTER: "condition",
    Operator.PROJECT: "projection",
    Operator.AGGREGATE: "arg",
    Operator.GROUP: "value",
    Operator.SUPERLATIVE: "attribute",
    Operator.COMPARATIVE: "condition",
    Operator.COMPARISON: "arg",
    Operator.UNION: "sub",
    Operator.INTERSECTION: "projection",
    Operator.DISCARD: "exclude",
    Operator.SORT: "order",
    Operator.BOOLEAN: "condition",
    Operator.ARITHMETIC: "arg",
}


def text_slot(op: Operator, props: Sequence[str] = ()) -> str:
    if op is Operator.ARITHMETIC and set(props) & {"diff", "div"}:
        return "right"
    return TEXT_SLOT[op]


class ConversionError(QdmrError):
    """Raised when a step cannot be converted.  ``step`` is 1-based."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class UndetectableOperator(ConversionError):
    pass


class ConflictingProperties(ConversionError):
    pass


class MissingMandatoryArgument(ConversionError):
    pass


@dataclass
class TriggerMatch:
    start: int
    end: int
    prop: str
    phrase: tuple


@dataclass
class DetectionTrace:
    operator: Operator | None = None
    properties: tuple = ()
    matches: list = field(default_factory=list)
    arg_spans: dict = field(default_factory=dict)

    @property
    def consumed(self) -> set:
        return {i for m in self.matches for i in range(m.start, m.end)}


# -- token helpers ---------------------------------------------------------

def _find(tokens, phrase, start=0):
    k = len(phrase)
    for i in range(start, len(tokens) - k + 1):
        if tuple(tokens[i:i + k]) == phrase:
            return i
    return -1


def _find_any(tokens, phrases):
    """Leftmost occurrence of any phrase; longest wins at equal position."""
    best = None
    for ph in phrases:
        i = _find(tokens, ph)
        if i >= 0 and (best is None or (i, -len(ph)) < (best[0], -len(best[1]))):
            best = (i, ph)
    return best


def _strip(positions, tokens, lex):
    """Drop leading and trailing uninformative tokens from a position list."""
    pos = list(positions)
    while pos and lex.is_uninformative(tokens[pos[0]]):
        pos.pop(0)
    while pos and lex.is_uninformative(tokens[pos[-1]]):
        pos.pop()
    return pos


def _refs(tokens):
    return [i for i, t in enumerate(tokens) if is_ref(t)]


def _informative(positions, tokens, lex):
    return [i for i in positions if not lex.is_uninformative(tokens[i])]


# -- operator detection ----------------------------------------------------

def _arith_triggers(lex):
    return [(p, ph) for p in ("diff", "div", "multiply", "sum") for ph in lex.triggers(Operator.ARITHMETIC, p)]


def _arith_split(tokens, lex):
    """Locate ``<trigger> [of|between] A and B``; returns (trigger match,
    left positions, right positions) or None."""
    hits = []
    for prop, ph in _arith_triggers(lex):
        i = _find(tokens, ph)
        if i >= 0:
            hits.append((i, -len(ph), prop, ph))
    if not hits:
        return None
    i, neg, prop, ph = min(hits)
    after = list(range(i + len(ph), len(tokens)))
    ands = [p for p in after if tokens[p] == "and"]
    if not ands:
        return None
    cut = ands[-1]
    left = _strip([p for p in after if p < cut], tokens, lex)
    right = _strip([p for p in after if p > cut], tokens, lex)
    if not left or not right:
        return None
    return TriggerMatch(i, i - neg, prop, ph), left, right


def _agg_rows(op, lex):
    return [(p, ph) for p in ("max", "min", "count", "sum", "avg") for ph in lex.triggers(op, p)]


def _has_trigger(tokens, rows):
    return any(_find(tokens, ph) >= 0 for _, ph in rows if ph)


def detect_operator(step: QdmrStep, position: int = 1, lexicon: Lexicon | None = None) -> Operator:
    """Pick the operator of a step by the fixed rule cascade."""
    lex = lexicon or default_lexicon()
    toks = list(step.tokens)
    refs = _refs(toks)
    nref = len(refs)
    first_ref = bool(toks) and is_ref(toks[0])

    if nref >= 1 and not first_ref and _arith_split(toks, lex) is not None:
        return Operator.ARITHMETIC
    if toks[0] == "which" and nref >= 2:
        return Operator.COMPARISON
    if toks[0] != "if" and "both" in toks:
        b = toks.index("both")
        if "and" in toks[b:] and len([r for r in refs if r > b]) >= 2:
            return Operator.INTERSECTION
    cue = _find_any(toks, DISCARD_CUES)
    if cue is not None and nref >= 1:
        i, ph = cue
        if _informative(range(i), toks, lex) and _informative(range(i + len(ph), len(toks)), toks, lex):
            return Operator.DISCARD
    if nref >= 2 and all(is_ref(t) or t in UNION_GLUE or lex.is_aux(t) for t in toks):
        return Operator.UNION
    cue = _find_any(toks, SORT_CUES)
    if cue is not None and cue[0] > 0 and nref >= 1:
        return Operator.SORT
    if toks[0] == "if":
        return Operator.BOOLEAN
    if first_ref and nref == 2 and _has_trigger(toks, _rows(Operator.SUPERLATIVE, lex)):
        return Operator.SUPERLATIVE
    if first_ref and nref >= 2 and _has_trigger(toks, _rows(Operator.COMPARATIVE, lex)):
        return Operator.COMPARATIVE
    if nref >= 1 and _find_any(toks, GROUP_CUES) is not None:
        return Operator.GROUP
    if nref == 1 and _has_trigger(toks, _agg_rows(Operator.AGGREGATE, lex)):
        trace = DetectionTrace()
        _match(toks, _agg_rows(Operator.AGGREGATE, lex), trace)
        rest = [i for i in range(len(toks)) if i not in trace.consumed and not is_ref(toks[i])]
        if not _informative(rest, toks, lex):
            return Operator.AGGREGATE
    if nref >= 1 and (not first_ref or (len(toks) > 1 and toks[1] == "'s")):
        return Operator.PROJECT
    if first_ref:
        return Operator.FILTER
    if nref == 0 and any(lex.is_content(t) for t in toks):
        return Operator.SELECT
    raise UndetectableOperator(f"no rule matches {' '.join(toks)!r}", position)


def _rows(op, lex):
    return [(p, ph) for (o, p), phrases in lex.property_entries.items() if o is op for ph in phrases]


# -- property detection ----------------------------------------------------

def _match(tokens, rows, trace, blocked=()):
    """Longest-first, leftmost, non-overlapping trigger matching."""
    cands = []
    for prop, ph in rows:
        if not ph:
            continue
        start = 0
        while True:
            i = _find(tokens, ph, start)
            if i < 0:
                break
            cands.append((-len(ph), i, prop, ph))
            start = i + 1
    taken = set(trace.consumed) | set(blocked)
    for neg, i, prop, ph in sorted(cands):
        span = range(i, i - neg)
        if any(p in taken or is_ref(tokens[p]) for p in span):
            continue
        taken.update(span)
        trace.matches.append(TriggerMatch(i, i - neg, prop, ph))


def _numeric_upgrade(tokens, trace, lex):
    """``more than 2`` at the end of a step becomes ``more-than-2``."""
    for m in list(trace.matches):
        if m.prop not in NUMERIC_BASE:
            continue
        rest = [p for p in range(m.end, len(tokens)) if not lex.is_uninformative(tokens[p])]
        if len(rest) == 1:
            value = lex.number_value(tokens[rest[0]])
            if value is not None:
                m.prop = f"{NUMERIC_BASE[m.prop]}-{value}"
                trace.matches.append(TriggerMatch(rest[0], rest[0] + 1, m.prop, (tokens[rest[0]],)))


def detect_properties(step: QdmrStep, op: Operator, lexicon: Lexicon | None = None,
                      trace: DetectionTrace | None = None) -> tuple:
    lex = lexicon or default_lexicon()
    trace = trace if trace is not None else DetectionTrace()
    toks = list(step.tokens)
    op = Operator(op)

    if op is Operator.ARITHMETIC:
        split = _arith_split(toks, lex)
        if split is not None:
            trace.matches.append(split[0])
    elif op is Operator.BOOLEAN:
        logic = None
        for word, kind in (("both", "and"), ("either", "or")):
            if word in toks:
                logic = kind
                trace.matches.append(TriggerMatch(toks.index(word), toks.index(word) + 1, "", (word,)))
        if logic is not None:
            truth = "false" if "false" in toks else "true"
            if truth in toks:
                k = toks.index(truth)
                trace.matches.append(TriggerMatch(k, k + 1, "", (truth,)))
            prop = f"{logic}-{truth}"
            for m in trace.matches:
                m.prop = prop
        _match(toks, _rows(Operator.BOOLEAN, lex), trace)
        # numeric comparisons borrow the comparative cues
        cmp_rows = [(p, ph) for p, ph in _rows(Operator.COMPARATIVE, lex) if p in ("more", "less")]
        probe = DetectionTrace(matches=list(trace.matches))
        _match(toks, cmp_rows, probe)
        extra = probe.matches[len(trace.matches):]
        for m in extra:
            rest = [p for p in range(m.end, len(toks)) if not lex.is_uninformative(toks[p])]
            if len(rest) == 1 and lex.number_value(toks[rest[0]]) is not None:
                trace.matches.append(m)
        _numeric_upgrade(toks, trace, lex)
    elif op is Operator.COMPARATIVE:
        _match(toks, _rows(op, lex), trace)
        _numeric_upgrade(toks, trace, lex)
    elif op is Operator.GROUP:
        cue = _find_any(toks, GROUP_CUES)
        blocked = range(cue[0], len(toks)) if cue else ()
        _match(toks, _rows(op, lex), trace, blocked)
    else:
        _match(toks, _rows(op, lex), trace)

    props = {m.prop for m in trace.matches if m.prop}
    if op in (Operator.AGGREGATE, Operator.GROUP, Operator.COMPARISON) and props & set(AGG_FAMILY):
        props.discard("count")
    if op is Operator.COMPARATIVE or op is Operator.BOOLEAN:
        for base, num in NUMERIC_BASE.items():
            if any(p.startswith(num + "-") for p in props):
                props.discard(base)
    if op is not Operator.BOOLEAN and len(props) > 1:
        raise ConflictingProperties(f"{op}: conflicting properties {sorted(props)}")
    trace.properties = tuple(sorted(props))
    return trace.properties


# -- argument extraction ---------------------------------------------------

def _value(positions, tokens):
    return tuple(tokens[p] for p in positions)


def extract_arguments(step: QdmrStep, op: Operator, props: Sequence[str], trace: DetectionTrace,
                      lexicon: Lexicon | None = None) -> tuple:
    lex = lexicon or default_lexicon()
    toks = list(step.tokens)
    op = Operator(op)
    used = trace.consumed
    refs = _refs(toks)
    free = [i for i in range(len(toks)) if i not in used]
    spans: list = []

    def add(name, positions):
        positions = [p for p in positions if p not in used]
        if positions:
            spans.append((name, positions))

    def residue(exclude):
        rest = [p for p in free if p not in exclude and not is_ref(toks[p])]
        return rest if _informative(rest, toks, lex) else []

    def need(cond, what):
        if not cond:
            raise MissingMandatoryArgument(f"{op} needs {what}")

    if op is Operator.SELECT:
        add("sub", free)
    elif op is Operator.FILTER:
        add("sub", [0])
        add("condition", range(1, len(toks)))
    elif op is Operator.PROJECT:
        need(refs, "a reference")
        add("sub", [refs[0]])
        add("projection", [p for p in free if p != refs[0]])
    elif op is Operator.AGGREGATE:
        need(refs, "a reference")
        add("arg", [refs[0]] + residue({refs[0]}))
    elif op is Operator.GROUP:
        cue = _find_any(toks, GROUP_CUES)
        need(cue, "a 'for each' clause")
        value = _strip([p for p in free if p < cue[0]], toks, lex)
        key = _strip(range(cue[0] + len(cue[1]), len(toks)), toks, lex)
        need(value and key, "key and value")
        add("key", key)
        add("value", value)
    elif op is Operator.SUPERLATIVE:
        need(len(refs) == 2, "sub and attribute references")
        add("sub", [refs[0]])
        add("attribute", [refs[1]] + residue(set(refs)))
    elif op is Operator.COMPARATIVE:
        need(len(refs) >= 2, "sub and attribute references")
        add("sub", [refs[0]])
        add("attribute", [refs[1]])
        add("condition", _strip([p for p in free if p > refs[1]], toks, lex))
    elif op is Operator.COMPARISON:
        need(len(refs) >= 2, "two references")
        rest = residue(set(refs))
        for n, r in enumerate(refs):
            add("arg", [r] + (rest if n == 0 else []))
    elif op is Operator.UNION:
        for r in refs:
            add("sub", [r])
    elif op is Operator.INTERSECTION:
        b = toks.index("both")
        inter = [r for r in refs if r > b]
        need(len(inter) >= 2, "two intersected references")
        for r in inter:
            add("intersect", [r])
        add("projection", _strip([p for p in free if p < b], toks, lex))
    elif op is Operator.DISCARD:
        i, ph = _find_any(toks, DISCARD_CUES)
        sub = _strip(range(i), toks, lex)
        exclude = _strip(range(i + len(ph), len(toks)), toks, lex)
        need(sub and exclude, "sub and exclude")
        add("sub", sub)
        add("exclude", exclude)
    elif op is Operator.SORT:
        i, ph = _find_any(toks, SORT_CUES)
        sub = _strip(range(i), toks, lex)
        order = _strip(range(i + len(ph), len(toks)), toks, lex)
        need(sub and order, "sub and order")
        add("sub", sub)
        add("order", order)
    elif op is Operator.BOOLEAN:
        logical = any(p.startswith(("and-", "or-")) for p in props)
        if logical:
            for r in refs:
                add("sub", [r])
            add("condition", _strip([p for p in free if p > 0 and not is_ref(toks[p])], toks, lex))
        elif refs:
            add("sub", [refs[0]])
            add("condition", _strip([p for p in free if p > refs[0]], toks, lex))
        else:
            add("condition", _strip(free[1:], toks, lex))
    elif op is Operator.ARITHMETIC:
        split = _arith_split(toks, lex)
        need(split is not None, "two operands")
        _, left, right = split
        if set(props) & {"diff", "div"}:
            add("left", left)
            add("right", right)
        else:
            add("arg", left)
            add("arg", right)

    trace.arg_spans = {}
    for name, pos in spans:
        trace.arg_spans.setdefault(name, []).append(list(pos))
    return tuple((name, _value(pos, toks)) for name, pos in spans)


# -- drivers ---------------------------------------------------------------

def convert_step(step: QdmrStep | str, position: int = 1,
                 lexicon: Lexicon | None = None) -> tuple[LogicalFormStep, DetectionTrace]:
    """Convert one step; a plain string is tokenized first."""
    lex = lexicon or default_lexicon()
    if isinstance(step, str):
        from .core import tokenize
        toks = tokenize(step)
        if toks and toks[0] == "return":
            toks = toks[1:]
        step = QdmrStep(tuple(toks))
    trace = DetectionTrace()
    try:
        op = detect_operator(step, position, lex)
        trace.operator = op
        props = detect_properties(step, op, lex, trace)
        args = extract_arguments(step, op, props, trace, lex)
        return LogicalFormStep(op, props, args), trace
    except ConversionError as exc:
        if exc.step is None:
            exc.step = position
            exc.args = (f"step {position}: {exc.args[0]}",)
        raise
    except ValueError as exc:
        raise ConversionError(str(exc), position) from exc


def qdmr_to_lf(qdmr: Qdmr | str, lexicon: Lexicon | None = None) -> LogicalForm:
    if isinstance(qdmr, str):
        qdmr = parse_qdmr_text(qdmr)
    lex = lexicon or default_lexicon()
    steps = [convert_step(s, i, lex)[0] for i, s in enumerate(qdmr.steps, start=1)]
    return LogicalForm(tuple(steps))


def qdmr_to_lf_traced(qdmr: Qdmr, lexicon: Lexicon | None = None):
    lex = lexicon or default_lexicon()
    pairs = [convert_step(s, i, lex) for i, s in enumerate(qdmr.steps, start=1)]
    return LogicalForm(tuple(p[0] for p in pairs)), [p[1] for p in pairs]

