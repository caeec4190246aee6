"""Shared value types: questions, QDMR, logical forms, edge tags and graphs.

Everything here is an immutable value.  Tokens are lowercase strings;
references to earlier steps are kept inline as ``"#k"`` tokens (1-based),
so an argument value is simply a tuple of tokens.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

REF_RE = re.compile(r"^#([0-9]+)$")
_TOKEN_RE = re.compile(r"#\d+|\d+(?:\.\d+)?|[a-z0-9]+(?:'[a-z]+)?|'s|\[[a-z]+\]|[^\sa-z0-9]")

SEP = "[SEP]"
DUM = "[DUM]"
DUP = "[DUP]"
STRUCTURAL_TOKENS = frozenset({SEP, DUM, DUP})


class QdmrError(ValueError):
    """Base class for conversion errors raised by this package."""


class EmptyDecomposition(QdmrError):
    pass


class MalformedReference(QdmrError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word, number, reference and
    punctuation tokens."""
    tokens = []
    for tok in _TOKEN_RE.findall(text.lower()):
        # possessives split off as a separate token
        if tok.endswith("'s") and tok != "'s" and not tok.startswith("#"):
            tokens.extend([tok[:-2], "'s"])
        else:
            tokens.append(tok)
    return tokens


def is_ref(token: str) -> bool:
    return REF_RE.match(token) is not None


def ref_index(token: str) -> int:
    """1-based step number of a reference token."""
    m = REF_RE.match(token)
    if m is None:
        raise ValueError(f"not a reference token: {token!r}")
    return int(m.group(1))


def is_punct(token: str) -> bool:
    return len(token) == 1 and not token.isalnum() and token != "#"


class Operator(str, enum.Enum):
    SELECT = "select"
    FILTER = "filter"
    PROJECT = "project"
    AGGREGATE = "aggregate"
    GROUP = "group"
    SUPERLATIVE = "superlative"
    COMPARATIVE = "comparative"
    COMPARISON = "comparison"
    UNION = "union"
    INTERSECTION = "intersection"
    DISCARD = "discard"
    SORT = "sort"
    BOOLEAN = "boolean"
    ARITHMETIC = "arithmetic"

    def __str__(self) -> str:
        return self.value


_AGG_PROPS = ("max", "min", "count", "sum", "avg")
_NUMERIC = tuple(f"{rel}-{n}" for rel in ("equals", "more-than", "less-than") for n in (0, 1, 2))

#: operator -> allowed property symbols
PROPERTIES: dict[Operator, tuple[str, ...]] = {
    Operator.SELECT: (),
    Operator.FILTER: (),
    Operator.PROJECT: (),
    Operator.AGGREGATE: _AGG_PROPS,
    Operator.GROUP: _AGG_PROPS,
    Operator.SUPERLATIVE: ("max", "min"),
    Operator.COMPARATIVE: ("equals", "more", "less") + _NUMERIC,
    Operator.COMPARISON: _AGG_PROPS + ("true", "false"),
    Operator.UNION: (),
    Operator.INTERSECTION: (),
    Operator.DISCARD: (),
    Operator.SORT: (),
    Operator.BOOLEAN: ("equals",) + _NUMERIC + ("and-true", "and-false", "or-true", "or-false", "if-exists"),
    Operator.ARITHMETIC: ("sum", "diff", "multiply", "div"),
}

#: operator -> argument names, in display order
ARGUMENTS: dict[Operator, tuple[str, ...]] = {
    Operator.SELECT: ("sub",),
    Operator.FILTER: ("sub", "condition"),
    Operator.PROJECT: ("sub", "projection"),
    Operator.AGGREGATE: ("arg",),
    Operator.GROUP: ("key", "value"),
    Operator.SUPERLATIVE: ("sub", "attribute"),
    Operator.COMPARATIVE: ("sub", "attribute", "condition"),
    Operator.COMPARISON: ("arg",),
    Operator.UNION: ("sub",),
    Operator.INTERSECTION: ("intersect", "projection"),
    Operator.DISCARD: ("sub", "exclude"),
    Operator.SORT: ("sub", "order"),
    Operator.BOOLEAN: ("sub", "condition"),
    Operator.ARITHMETIC: ("arg", "left", "right"),
}

#: arguments that may occur more than once in a step
REPEATABLE: dict[Operator, frozenset[str]] = {
    Operator.UNION: frozenset({"sub"}),
    Operator.COMPARISON: frozenset({"arg"}),
    Operator.INTERSECTION: frozenset({"intersect"}),
    Operator.ARITHMETIC: frozenset({"arg"}),
    Operator.BOOLEAN: frozenset({"sub"}),
}


# -- questions and QDMR ----------------------------------------------------

@dataclass(frozen=True)
class Question:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a question needs at least one token")
        if any(not t for t in self.tokens):
            raise ValueError("empty token in question")

    @classmethod
    def from_text(cls, text: str) -> "Question":
        return cls(tuple(tokenize(text)))

    @property
    def n(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class QdmrStep:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise EmptyDecomposition("empty QDMR step")

    @property
    def refs(self) -> list[int]:
        return [ref_index(t) for t in self.tokens if is_ref(t)]

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class Qdmr:
    steps: tuple[QdmrStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise EmptyDecomposition("decomposition has no steps")
        for i, step in enumerate(self.steps, start=1):
            for k in step.refs:
                if not 1 <= k < i:
                    raise MalformedReference(f"step {i} refers to #{k}")

    @property
    def m(self) -> int:
        return len(self.steps)

    def __str__(self) -> str:
        return " ;".join("return " + s.text() for s in self.steps)


def parse_qdmr_text(text: str) -> Qdmr:
    """Parse BREAK-style ``"return a ;return #1 that b"`` text."""
    text = text.strip()
    if not text:
        raise EmptyDecomposition("empty decomposition text")
    parts = text.split(";")
    if len(parts) > 1 and not parts[-1].strip():
        parts = parts[:-1]
    steps = []
    for part in parts:
        toks = tokenize(part)
        if toks and toks[0] == "return":
            toks = toks[1:]
        if not toks:
            raise EmptyDecomposition(f"empty step in {text!r}")
        steps.append(QdmrStep(tuple(toks)))
    return Qdmr(tuple(steps))


# -- logical forms ---------------------------------------------------------

def _value_sort_key(token: str):
    if is_ref(token):
        return (0, ref_index(token), "")
    return (1, 0, token)


def sorted_value(tokens: Iterable[str]) -> tuple[str, ...]:
    """Tokens in canonical order: references first (by index), then
    alphabetical."""
    return tuple(sorted(tokens, key=_value_sort_key))


@dataclass(frozen=True)
class LogicalFormStep:
    operator: Operator
    properties: tuple[str, ...] = ()
    args: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        op = Operator(self.operator)
        object.__setattr__(self, "operator", op)
        object.__setattr__(self, "properties", tuple(sorted(set(self.properties))))
        object.__setattr__(self, "args", tuple((name, tuple(val)) for name, val in self.args))
        bad = [p for p in self.properties if p not in PROPERTIES[op]]
        if bad:
            raise ValueError(f"invalid properties {bad} for {op}")
        seen = set()
        for name, _ in self.args:
            if name not in ARGUMENTS[op]:
                raise ValueError(f"invalid argument {name!r} for {op}")
            if name in seen and name not in REPEATABLE.get(op, ()):
                raise ValueError(f"argument {name!r} repeated for {op}")
            seen.add(name)

    @property
    def refs(self) -> list[int]:
        return [ref_index(t) for _, val in self.args for t in val if is_ref(t)]

    def arg_values(self, name: str) -> list[tuple[str, ...]]:
        return [val for n, val in self.args if n == name]


@dataclass(frozen=True)
class LogicalForm:
    steps: tuple[LogicalFormStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        m = len(self.steps)
        for i, step in enumerate(self.steps, start=1):
            for k in step.refs:
                if not 1 <= k <= m or k == i:
                    raise MalformedReference(f"LF step {i} refers to #{k}")

    def __len__(self) -> int:
        return len(self.steps)

    def render(self) -> list[str]:
        return [render_lf_step(s) for s in self.steps]


def _render_args(args, sep: str) -> str:
    return sep.join(f"{name}={' '.join(val)}" for name, val in args)


def render_lf_step(step: LogicalFormStep) -> str:
    """Canonical ``OP[props](name=value; ...)`` string.

    Properties are sorted, arguments are sorted by name and then value, and
    the tokens of each value are sorted with references first.
    """
    args = sorted((name, sorted_value(val)) for name, val in step.args)
    args = sorted(args, key=lambda a: (a[0], " ".join(a[1])))
    return f"{step.operator.value.upper()}[{','.join(step.properties)}]({_render_args(args, '; ')})"


def format_lf_step(step: LogicalFormStep) -> str:
    """Human-readable rendering that keeps token order, in the style
    ``FILTER[](sub=#1, condition=from toronto)``."""
    order = {name: i for i, name in enumerate(ARGUMENTS[step.operator])}
    args = sorted(step.args, key=lambda a: order[a[0]])
    return f"{step.operator.value.upper()}[{','.join(step.properties)}]({_render_args(args, ', ')})"


_STEP_RE = re.compile(r"^([A-Z]+)\[([^\]]*)\]\((.*)\)$")


def parse_lf_step(text: str) -> LogicalFormStep:
    """Inverse of :func:`render_lf_step`."""
    m = _STEP_RE.match(text.strip())
    if m is None:
        raise ValueError(f"malformed LF step: {text!r}")
    op = Operator(m.group(1).lower())
    props = tuple(p for p in m.group(2).split(",") if p)
    args = []
    body = m.group(3)
    if body:
        for part in body.split("; "):
            name, _, value = part.partition("=")
            args.append((name, tuple(value.split()) if value else ()))
    return LogicalFormStep(op, props, tuple(args))


# -- edge tags -------------------------------------------------------------

@dataclass(frozen=True, order=True)
class EdgeTag:
    """A DG/SDG edge label: ``<op>-<arg>[<props>]`` or a structural tag."""
    kind: str  # "semantic", "span" or "duplicate"
    operator: Operator | None = None
    property_key: str = ""
    arg: str = ""

    @classmethod
    def semantic(cls, operator, properties: Sequence[str] | str, arg: str) -> "EdgeTag":
        key = properties if isinstance(properties, str) else ",".join(sorted(properties))
        return cls("semantic", Operator(operator), key, arg)

    @property
    def is_span(self) -> bool:
        return self.kind == "span"

    @property
    def is_duplicate(self) -> bool:
        return self.kind == "duplicate"

    @property
    def is_semantic(self) -> bool:
        return self.kind == "semantic"

    @property
    def operation(self) -> str:
        """Operator plus properties; tags sharing it belong to one step."""
        if not self.is_semantic:
            return self.kind
        return f"{self.operator.value}[{self.property_key}]"

    @property
    def properties(self) -> tuple[str, ...]:
        return tuple(p for p in self.property_key.split(",") if p)

    def __str__(self) -> str:
        return render_edge_tag(self)


SPAN = EdgeTag("span")
DUPLICATE = EdgeTag("duplicate")

_TAG_RE = re.compile(r"^([a-z]+)-([a-z]+)(?:\[([^\]]*)\])?$")


def render_edge_tag(tag: EdgeTag) -> str:
    if not tag.is_semantic:
        return tag.kind
    suffix = f"[{tag.property_key}]" if tag.property_key else ""
    return f"{tag.operator.value}-{tag.arg}{suffix}"


def parse_edge_tag(text: str) -> EdgeTag:
    if text in ("span", "duplicate"):
        return EdgeTag(text)
    m = _TAG_RE.match(text)
    if m is None:
        raise ValueError(f"malformed edge tag: {text!r}")
    op = Operator(m.group(1))
    if m.group(2) not in ARGUMENTS[op]:
        raise ValueError(f"invalid argument in tag {text!r}")
    return EdgeTag("semantic", op, m.group(3) or "", m.group(2))


# -- graphs ----------------------------------------------------------------

@dataclass(frozen=True)
class AugmentedQuestion:
    """``question ++ [SEP] ++ store words ++ [DUM]*K ++ [DUP]*K``."""
    tokens: tuple[str, ...]
    base_len: int
    sep_index: int | None
    store_token_indices: tuple[int, ...]
    dum_token_indices: tuple[int, ...]
    dup_token_indices: tuple[int, ...]

    @classmethod
    def build(cls, question: Question, store: Sequence[str] = (), k_dum: int = 4, k_dup: int = 4):
        base = list(question.tokens)
        n = len(base)
        tokens = base + [SEP] + list(store) + [DUM] * k_dum + [DUP] * k_dup
        s0 = n + 1
        d0 = s0 + len(store)
        p0 = d0 + k_dum
        return cls(tuple(tokens), n, n, tuple(range(s0, d0)), tuple(range(d0, p0)),
                   tuple(range(p0, p0 + k_dup)))

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "AugmentedQuestion":
        """Recover the layout from a flat token list (e.g. a DG file)."""
        tokens = tuple(tokens)
        sep = tokens.index(SEP) if SEP in tokens else None
        dums = tuple(i for i, t in enumerate(tokens) if t == DUM)
        dups = tuple(i for i, t in enumerate(tokens) if t == DUP)
        base_len = sep if sep is not None else len([t for t in tokens if t not in STRUCTURAL_TOKENS])
        store = ()
        if sep is not None:
            store = tuple(i for i in range(sep + 1, len(tokens)) if tokens[i] not in STRUCTURAL_TOKENS)
        return cls(tokens, base_len, sep, store, dums, dups)

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def alignable_len(self) -> int:
        """Length of the prefix (question, separator, store) usable for
        alignment."""
        return max([self.base_len - 1, self.sep_index or -1, *self.store_token_indices]) + 1

    def is_dup(self, i: int) -> bool:
        return self.tokens[i] == DUP

    def is_dum(self, i: int) -> bool:
        return self.tokens[i] == DUM

    def is_structural(self, i: int) -> bool:
        return self.tokens[i] in STRUCTURAL_TOKENS


@dataclass(frozen=True)
class SpanDependencyGraph:
    """Steps as nodes (lists of augmented-token indices) with tagged
    reference edges.  ``duplicates`` maps a [DUP] index to the token it
    stands for."""
    nodes: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int, EdgeTag], ...]
    duplicates: tuple[tuple[int, int], ...] = ()

    def out_edges(self, node: int):
        return [e for e in self.edges if e[0] == node]


@dataclass(frozen=True)
class DependencyGraph:
    token_count: int
    edges: tuple[tuple[int, int, EdgeTag], ...]
    tokens: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: (e[0], e[1], str(e[2])))))

    def edge_map(self) -> dict[tuple[int, int], EdgeTag]:
        return {(i, j): t for i, j, t in self.edges}
