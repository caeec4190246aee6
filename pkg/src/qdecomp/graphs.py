"""Conversions between logical forms, span dependency graphs (SDGs) and
token-level dependency graphs (DGs), plus the greedy and soft decoders.

An SDG has one node per step, holding the indices of the augmented-question
tokens the step was aligned to, and a tagged edge for every reference.  The
DG spells each node out as a left-to-right chain of ``span`` edges whose
rightmost token represents the node; semantic edges connect
representatives and ``duplicate`` edges tie a [DUP] copy to its original.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .alignment import Alignment
from .core import (
    DUPLICATE,
    REPEATABLE,
    SPAN,
    AugmentedQuestion,
    DependencyGraph,
    EdgeTag,
    LogicalForm,
    LogicalFormStep,
    Operator,
    QdmrError,
    Question,
    SpanDependencyGraph,
    STRUCTURAL_TOKENS,
    is_ref,
    parse_edge_tag,
    ref_index,
    render_edge_tag,
    tokenize,
)
from .lexicon import Lexicon, default_lexicon
from .qdmr_to_lf import ConversionError, text_slot


class DumExhausted(ConversionError):
    pass


class DupExhausted(ConversionError):
    pass


class MultiTagArc(ConversionError):
    """Two different tags would land on the same token pair."""


class DecodeError(QdmrError):
    pass


class DecodeAmbiguity(DecodeError):
    pass


class InconsistentNode(DecodeAmbiguity):
    """A node whose outgoing edges disagree on operator or properties."""


class CyclicSdg(DecodeError):
    pass


# -- augmentation ----------------------------------------------------------

def augment_question(q: Question | str | Sequence[str], lexicon: Lexicon | None = None,
                     k_dum: int = 4, k_dup: int = 4, store: Sequence[str] | None = None) -> AugmentedQuestion:
    """Append the separator, the store words and the [DUM]/[DUP] blocks."""
    if isinstance(q, str):
        q = Question.from_text(q)
    elif not isinstance(q, Question):
        q = Question(tuple(q))
    if store is None:
        lex = lexicon or default_lexicon()
        store = [t for w in lex.store_words for t in tokenize(w)]
    return AugmentedQuestion.build(q, list(store), k_dum=k_dum, k_dup=k_dup)


# -- LF + alignment -> SDG -> DG -------------------------------------------

def _edge_tags(lf: LogicalForm) -> list:
    """(referrer, referenced, tag) triples, 0-based, for every reference."""
    out = {}
    for k, step in enumerate(lf.steps):
        for name, value in step.args:
            tag = EdgeTag.semantic(step.operator, step.properties, name)
            for t in value:
                if not is_ref(t):
                    continue
                key = (k, ref_index(t) - 1)
                if key in out and out[key] != tag:
                    raise MultiTagArc(f"reference {t} used as both {out[key]} and {tag}", k + 1)
                out[key] = tag
    return sorted((a, b, t) for (a, b), t in out.items())


def extract_sdg(lf: LogicalForm, alignment: Alignment, aug: AugmentedQuestion) -> SpanDependencyGraph:
    """Build the SDG of ``lf`` from its token alignment.

    A question token aligned to several steps stays with the first of them;
    each later step gets a fresh [DUP] token instead.  Steps without aligned
    tokens take the next free [DUM] token.
    """
    m = len(lf.steps)
    aligned = [set() for _ in range(m)]
    for i, k, _ in alignment.pairs:
        if k >= m:
            raise ValueError(f"alignment refers to step {k + 1} of a {m}-step LF")
        if i >= aug.alignable_len:
            raise ValueError(f"alignment uses token {i} outside the question and store")
        aligned[k].add(i)

    dums, dups = list(aug.dum_token_indices), list(aug.dup_token_indices)
    claimed: set = set()
    nodes, duplicates = [], []
    for k in range(m):
        node = []
        for i in sorted(aligned[k]):
            if i in claimed:
                if not dups:
                    raise DupExhausted(f"more than {len(aug.dup_token_indices)} [DUP] tokens needed", k + 1)
                d = dups.pop(0)
                duplicates.append((d, i))
                node.append(d)
            else:
                claimed.add(i)
                node.append(i)
        if not node:
            if not dums:
                raise DumExhausted(f"more than {len(aug.dum_token_indices)} [DUM] tokens needed", k + 1)
            node.append(dums.pop(0))
        nodes.append(tuple(sorted(node)))
    return SpanDependencyGraph(tuple(nodes), tuple(_edge_tags(lf)), tuple(duplicates))


def sdg_to_dg(sdg: SpanDependencyGraph, aug: AugmentedQuestion) -> DependencyGraph:
    edges: dict = {}

    def put(i, j, tag):
        if (i, j) in edges and edges[i, j] != tag:
            raise MultiTagArc(f"arc ({i}, {j}) needs both {edges[i, j]} and {tag}")
        edges[i, j] = tag

    for node in sdg.nodes:
        for a, b in zip(node, node[1:]):
            put(a, b, SPAN)
    for d, i in sdg.duplicates:
        put(d, i, DUPLICATE)
    for a, b, tag in sdg.edges:
        put(sdg.nodes[a][-1], sdg.nodes[b][-1], tag)
    return DependencyGraph(aug.n, tuple((i, j, t) for (i, j), t in edges.items()), aug.tokens)


# -- DG -> SDG -> LF -------------------------------------------------------

def dg_to_sdg_soft(dg: DependencyGraph) -> SpanDependencyGraph:
    """Group tokens into spans by undirected ``span`` connectivity and
    project the remaining edges onto the spans.

    Nothing is rejected here.  A token with several span parents keeps the
    leftmost one, edges inside a span are dropped, and a [DUP] token with
    several duplicate edges keeps the leftmost target.  Mixed-operator
    spans are left for :func:`sdg_to_lf` to report.
    """
    span_parent: dict = {}
    semantic, dup_target = [], {}
    for i, j, tag in dg.edges:
        if tag.is_span:
            if i != j and (j not in span_parent or i < span_parent[j]):
                span_parent[j] = i
        elif tag.is_duplicate:
            if i not in dup_target or j < dup_target[i]:
                dup_target[i] = j
        else:
            semantic.append((i, j, tag))

    members = set(span_parent) | set(span_parent.values()) | set(dup_target)
    for i, j, _ in semantic:
        members.update((i, j))
    parent = {t: t for t in members}

    def find(t):
        while parent[t] != t:
            parent[t] = parent[parent[t]]
            t = parent[t]
        return t

    for j, i in span_parent.items():
        a, b = find(i), find(j)
        if a != b:
            parent[max(a, b)] = min(a, b)
    groups: dict = {}
    for t in members:
        groups.setdefault(find(t), []).append(t)
    nodes = sorted((tuple(sorted(g)) for g in groups.values()), key=lambda g: (g[-1], g))
    where = {t: k for k, node in enumerate(nodes) for t in node}
    edges = set()
    for i, j, tag in semantic:
        a, b = where[i], where[j]
        if a != b:
            edges.add((a, b, tag))
    edges = tuple(sorted(edges, key=lambda e: (e[0], e[1], render_edge_tag(e[2]))))
    return SpanDependencyGraph(tuple(nodes), edges, tuple(sorted(dup_target.items())))


def node_text(sdg: SpanDependencyGraph, k: int, tokens: Sequence[str]) -> tuple:
    """Surface tokens of node ``k``; [DUP] tokens read through to the token
    they copy and other structural tokens are dropped."""
    dup = dict(sdg.duplicates)
    out = []
    for i in sdg.nodes[k]:
        seen = set()
        while tokens[i] == "[DUP]" and i in dup and i not in seen:
            seen.add(i)
            i = dup[i]
        if tokens[i] not in STRUCTURAL_TOKENS:
            out.append(tokens[i])
    return tuple(out)


def _topological(sdg: SpanDependencyGraph) -> list:
    m = len(sdg.nodes)
    deps = [set() for _ in range(m)]
    for a, b, _ in sdg.edges:
        deps[a].add(b)
    order, placed = [], set()
    while len(order) < m:
        ready = [k for k in range(m) if k not in placed and deps[k] <= placed]
        if not ready:
            raise CyclicSdg("the span graph has a reference cycle")
        k = min(ready, key=lambda k: (sdg.nodes[k][-1], k))
        order.append(k)
        placed.add(k)
    return order


def sdg_to_lf(sdg: SpanDependencyGraph, aug: AugmentedQuestion | Sequence[str]) -> LogicalForm:
    """Read one LF step per node, referenced steps first.

    The outgoing edge tags name the operator, properties and the argument
    each reference fills; the node's own words go to the operator's
    free-text argument.  Nodes without outgoing edges become SELECT.
    """
    tokens = aug.tokens if isinstance(aug, AugmentedQuestion) else tuple(aug)
    if not sdg.nodes:
        raise DecodeError("empty graph")
    order = _topological(sdg)
    number = {k: pos + 1 for pos, k in enumerate(order)}
    steps = []
    for k in order:
        out = sorted((number[b], tag) for a, b, tag in sdg.edges if a == k)
        text = node_text(sdg, k, tokens)
        if not out:
            steps.append(LogicalFormStep(Operator.SELECT, (), (("sub", text),) if text else ()))
            continue
        ops = {tag.operation for _, tag in out}
        if len(ops) > 1:
            raise InconsistentNode(f"node {k} mixes operations {sorted(ops)}")
        op, props = out[0][1].operator, out[0][1].properties
        values: list = []  # [name, list of tokens]
        for ref, tag in out:
            if tag.arg in REPEATABLE.get(op, ()):
                values.append([tag.arg, [f"#{ref}"]])
                continue
            for v in values:
                if v[0] == tag.arg:
                    v[1].append(f"#{ref}")
                    break
            else:
                values.append([tag.arg, [f"#{ref}"]])
        if text:
            slot = text_slot(op, props)
            for v in values:
                if v[0] == slot:
                    v[1].extend(text)
                    break
            else:
                values.append([slot, list(text)])
        try:
            steps.append(LogicalFormStep(op, props, tuple((n, tuple(v)) for n, v in values)))
        except ValueError as exc:
            raise DecodeError(f"node {k}: {exc}") from exc
    return LogicalForm(tuple(steps))


def dg_to_lf(dg: DependencyGraph, aug: AugmentedQuestion | None = None) -> LogicalForm:
    return sdg_to_lf(dg_to_sdg_soft(dg), aug if aug is not None else dg.tokens)


# -- probability tensors and greedy decoding -------------------------------

@dataclass
class ProbTensor:
    """``p[i, j, t]`` is the probability that arc (i, j) carries tag
    ``tags[t]``; the rest of the mass is the probability of no arc."""
    id: str
    n: int
    tags: tuple
    p: np.ndarray
    tokens: tuple = field(default=())

    def __post_init__(self):
        self.tags = tuple(self.tags)
        self.tokens = tuple(self.tokens)
        self.p = np.asarray(self.p, dtype=np.float64)
        if self.p.shape != (self.n, self.n, len(self.tags)):
            raise ValueError(f"tensor shape {self.p.shape} does not match n={self.n}, |T|={len(self.tags)}")
        if self.tokens and len(self.tokens) != self.n:
            raise ValueError(f"{len(self.tokens)} tokens for n={self.n}")
        if len(set(self.tags)) != len(self.tags):
            raise ValueError("duplicate tags")
        for t in self.tags:
            parse_edge_tag(t)
        if self.n and (self.p.min() < 0 or self.p.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.n and self.p.sum(axis=-1).max() > 1 + 1e-6:
            raise ValueError("tag probabilities of an arc sum to more than 1")

    @property
    def edge_tags(self) -> tuple:
        return tuple(parse_edge_tag(t) for t in self.tags)

    @property
    def none(self) -> np.ndarray:
        return np.clip(1.0 - self.p.sum(axis=-1), 0.0, 1.0)

    def augmented(self) -> AugmentedQuestion:
        toks = self.tokens or tuple(f"w{i}" for i in range(self.n))
        return AugmentedQuestion.from_tokens(toks)


def greedy_decode(probs: ProbTensor) -> DependencyGraph:
    """Keep arcs whose total tag mass exceeds 0.5 and give each its most
    probable tag (ties to the alphabetically first tag)."""
    if probs.n == 0 or not probs.tags:
        return DependencyGraph(probs.n, (), probs.tokens)
    order = sorted(range(len(probs.tags)), key=lambda t: probs.tags[t])
    p = probs.p[:, :, order]
    best = np.argmax(p, axis=-1)
    keep = probs.p.sum(axis=-1) > 0.5
    tags = probs.edge_tags
    edges = [(int(i), int(j), tags[order[best[i, j]]]) for i, j in zip(*np.nonzero(keep))]
    return DependencyGraph(probs.n, tuple(edges), probs.tokens)


def graph_score(dg: DependencyGraph, probs: ProbTensor, eps: float = 1e-12) -> float:
    """Log-probability of ``dg`` under ``probs``: tag probabilities on the
    arcs it has, none-probabilities everywhere else."""
    index = {t: k for k, t in enumerate(probs.tags)}
    logn = np.log(np.maximum(probs.none, eps))
    total = float(logn.sum())
    for i, j, tag in dg.edges:
        k = index[render_edge_tag(tag)]
        total += float(np.log(max(probs.p[i, j, k], eps)) - logn[i, j])
    return total
