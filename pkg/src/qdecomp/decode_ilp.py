"""Structural validity of dependency graphs and ILP decoding.

:func:`validate_dg` names every violated constraint family of a DG.
:func:`ilp_decode` finds the most probable graph under a
:class:`~qdecomp.graphs.ProbTensor` among the graphs :func:`validate_dg`
accepts, by solving a binary program over arc/tag indicators.

Families
--------
SelfLoop, SingleTag
    no arc from a token to itself; one tag per arc.
SpanDirection, DuplicateLegality
    span arcs go left to right; duplicate arcs go from a [DUP] token to a
    token that is not [SEP], [DUP] or [DUM].
SpanDegree, DuplicateDegree
    at most one incoming and one outgoing span arc per token, at most one
    outgoing duplicate arc.
DupActivation
    a [DUP] token touched by any arc has an outgoing duplicate arc.
Consistency
    the outgoing arcs of a token (duplicate aside) share one operation;
    ``span`` counts as an operation.
Representative
    a token with an outgoing span arc receives no arcs other than span and
    duplicate arcs.
Combination
    tag combinations from ``data/combinations.json``, e.g. a union needs
    two ``sub`` arcs, one of which may be replaced by the span's own words.
Connectivity
    at most one root: an active span representative without incoming
    dependencies.
"""
from __future__ import annotations

import json
import math
import time
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DUM, DUP, SEP, AugmentedQuestion, DependencyGraph, Operator, is_punct, render_edge_tag
from .graphs import ProbTensor, graph_score, greedy_decode
from .ilp import INFEASIBLE, OPTIMAL, TIMEOUT, IlpModel, solve
from .lexicon import Lexicon, default_lexicon

FAMILIES = ("SelfLoop", "SingleTag", "SpanDirection", "DuplicateLegality", "SpanDegree", "DuplicateDegree",
            "DupActivation", "Consistency", "Representative", "Combination", "Connectivity")

EPS = 1e-12
_NO_DUP_TARGET = frozenset({SEP, DUP, DUM})


@dataclass(frozen=True)
class Combination:
    operator: Operator
    require: tuple  # ((arg, count), ...)
    trigger: tuple  # args

    @property
    def size(self) -> int:
        return sum(c for _, c in self.require)


def load_combinations(path=None) -> tuple:
    if path is None:
        return _bundled_combinations()
    return _parse_combinations(Path(path).read_text("utf-8"))


@lru_cache(maxsize=1)
def _bundled_combinations() -> tuple:
    return _parse_combinations(resources.files("qdecomp.data").joinpath("combinations.json").read_text("utf-8"))


@lru_cache(maxsize=8)
def _parse_combinations(text: str) -> tuple:
    data = json.loads(text)
    if data.get("version") != 1:
        raise ValueError(f"unsupported combinations version {data.get('version')}")
    out = []
    for row in data["combinations"]:
        req = tuple(sorted((a, int(c)) for a, c in row["require"].items()))
        trig = tuple(sorted(row.get("trigger", [a for a, _ in req])))
        if not set(trig) <= {a for a, _ in req}:
            raise ValueError(f"trigger outside the required set in {row}")
        out.append(Combination(Operator(row["operator"]), req, trig))
    return tuple(out)


def content_mask(tokens: Sequence[str], lexicon: Lexicon | None = None) -> list:
    """m_i: 1 for tokens that carry content on their own."""
    lex = lexicon or default_lexicon()
    return [int(not (t.startswith("[") and t.endswith("]")) and not lex.is_aux(t) and not is_punct(t))
            for t in tokens]


def arc_allowed(i: int, j: int, tag, tokens: Sequence[str]) -> bool:
    if i == j:
        return False
    if tag.is_span:
        return i < j
    if tag.is_duplicate:
        return tokens[i] == DUP and tokens[j] not in _NO_DUP_TARGET
    return True


def _tau(combo: Combination, key: str) -> list:
    """(rendered tag, count) pairs of a combination instantiated for one
    property key."""
    suffix = f"[{key}]" if key else ""
    return [(f"{combo.operator.value}-{a}{suffix}", c) for a, c in combo.require]


def _trigger_tags(combo: Combination, key: str) -> set:
    suffix = f"[{key}]" if key else ""
    return {f"{combo.operator.value}-{a}{suffix}" for a in combo.trigger}


# -- validation ------------------------------------------------------------

def _tokens_of(dg: DependencyGraph, aug) -> tuple:
    if aug is not None:
        return aug.tokens if isinstance(aug, AugmentedQuestion) else tuple(aug)
    return dg.tokens or tuple(f"w{i}" for i in range(dg.token_count))


def explain_dg(dg: DependencyGraph, aug=None, lexicon: Lexicon | None = None, combos=None) -> list:
    """(family, detail) pairs for every violation found."""
    tokens = _tokens_of(dg, aug)
    n = len(tokens)
    combos = load_combinations() if combos is None else combos
    m = content_mask(tokens, lexicon)
    out = []
    pairs = Counter((i, j) for i, j, _ in dg.edges)
    for (i, j), c in sorted(pairs.items()):
        if c > 1:
            out.append(("SingleTag", f"arc ({i}, {j}) has {c} tags"))
    span_in, span_out, dup_out = Counter(), Counter(), Counter()
    ops = [set() for _ in range(n)]
    incident = Counter()
    other_in = Counter()  # incoming arcs that are neither span nor duplicate
    nonspan_in = Counter()
    out_any = Counter()
    tag_out = [Counter() for _ in range(n)]
    for i, j, tag in dg.edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"arc ({i}, {j}) outside a {n}-token graph")
        if i == j:
            out.append(("SelfLoop", f"arc ({i}, {i})"))
        if tag.is_span and i >= j:
            out.append(("SpanDirection", f"span arc ({i}, {j}) is not left to right"))
        if tag.is_duplicate and not arc_allowed(i, j, tag, tokens):
            out.append(("DuplicateLegality", f"duplicate arc ({i}, {j})"))
        incident[i] += 1
        incident[j] += 1
        out_any[i] += 1
        if tag.is_span:
            span_out[i] += 1
            span_in[j] += 1
        else:
            nonspan_in[j] += 1
        if tag.is_duplicate:
            dup_out[i] += 1
        else:
            ops[i].add(tag.operation)
        if tag.is_semantic:
            other_in[j] += 1
            tag_out[i][render_edge_tag(tag)] += 1
    for i in range(n):
        if span_in[i] > 1 or span_out[i] > 1:
            out.append(("SpanDegree", f"token {i} has {span_in[i]} incoming and {span_out[i]} outgoing span arcs"))
        if dup_out[i] > 1:
            out.append(("DuplicateDegree", f"token {i} has {dup_out[i]} outgoing duplicate arcs"))
        if tokens[i] == DUP and incident[i] and not dup_out[i]:
            out.append(("DupActivation", f"[DUP] token {i} is used without a duplicate arc"))
        if len(ops[i]) > 1:
            out.append(("Consistency", f"token {i} mixes {sorted(ops[i])}"))
        if span_out[i] and (other_in[i] or span_in[i] > 1):
            out.append(("Representative", f"token {i} is inside a span but receives arcs"))

    # content holders, left to right
    c = [0] * n
    spans_into = [[] for _ in range(n)]
    dups_from = [[] for _ in range(n)]
    for i, j, tag in dg.edges:
        if tag.is_span and i < j:
            spans_into[j].append(i)
        elif tag.is_duplicate and arc_allowed(i, j, tag, tokens) and j < i:
            dups_from[i].append(j)
    for i in range(n):
        c[i] = int(bool(m[i] or any(c[k] for k in spans_into[i])
                        or (tokens[i] == DUP and any(m[k] for k in dups_from[i]))))
    for i in range(n):
        keys = {}
        for t in tag_out[i]:
            op, rest = t.split("-", 1)
            keys.setdefault(op, set()).add(rest.partition("[")[2].rstrip("]"))
        for combo in combos:
            for key in sorted(keys.get(combo.operator.value, ())):
                if not any(tag_out[i][t] for t in _trigger_tags(combo, key)):
                    continue
                got = sum(min(tag_out[i][t], need) for t, need in _tau(combo, key))
                if got + c[i] < combo.size:
                    out.append(("Combination", f"token {i}: {combo.operator.value}[{key}] lacks arguments"))

    roots = [i for i in range(n) if (out_any[i] or span_in[i]) and not (nonspan_in[i] or span_out[i])]
    if len(roots) > 1:
        out.append(("Connectivity", f"{len(roots)} roots: {roots}"))
    return out


def validate_dg(dg: DependencyGraph, aug=None, lexicon: Lexicon | None = None, combos=None) -> list:
    """Names of the violated constraint families, in canonical order."""
    found = {f for f, _ in explain_dg(dg, aug, lexicon, combos)}
    return [f for f in FAMILIES if f in found]


# -- the program -----------------------------------------------------------

@dataclass
class DecodeIlp:
    model: IlpModel
    tokens: tuple
    tags: tuple  # EdgeTag objects, vocabulary order
    x: dict  # (i, j, t) -> var
    aux: dict  # name -> var, for every auxiliary variable


@dataclass
class DecodeResult:
    graph: DependencyGraph
    status: str
    objective: float | None

    @property
    def timed_out(self) -> bool:
        return self.status == TIMEOUT


def build_decode_ilp(probs: ProbTensor, aug=None, combos=None, lexicon: Lexicon | None = None,
                     eps: float = EPS) -> DecodeIlp:
    tokens = _tokens_of(DependencyGraph(probs.n, (), probs.tokens), aug)
    n = len(tokens)
    if n != probs.n:
        raise ValueError(f"{n} tokens for a tensor with n={probs.n}")
    combos = load_combinations() if combos is None else combos
    tags = probs.edge_tags
    T = len(tags)
    names = probs.tags
    model = IlpModel()
    x: dict = {}
    aux: dict = {}

    def new(name, obj=0):
        v = model.add_var(name, obj)
        aux[name] = v
        return v

    logn = np.log(np.maximum(probs.none, eps))
    logp = np.log(np.maximum(probs.p, eps))
    for i in range(n):
        for j in range(n):
            for t, tag in enumerate(tags):
                if arc_allowed(i, j, tag, tokens):
                    x[i, j, t] = model.add_var(f"x[{i},{j},{names[t]}]", float(logp[i, j, t] - logn[i, j]))
    model.constant = float(logn.sum())

    out_arcs = [[] for _ in range(n)]  # (j, t, var)
    in_arcs = [[] for _ in range(n)]  # (i, t, var)
    for (i, j, t), v in x.items():
        out_arcs[i].append((j, t, v))
        in_arcs[j].append((i, t, v))
    span_t = {t for t, tag in enumerate(tags) if tag.is_span}
    dup_t = {t for t, tag in enumerate(tags) if tag.is_duplicate}

    # single tag
    per_pair: dict = {}
    for (i, j, t), v in x.items():
        per_pair.setdefault((i, j), []).append(v)
    for (i, j), vs in per_pair.items():
        if len(vs) > 1:
            model.add_constraint({v: 1 for v in vs}, "<=", 1, "single-tag")

    # degrees and [DUP] activation
    for i in range(n):
        so = [v for _, t, v in out_arcs[i] if t in span_t]
        si = [v for _, t, v in in_arcs[i] if t in span_t]
        do = [v for _, t, v in out_arcs[i] if t in dup_t]
        for vs, label in ((so, "span-out"), (si, "span-in"), (do, "dup-out")):
            if len(vs) > 1:
                model.add_constraint({v: 1 for v in vs}, "<=", 1, label)
        if tokens[i] == DUP:
            row = Counter()
            for _, _, v in out_arcs[i] + in_arcs[i]:
                row[v] -= 1
            for v in do:
                row[v] += 2 * n * T
            if row:
                model.add_constraint(dict(row), ">=", 0, "dup-active")

    # operation consistency
    y_span = {}
    for i in range(n):
        by_op: dict = {}
        for _, t, v in out_arcs[i]:
            if t not in dup_t:
                by_op.setdefault(tags[t].operation, []).append(v)
        ys = []
        for o, vs in sorted(by_op.items()):
            y = new(f"y[{i},{o}]")
            ys.append(y)
            model.add_constraint({**{v: -1 for v in vs}, y: n * T}, ">=", 0, "y-hi")
            model.add_constraint({**{v: 1 for v in vs}, y: -1}, ">=", 0, "y-lo")
            if o == "span":
                y_span[i] = y
        if len(ys) > 1:
            model.add_constraint({y: 1 for y in ys}, "<=", 1, "one-operation")

    # span representative
    for j, y in y_span.items():
        other = [v for _, t, v in in_arcs[j] if t not in span_t and t not in dup_t]
        if other:
            k = len(other)
            model.add_constraint({**{v: 1 for v in other}, y: k}, "<=", k, "representative")
        si = [v for _, t, v in in_arcs[j] if t in span_t]
        if si:
            model.add_constraint({**{v: 1 for v in si}, y: n}, "<=", n + 1, "representative-span")

    # content holders
    m = content_mask(tokens, lexicon)
    c = [new(f"c[{i}]") for i in range(n)]
    for i in range(n):
        terms = []
        for k, t, v in in_arcs[i]:
            if t in span_t:
                ck = new(f"c[{k},{i}]")
                model.add_constraint({ck: 2, v: -1, c[k]: -1}, "<=", 0, "ck-hi")
                model.add_constraint({ck: -1, v: 1, c[k]: 1}, "<=", 1, "ck-lo")
                terms.append(ck)
        if tokens[i] == DUP:
            terms += [v for k, t, v in out_arcs[i] if t in dup_t and k < i and m[k]]
        big = len(terms) + 1
        model.add_constraint({**{v: 1 for v in terms}, c[i]: -1}, ">=", -m[i], "c-hi")
        model.add_constraint({**{v: -1 for v in terms}, c[i]: big}, ">=", m[i], "c-lo")

    # valid combinations
    index = {name: t for t, name in enumerate(names)}
    g_cache: dict = {}

    def g(i, t, cnt):
        """Indicator: at least ``cnt`` outgoing arcs of tag ``t`` at ``i``."""
        key = (i, t, cnt)
        if key not in g_cache:
            vs = [v for _, tt, v in out_arcs[i] if tt == t]
            if len(vs) < cnt:
                g_cache[key] = None
            else:
                var = new(f"g[{i},{names[t]},{cnt}]")
                model.add_constraint({**{v: 1 for v in vs}, var: -cnt}, ">=", 0, "g-lo")
                model.add_constraint({**{v: 1 for v in vs}, var: -len(vs)}, "<=", cnt - 1, "g-hi")
                g_cache[key] = var
        return g_cache[key]

    for i in range(n):
        keys: dict = {}
        for _, t, _ in out_arcs[i]:
            tag = tags[t]
            if tag.is_semantic:
                keys.setdefault(tag.operator, set()).add(tag.property_key)
        for combo in combos:
            for key in sorted(keys.get(combo.operator, ())):
                trig = [g(i, index[t], 1) for t in sorted(_trigger_tags(combo, key)) if t in index]
                trig = [v for v in trig if v is not None]
                if not trig:
                    continue
                s_terms = []
                for t, need in _tau(combo, key):
                    if t in index:
                        s_terms += [v for v in (g(i, index[t], q) for q in range(1, need + 1)) if v is not None]
                size = combo.size
                tag_name = f"{combo.operator.value}[{key}]"
                zm = new(f"z-[{i},{tag_name}]")
                zp = new(f"z+[{i},{tag_name}]")
                model.add_constraint({**{v: 1 for v in trig}, zm: len(trig)}, "<=", len(trig), "z-minus-hi")
                model.add_constraint({**{v: 1 for v in trig}, zm: 1}, ">=", 1, "z-minus-lo")
                s_row = Counter({v: 1 for v in s_terms})
                s_row[c[i]] += 1
                model.add_constraint({**s_row, zp: -size}, ">=", 0, "z-plus-hi")
                model.add_constraint({**s_row, zp: -2}, "<=", size - 1, "z-plus-lo")
                model.add_constraint({zp: 1, zm: 1}, ">=", 1, "z-either")

    # connectivity
    roots = []
    for i in range(n):
        act = [v for _, _, v in out_arcs[i]] + [v for _, t, v in in_arcs[i] if t in span_t]
        inc = [v for _, t, v in in_arcs[i] if t not in span_t] + [v for _, t, v in out_arcs[i] if t in span_t]
        if not act:
            continue  # the token can never be active, so never a root
        r1, r2, r = new(f"r'[{i}]"), new(f"r''[{i}]"), new(f"r[{i}]")
        model.add_constraint({**{v: 1 for v in act}, r1: -1}, ">=", 0, "r1-lo")
        model.add_constraint({**{v: -1 for v in act}, r1: len(act)}, ">=", 0, "r1-hi")
        if inc:
            model.add_constraint({**{v: 1 for v in inc}, r2: 1}, ">=", 1, "r2-lo")
            model.add_constraint({**{v: 1 for v in inc}, r2: len(inc)}, "<=", len(inc), "r2-hi")
        else:
            model.add_constraint({r2: 1}, "=", 1, "r2-fixed")
        model.add_constraint({r: -2, r1: 1, r2: 1}, ">=", 0, "root-hi")
        model.add_constraint({r: 1, r1: -1, r2: -1}, ">=", -1, "root-lo")
        roots.append(r)
    if len(roots) > 1:
        model.add_constraint({r: 1 for r in roots}, "<=", 1, "one-root")
    return DecodeIlp(model, tokens, tags, x, aux)


def graph_from_assignment(ilp: DecodeIlp, assignment) -> DependencyGraph:
    edges = [(i, j, ilp.tags[t]) for (i, j, t), v in ilp.x.items() if assignment[v]]
    return DependencyGraph(len(ilp.tokens), tuple(edges), ilp.tokens)


def ilp_decode(probs: ProbTensor, aug=None, combos=None, lexicon: Lexicon | None = None,
               time_limit_ms: int = 10_000, backend: str = "highs") -> DecodeResult:
    """Most probable valid graph.  On timeout the best graph found is
    returned with status ``"timeout"``; if the program is infeasible the
    empty graph is returned with status ``"infeasible"``."""
    start = time.monotonic()
    deadline = start + time_limit_ms / 1000.0
    ilp = build_decode_ilp(probs, aug, combos, lexicon)
    left = time_limit_ms - int(1000 * (time.monotonic() - start))
    # keep a fifth of what is left for the repair heuristic in case of a timeout
    sol = solve(ilp.model, time_limit_ms=max(int(0.8 * left), 1), backend=backend)
    empty = DependencyGraph(probs.n, (), ilp.tokens)
    if sol.status == TIMEOUT:
        # the best of the solver's incumbent, the greedy graph (if valid)
        # and a repaired one
        options = [repair_decode(probs, ilp.tokens, lexicon, combos, deadline=deadline - 0.1)]
        if sol.assignment is not None:
            options.append(graph_from_assignment(ilp, sol.assignment))
        greedy = greedy_decode(probs)
        greedy = DependencyGraph(greedy.token_count, greedy.edges, ilp.tokens)
        if not validate_dg(greedy, ilp.tokens, lexicon, combos):
            options.append(greedy)
        best = max(options, key=lambda g: graph_score(g, probs))
        return DecodeResult(best, TIMEOUT, graph_score(best, probs))
    if sol.assignment is not None:
        dg = graph_from_assignment(ilp, sol.assignment)
        return DecodeResult(dg, sol.status, graph_score(dg, probs))
    return DecodeResult(empty, INFEASIBLE, graph_score(empty, probs))


def repair_decode(probs: ProbTensor, aug=None, lexicon: Lexicon | None = None, combos=None,
                  max_passes: int = 3, per_pair: int = 2, deadline: float | None = None) -> DependencyGraph:
    """Valid graph built by insertion: arcs are tried in order of decreasing
    gain over "no arc" (the ``per_pair`` best tags of each token pair) and
    kept when the graph stays valid.  Insertion stops at ``deadline`` (a
    ``time.monotonic()`` value) if one is given.  Never worse
    than the empty graph; used as the incumbent when the program times out."""
    tokens = _tokens_of(DependencyGraph(probs.n, (), probs.tokens), aug)
    if probs.n == 0 or not probs.tags:
        return DependencyGraph(probs.n, (), tokens)
    logn = np.log(np.maximum(probs.none, EPS))
    gain = np.log(np.maximum(probs.p, EPS)) - logn[:, :, None]
    tags = probs.edge_tags
    cand = []
    for i, j in zip(*np.nonzero((gain > 0).any(axis=-1))):
        i, j = int(i), int(j)
        ok = [t for t in np.argsort(-gain[i, j], kind="stable")
              if gain[i, j, t] > 0 and arc_allowed(i, j, tags[t], tokens)][:per_pair]
        cand += [(-gain[i, j, t], i, j, probs.tags[t], int(t)) for t in ok]
    cand.sort()
    edges: dict = {}
    for _ in range(max_passes):
        changed = False
        for _, i, j, _, t in cand:
            if deadline is not None and time.monotonic() > deadline:
                break
            if (i, j) in edges:
                continue
            trial = dict(edges)
            trial[i, j] = tags[t]
            trial = DependencyGraph(probs.n, tuple((a, b, tg) for (a, b), tg in sorted(trial.items())), tokens)
            if not validate_dg(trial, tokens, lexicon, combos):
                edges[i, j] = tags[t]
                changed = True
        if not changed:
            break
    return DependencyGraph(probs.n, tuple((a, b, tg) for (a, b), tg in sorted(edges.items())), tokens)


def decode(probs: ProbTensor, method: str = "ilp", **kw) -> DecodeResult:
    if method == "greedy":
        dg = greedy_decode(probs)
        return DecodeResult(dg, OPTIMAL, graph_score(dg, probs) if _scorable(dg, probs) else -math.inf)
    if method == "ilp":
        return ilp_decode(probs, **kw)
    raise ValueError(f"unknown decode method {method!r}")


def _scorable(dg, probs) -> bool:
    return all(render_edge_tag(t) in probs.tags for _, _, t in dg.edges)
