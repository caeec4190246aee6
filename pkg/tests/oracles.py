"""Independent reference implementations used by the tests.

Nothing here calls the code under test for the quantity being checked:
the alignment oracle scores subsets of candidate pairs straight from the
objective's definition, and the decode oracle carries its own validity
rules and searches all graphs over a tensor.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from qdecomp.alignment import AlignmentWeights, CandidateMatrix

AUX = frozenset({"the", "a", "an", "of", "that", "is", "are"})


# -- alignment ---------------------------------------------------------------

def random_candidates(rng: np.random.Generator, max_pairs: int = 14) -> CandidateMatrix:
    """Random a/b/r tensors with at most ``max_pairs`` candidate pairs."""
    while True:
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 4))
        lens = [int(rng.integers(1, 4)) for _ in range(m)]
        density = float(rng.uniform(0.15, 0.5))
        a = [rng.random((n, nk)) < density for nk in lens]
        b = [ak & (rng.random(ak.shape) < 0.5) for ak in a]
        r = np.zeros((m, m), dtype=bool)
        for k in range(1, m):
            for k2 in range(k):
                r[k, k2] = rng.random() < 0.5
        total = sum(int(ak.sum()) for ak in a)
        if 1 <= total <= max_pairs:
            return CandidateMatrix(a, b, r, n)


def alignment_objective(cand: CandidateMatrix, chosen: set, w: AlignmentWeights) -> int:
    """Objective of the alignment given by ``chosen`` (k, i, j) triples."""
    val = 0
    for k, i, j in chosen:
        val += -w.c_min + w.c_exact * int(cand.b[k][i, j])
    # aligned runs along the diagonal, counted once per length up to d_max
    for k, i, j in chosen:
        for d in range(1, w.d_max + 1):
            if all((k, i + p, j + p) in chosen for p in range(d + 1)):
                val += w.c_seq
            else:
                break
    used = {(k, i) for k, i, _ in chosen}
    per_token: dict = {}
    for k, i in used:
        per_token[i] = per_token.get(i, 0) + 1
    # u^d_i for d = 2..count, each weighted d - 1
    val -= w.c_unique * sum(c * (c - 1) // 2 for c in per_token.values())
    for k, k2 in zip(*np.nonzero(cand.r)):
        for i in range(cand.n):
            for delta in (1, -1):
                if (k, i) in used and (k2, i + delta) in used:
                    val += w.c_ref
    return val


def alignment_brute_force(cand: CandidateMatrix, w: AlignmentWeights | None = None) -> int:
    """Best objective over every covering subset of candidate pairs."""
    w = w or AlignmentWeights()
    columns = []
    for k, ak in enumerate(cand.a):
        for j in range(ak.shape[1]):
            rows = [int(i) for i in np.flatnonzero(ak[:, j])]
            if rows:
                opts = []
                for size in range(1, len(rows) + 1):
                    opts.extend(itertools.combinations(rows, size))
                columns.append([{(k, i, j) for i in c} for c in opts])
    best = None
    for pick in itertools.product(*columns):
        chosen = set().union(*pick) if pick else set()
        v = alignment_objective(cand, chosen, w)
        if best is None or v > best:
            best = v
    return 0 if best is None else best


# -- decoding ----------------------------------------------------------------

# operator -> (required arg counts, trigger args); mirrors the bundled table
COMBINATIONS = {
    "union": ({"sub": 2}, {"sub"}),
    "arithmetic": ({"left": 1, "right": 1}, {"left", "right"}),
    "superlative": ({"sub": 1, "attribute": 1}, {"sub", "attribute"}),
    "comparative": ({"sub": 1, "attribute": 1}, {"sub", "attribute"}),
    "intersection": ({"intersect": 2}, {"intersect"}),
}


def split_tag(tag: str):
    """'op-arg[key]' -> (op, arg, key); structural tags -> (tag, None, None)."""
    if tag in ("span", "duplicate"):
        return tag, None, None
    head, _, key = tag.partition("[")
    op, arg = head.split("-", 1)
    return op, arg, key.rstrip("]")


def is_content(tok: str) -> bool:
    return not tok.startswith("[") and tok not in AUX and any(ch.isalnum() for ch in tok)


def _op_of(tag: str) -> str:
    if tag in ("span", "duplicate"):
        return tag
    op, _, key = split_tag(tag)
    return f"{op}[{key}]"


def allowed_tags(i: int, j: int, tags, tokens) -> list:
    """Tags arc (i, j) may carry at all."""
    if i == j:
        return []
    out = []
    for t in tags:
        if t == "span" and i > j:
            continue
        if t == "duplicate" and (tokens[i] != "[DUP]" or tokens[j] in ("[DUP]", "[DUM]", "[SEP]")):
            continue
        out.append(t)
    return out


def combination_ok(out: dict, holder: bool) -> bool:
    """Combination rule for one token; ``out`` counts its outgoing semantic
    tags and ``holder`` says whether its span carries content."""
    for op, (req, trig) in COMBINATIONS.items():
        keys = {split_tag(t)[2] for t in out if split_tag(t)[0] == op}
        for key in keys:
            def name(arg):
                return f"{op}-{arg}[{key}]" if key else f"{op}-{arg}"
            if not any(out.get(name(a), 0) for a in trig):
                continue
            got = sum(min(out.get(name(a), 0), c) for a, c in req.items())
            if got + int(holder) < sum(req.values()):
                return False
    return True


def violated_families(edges: dict, tokens) -> set:
    """Violated constraint families of a graph given as {(i, j): tag}."""
    n = len(tokens)
    bad = set()
    span_in = [0] * n
    span_out = [0] * n
    dup_out = [0] * n
    sem_in = [0] * n
    any_in = [0] * n
    touched = [False] * n
    ops = [set() for _ in range(n)]
    for (i, j), t in edges.items():
        touched[i] = touched[j] = True
        if i == j:
            bad.add("SelfLoop")
        if t == "span":
            if i >= j:
                bad.add("SpanDirection")
            span_out[i] += 1
            span_in[j] += 1
        elif t == "duplicate":
            if tokens[i] != "[DUP]" or tokens[j] in ("[DUP]", "[DUM]", "[SEP]"):
                bad.add("DuplicateLegality")
            dup_out[i] += 1
            any_in[j] += 1
        else:
            sem_in[j] += 1
            any_in[j] += 1
        if t != "duplicate":
            ops[i].add(_op_of(t))
    for i in range(n):
        if span_in[i] > 1 or span_out[i] > 1:
            bad.add("SpanDegree")
        if dup_out[i] > 1:
            bad.add("DuplicateDegree")
        if tokens[i] == "[DUP]" and touched[i] and dup_out[i] == 0:
            bad.add("DupActivation")
        if len(ops[i]) > 1:
            bad.add("Consistency")
        if span_out[i] and (sem_in[i] or span_in[i] > 1):
            bad.add("Representative")
    # content holders: own content, content flowing along spans, or a [DUP]
    # standing for a content token
    holder = [False] * n
    for j in range(n):
        holder[j] = is_content(tokens[j])
        for (i, jj), t in edges.items():
            if jj != j:
                continue
            if t == "span" and i < j and holder[i]:
                holder[j] = True
        if tokens[j] == "[DUP]":
            for (i, k), t in edges.items():
                if i == j and t == "duplicate" and k < j and is_content(tokens[k]) \
                        and tokens[k] not in ("[DUP]", "[DUM]", "[SEP]"):
                    holder[j] = True
    for i in range(n):
        out = {}
        for (a, _), t in edges.items():
            if a == i and t not in ("span", "duplicate"):
                out[t] = out.get(t, 0) + 1
        if not combination_ok(out, holder[i]):
            bad.add("Combination")
    roots = [i for i in range(n) if (span_out[i] == 0 and any_in[i] == 0)
             and (span_in[i] or any(a == i for a, _ in edges))]
    if len(roots) > 1:
        bad.add("Connectivity")
    return bad


def decode_brute_force(p: np.ndarray, tags, tokens, eps: float = 1e-12):
    """Highest-scoring valid graph: depth-first over arcs with an optimistic
    bound.  Degree, consistency and representative rules can only get worse
    as arcs are added, so they are checked incrementally and prune early;
    the full rule set runs at the leaves.  Returns (score, edges)."""
    n = len(tokens)
    none = np.clip(1.0 - p.sum(axis=-1), 0.0, 1.0)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    options = []
    for i, j in pairs:
        opts = [(math.log(max(none[i, j], eps)), None)]
        for t in allowed_tags(i, j, tags, tokens):
            opts.append((math.log(max(p[i, j, tags.index(t)], eps)), t))
        opts.sort(key=lambda o: -o[0])
        options.append(opts)
    rest = [0.0] * (len(pairs) + 1)
    for d in range(len(pairs) - 1, -1, -1):
        rest[d] = rest[d + 1] + options[d][0][0]

    best = [-math.inf, None]
    edges: dict = {}
    span_in = [0] * n
    span_out = [0] * n
    dup_out = [0] * n
    sem_in = [0] * n
    ops = [[] for _ in range(n)]

    def fits(i, j, t):
        if tokens[j] == "[DUP]" and j < i and dup_out[j] == 0:
            return False  # a finished [DUP] row without its duplicate arc
        if t == "span":
            return (span_out[i] == 0 and span_in[j] == 0 and sem_in[i] == 0
                    and all(o == "span" for o in ops[i]) and not (span_out[j] and span_in[j]))
        if t == "duplicate":
            return dup_out[i] == 0
        return span_out[j] == 0 and all(o == _op_of(t) for o in ops[i])

    def push(i, j, t, s):
        if t == "span":
            span_out[i] += s
            span_in[j] += s
        elif t == "duplicate":
            dup_out[i] += s
        else:
            sem_in[j] += s
        if t != "duplicate":
            if s > 0:
                ops[i].append(_op_of(t))
            else:
                ops[i].pop()

    def holder(k):
        if is_content(tokens[k]):
            return True
        for (a, b), t in edges.items():
            if b == k and t == "span" and a < k and holder(a):
                return True
            if a == k and t == "duplicate" and tokens[k] == "[DUP]" and b < k and is_content(tokens[b]):
                return True
        return False

    def row_done(i):
        # every arc leaving i is decided, and so is every span into i
        touched = any(i in e for e in edges)
        if tokens[i] == "[DUP]" and touched and dup_out[i] == 0:
            return False
        out = {}
        for (a, _), t in edges.items():
            if a == i and t not in ("span", "duplicate"):
                out[t] = out.get(t, 0) + 1
        return combination_ok(out, holder(i))

    def go(d, score):
        if score + rest[d] <= best[0] + 1e-12:
            return
        if d and (d == len(pairs) or pairs[d][0] != pairs[d - 1][0]) and not row_done(pairs[d - 1][0]):
            return
        if d == len(pairs):
            if not violated_families(edges, tokens):
                best[0], best[1] = score, dict(edges)
            return
        i, j = pairs[d]
        for s, t in options[d]:
            if t is None:
                go(d + 1, score + s)
            elif fits(i, j, t):
                edges[i, j] = t
                push(i, j, t, 1)
                go(d + 1, score + s)
                push(i, j, t, -1)
                del edges[i, j]

    go(0, 0.0)
    return best[0], best[1]


# -- tensor generators -------------------------------------------------------

TAG_POOL = ("span", "duplicate", "union-sub", "filter-sub", "project-sub", "arithmetic-left[diff]",
            "arithmetic-right[diff]", "comparison-arg[max]", "superlative-sub[max]",
            "superlative-attribute[max]", "aggregate-arg[count]")
TOKEN_POOL = ("cube", "red", "the", "size", "[DUP]", "[DUM]", "river", "of")


def hot_tensor(rng: np.random.Generator, n: int, n_tags: int):
    """Random (p, tags, tokens): most arcs are near-certainly absent, a few
    carry most of their mass on one tag."""
    tags = ["span"] + list(rng.choice(TAG_POOL[1:], size=n_tags - 1, replace=False))
    tokens = list(rng.choice(TOKEN_POOL, size=n))
    p = np.zeros((n, n, n_tags))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if rng.random() < 0.4:
                mass = rng.dirichlet(np.full(n_tags + 1, 0.4))
            else:
                mass = rng.dirichlet(np.full(n_tags + 1, 0.4)) * 0.15
                mass[-1] = 0.0
            p[i, j] = mass[:n_tags]
    return p, tuple(tags), tuple(tokens)
