"""Question-to-step token alignment as a binary linear program.

For question token ``q_i`` and token ``j`` of step ``k`` the variable
``x[k,i,j]`` says the two are aligned.  Hard rows keep the alignment valid
(only equivalent tokens) and covering (every step token with a candidate is
aligned somewhere).  The objective, in decreasing priority, prefers few
alignments, question tokens used by a single step, long aligned runs, exact
string matches and steps that sit next to the steps they reference.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import AugmentedQuestion, Qdmr, Question, STRUCTURAL_TOKENS, is_ref
from .ilp import OPTIMAL, IlpModel, SolverTimeout, solve
from .lexicon import Lexicon, default_lexicon


@dataclass(frozen=True)
class AlignmentWeights:
    c_min: int = 10 ** 6
    c_unique: int = 10 ** 4
    c_seq: int = 10 ** 2
    c_exact: int = 1
    c_ref: int = 1
    d_max: int = 6


@dataclass
class CandidateMatrix:
    """``a[k]`` and ``b[k]`` are (n, n_k) boolean arrays; ``r[k, k2]`` is
    True when step k references step k2 (all 0-based)."""
    a: list
    b: list
    r: np.ndarray
    n: int
    question: tuple = ()
    steps: tuple = ()
    alignable: tuple = ()  # per step, per token: may it be aligned at all

    @property
    def m(self) -> int:
        return len(self.a)

    def pairs(self) -> list:
        """All candidate (i, k, j) triples in lexicographic (k, i, j) order."""
        out = []
        for k, ak in enumerate(self.a):
            for i, j in zip(*np.nonzero(ak)):
                out.append((int(i), k, int(j)))
        return sorted(out, key=lambda p: (p[1], p[0], p[2]))

    def uncovered(self) -> list:
        """Step tokens (k, j) without any candidate question token."""
        return [(k, int(j)) for k, ak in enumerate(self.a) for j in np.flatnonzero(~ak.any(axis=0))
                if not self.alignable or self.alignable[k][j]]


@dataclass
class Alignment:
    pairs: tuple  # sorted (i, k, j) triples
    status: str = OPTIMAL
    objective: int | float | None = None
    uncovered: tuple = ()

    def step_tokens(self, k: int) -> list:
        return sorted({i for i, kk, _ in self.pairs if kk == k})


def alignable_step_mask(tokens: Sequence[str], lex: Lexicon) -> list[bool]:
    """Step tokens that may be aligned: not references, not uninformative,
    and not part of a multi-word connective such as 'ordered by'."""
    mask = [not is_ref(t) and not lex.is_uninformative(t) for t in tokens]
    for ph in lex.op_phrases:
        k = len(ph)
        if k < 2:
            continue
        for s in range(len(tokens) - k + 1):
            if tuple(tokens[s:s + k]) == ph:
                for p in range(s, s + k):
                    mask[p] = False
    return mask


def build_candidates(q: Question | AugmentedQuestion | Sequence[str], qdmr: Qdmr,
                     lexicon: Lexicon | None = None) -> CandidateMatrix:
    lex = lexicon or default_lexicon()
    store_from = None
    if isinstance(q, AugmentedQuestion):
        qt = q.tokens[: q.alignable_len]
        store_from = q.base_len
    elif isinstance(q, Question):
        qt = q.tokens
    else:
        qt = tuple(q)
    n = len(qt)
    if store_from is None:
        store_from = n
    reps_q = [None if t in STRUCTURAL_TOKENS else lex.rep(t) for t in qt]
    a_list, b_list, masks = [], [], []
    for step in qdmr.steps:
        st = step.tokens
        mask = alignable_step_mask(st, lex)
        masks.append(tuple(mask))
        a = np.zeros((n, len(st)), dtype=bool)
        b = np.zeros((n, len(st)), dtype=bool)
        for j, t in enumerate(st):
            if not mask[j]:
                continue
            rt = lex.rep(t)
            for i, u in enumerate(qt):
                if reps_q[i] is None:
                    continue
                if u == t:
                    a[i, j] = b[i, j] = True
                elif reps_q[i] == rt:
                    a[i, j] = True
        if store_from < n:
            # store words only stand in for words the question lacks
            has_q = a[:store_from].any(axis=0)
            a[store_from:, has_q] = False
            b[store_from:, has_q] = False
        a_list.append(a)
        b_list.append(b)
    m = qdmr.m
    r = np.zeros((m, m), dtype=bool)
    for k, step in enumerate(qdmr.steps):
        for ref in step.refs:
            r[k, ref - 1] = True
    return CandidateMatrix(a_list, b_list, r, n, tuple(qt), tuple(s.tokens for s in qdmr.steps), tuple(masks))


@dataclass
class AlignmentIlp:
    model: IlpModel
    x: dict = field(default_factory=dict)  # (k, i, j) -> var
    y: dict = field(default_factory=dict)  # (k, d, i, j) -> var
    xk: dict = field(default_factory=dict)  # (k, i) -> var
    z: dict = field(default_factory=dict)  # (sign, k, k2, i) -> var
    u: dict = field(default_factory=dict)  # (i, d) -> var


def build_alignment_ilp(cand: CandidateMatrix, weights: AlignmentWeights | None = None,
                        tighten: bool = True) -> AlignmentIlp:
    """Build the program.  With ``tighten`` a few redundant rows are added
    (``sum_i x >= 1`` next to the coverage row and ``x^k_i >= x^k_ij``);
    they remove no binary solution but make the LP bound much sharper."""
    w = weights or AlignmentWeights()
    model = IlpModel()
    ilp = AlignmentIlp(model)
    n, m = cand.n, cand.m

    for k in range(m):
        ak, bk = cand.a[k], cand.b[k]
        for i, j in zip(*np.nonzero(ak)):
            i, j = int(i), int(j)
            ilp.x[k, i, j] = model.add_var(f"x[{k},{i},{j}]", -w.c_min + w.c_exact * int(bk[i, j]))
        # coverage: -sum_i a + n sum_i x >= 0
        for j in range(ak.shape[1]):
            total = int(ak[:, j].sum())
            if total:
                cover = [ilp.x[k, int(i), j] for i in np.flatnonzero(ak[:, j])]
                model.add_constraint({v: n for v in cover}, ">=", total, f"cover[{k},{j}]")
                if tighten:
                    model.add_constraint({v: 1 for v in cover}, ">=", 1, f"cover*[{k},{j}]")

    # aligned runs of length d+1 along the diagonal
    for (k, i, j) in list(ilp.x):
        for d in range(1, w.d_max + 1):
            run = [ilp.x.get((k, i + p, j + p)) for p in range(d + 1)]
            if any(v is None for v in run):
                break
            v = model.add_var(f"y[{k},{d},{i},{j}]", w.c_seq)
            ilp.y[k, d, i, j] = v
            row = {x: 1 for x in run}
            model.add_constraint({**row, v: -(d + 1)}, ">=", 0, "seq-lo")
            model.add_constraint({**{x: -1 for x in run}, v: 1}, ">=", -d, "seq-hi")

    # x^k_i: question token i is aligned to some token of step k
    by_ki: dict = {}
    for (k, i, j), v in ilp.x.items():
        by_ki.setdefault((k, i), []).append(v)
    for (k, i), vs in sorted(by_ki.items()):
        v = model.add_var(f"xk[{k},{i}]")
        ilp.xk[k, i] = v
        nk = cand.a[k].shape[1]
        model.add_constraint({**{x: 1 for x in vs}, v: -1}, ">=", 0, "xk-lo")
        model.add_constraint({**{x: -1 for x in vs}, v: nk}, ">=", 0, "xk-hi")
        if tighten:
            for x in vs:
                model.add_constraint({v: 1, x: -1}, ">=", 0, "xk-hi*")

    # adjacency to referenced steps; r is a constant, so only r=1 pairs get variables
    for k in range(m):
        for k2 in np.flatnonzero(cand.r[k]):
            k2 = int(k2)
            for sign, delta in (("+", 1), ("-", -1)):
                for i in range(n):
                    a_var = ilp.xk.get((k, i))
                    b_var = ilp.xk.get((k2, i + delta))
                    if a_var is None or b_var is None:
                        continue
                    v = model.add_var(f"z{sign}[{k},{k2},{i}]", w.c_ref)
                    ilp.z[sign, k, k2, i] = v
                    # -3z + x^k_i + r + x^k'_{i+-1} >= 0 with r = 1
                    model.add_constraint({v: -3, a_var: 1, b_var: 1}, ">=", -1, "ref-lo")
                    # z - x^k_i - r - x^k'_{i+-1} >= -2 with r = 1
                    model.add_constraint({v: 1, a_var: -1, b_var: -1}, ">=", -1, "ref-hi")

    # u^d_i: question token i is aligned to at least d steps.  Every aligned
    # token has u^1 = 1, so only d >= 2 says anything about sharing; u^d
    # costs (d - 1) * c_unique, i.e. one unit per pair of steps sharing it.
    by_i: dict = {}
    for (k, i), v in ilp.xk.items():
        by_i.setdefault(i, []).append(v)
    for i, vs in sorted(by_i.items()):
        for d in range(2, len(vs) + 1):
            v = model.add_var(f"u[{i},{d}]", -w.c_unique * (d - 1))
            ilp.u[i, d] = v
            model.add_constraint({**{x: 1 for x in vs}, v: -d}, ">=", 0, "uniq-lo")
            model.add_constraint({**{x: 1 for x in vs}, v: -m}, "<=", d - 1, "uniq-hi")
    return ilp


def complete_assignment(ilp: AlignmentIlp, chosen: set) -> list:
    """Full assignment implied by a set of chosen (k, i, j) pairs."""
    x = [0] * ilp.model.n_vars
    for key, v in ilp.x.items():
        x[v] = int(key in chosen)
    for (k, d, i, j), v in ilp.y.items():
        x[v] = int(all((k, i + p, j + p) in chosen for p in range(d + 1)))
    xk_val = {}
    for (k, i), v in ilp.xk.items():
        xk_val[k, i] = int(any(kk == k and ii == i for kk, ii, _ in chosen))
        x[v] = xk_val[k, i]
    for (sign, k, k2, i), v in ilp.z.items():
        x[v] = int(xk_val[k, i] and xk_val[k2, i + (1 if sign == "+" else -1)])
    for (i, d), v in ilp.u.items():
        x[v] = int(sum(val for (kk, ii), val in xk_val.items() if ii == i) >= d)
    return x


def _greedy_pairs(cand: CandidateMatrix) -> set:
    chosen = set()
    for k, (ak, bk) in enumerate(zip(cand.a, cand.b)):
        for j in range(ak.shape[1]):
            rows = np.flatnonzero(ak[:, j])
            if len(rows):
                exact = [i for i in rows if bk[i, j]]
                chosen.add((k, int((exact or rows)[0]), j))
    return chosen


def align(q, qdmr: Qdmr, lexicon: Lexicon | None = None, weights: AlignmentWeights | None = None,
          time_limit_ms: int = 10_000) -> Alignment:
    """Solve the alignment program.  Raises :class:`SolverTimeout` (with the
    best alignment found attached as ``.solution``) when the limit hits."""
    lex = lexicon or default_lexicon()
    cand = build_candidates(q, qdmr, lex)
    ilp = build_alignment_ilp(cand, weights)
    warm = complete_assignment(ilp, _greedy_pairs(cand))
    sol = solve(ilp.model, time_limit_ms=time_limit_ms, initial=warm)
    pairs = ()
    if sol.assignment is not None:
        pairs = tuple(sorted((i, k, j) for (k, i, j), v in ilp.x.items() if sol.assignment[v]))
    result = Alignment(pairs, sol.status, sol.objective_value, tuple(cand.uncovered()))
    if sol.status != OPTIMAL:
        raise SolverTimeout(f"alignment stopped with status {sol.status}", result)
    return result
