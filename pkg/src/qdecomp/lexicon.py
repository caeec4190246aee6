"""Lexicon data: auxiliary, store and connective words, property triggers
and token equivalence classes.

The default lexicon ships as ``data/lexicon.json``.  A different directory
can be selected with the ``QDECOMP_LEXICON_DIR`` environment variable or by
passing a path to :meth:`Lexicon.load`.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .core import Operator, PROPERTIES, STRUCTURAL_TOKENS, is_punct, is_ref, tokenize

LEXICON_ENV = "QDECOMP_LEXICON_DIR"
LEXICON_FILE = "lexicon.json"
SCHEMA_VERSION = 1

AGG_FAMILY = ("max", "min", "sum", "avg")


class LexiconError(ValueError):
    pass


def _phrase(text: str) -> tuple[str, ...]:
    return tuple(tokenize(text))


def find_phrase(tokens: Sequence[str], phrase: Sequence[str], start: int = 0) -> int:
    """Index of the first occurrence of ``phrase`` in ``tokens`` at or after
    ``start``, or -1."""
    k = len(phrase)
    for i in range(start, len(tokens) - k + 1):
        if tuple(tokens[i:i + k]) == tuple(phrase):
            return i
    return -1


@dataclass(frozen=True)
class Lexicon:
    aux_words: frozenset
    store_words: tuple
    op_phrases: tuple  # tuple of token tuples
    property_entries: dict  # (Operator, prop) -> tuple of token tuples
    classes: tuple  # tuple of (representative, frozenset(members))
    inflections: tuple  # tuple of (suffix_from, suffix_to)
    numbers: dict = field(default_factory=dict)  # "0" -> tuple of words
    source: str = ""

    # -- loading ----------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict, source: str = "") -> "Lexicon":
        version = data.get("version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise LexiconError(f"unsupported lexicon version {version}")
        for key in ("aux", "store", "op", "properties", "equivalence_classes", "inflections"):
            if key not in data:
                raise LexiconError(f"lexicon is missing key {key!r}")

        entries: dict = {}
        for row in data["properties"]:
            op = Operator(row["operator"])
            prop = row["property"]
            if prop not in PROPERTIES[op]:
                raise LexiconError(f"{prop!r} is not a property of {op}")
            phrases = tuple(_phrase(t) for t in row["triggers"])
            entries[(op, prop)] = entries.get((op, prop), ()) + phrases
        for op, props in PROPERTIES.items():
            for prop in props:
                entries.setdefault((op, prop), ())

        classes = _merge_classes(
            (c["representative"], c["members"]) for c in data["equivalence_classes"])
        numbers = {k: tuple(v) for k, v in data.get("numbers", {}).items()}
        return cls(
            aux_words=frozenset(data["aux"]),
            store_words=tuple(data["store"]),
            op_phrases=tuple(_phrase(p) for p in data["op"]),
            property_entries=entries,
            classes=classes,
            inflections=tuple((r["suffix_from"], r["suffix_to"]) for r in data["inflections"]),
            numbers=numbers,
            source=source,
        )

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "Lexicon":
        """Load a lexicon file, a directory holding ``lexicon.json``, the
        directory named by ``$QDECOMP_LEXICON_DIR``, or the bundled default."""
        if path is None:
            path = os.environ.get(LEXICON_ENV) or None
        if path is None:
            text = resources.files("qdecomp.data").joinpath(LEXICON_FILE).read_text("utf-8")
            return cls.from_dict(json.loads(text), source="<bundled>")
        p = Path(path)
        if p.is_dir():
            p = p / LEXICON_FILE
        return cls.from_dict(json.loads(p.read_text("utf-8")), source=str(p))

    def __post_init__(self):
        object.__setattr__(self, "_cmap", {m: rep for rep, members in self.classes for m in members})
        object.__setattr__(self, "_single_op", frozenset(p[0] for p in self.op_phrases if len(p) == 1))
        object.__setattr__(self, "_rep_cache", {})

    # -- derived tables -----------------------------------------------------

    @property
    def class_map(self) -> dict:
        return self._cmap

    @property
    def single_op_words(self) -> frozenset:
        return self._single_op

    def triggers(self, op: Operator, prop: str) -> tuple:
        return self.property_entries.get((Operator(op), prop), ())

    def number_words(self, n: str) -> tuple:
        return self.numbers.get(n, ())

    def number_value(self, token: str) -> str | None:
        for value, words in self.numbers.items():
            if token in words:
                return value
        return None

    # -- token predicates ---------------------------------------------------

    def is_aux(self, token: str) -> bool:
        return token in self.aux_words

    def is_uninformative(self, token: str) -> bool:
        """True for auxiliary words, single-word connectives, punctuation and
        structural tokens; references are informative."""
        if is_ref(token):
            return False
        return (token in self.aux_words or token in self.single_op_words
                or token in STRUCTURAL_TOKENS or is_punct(token))

    def is_content(self, token: str) -> bool:
        return not self.is_uninformative(token) and not is_ref(token)

    # -- equivalence --------------------------------------------------------

    def stem(self, token: str) -> str:
        """Apply the first matching inflection rule.  Identity rules act as
        guards; a rule never shortens a stem below three characters."""
        for suffix, repl in self.inflections:
            if token.endswith(suffix):
                stem = token[: len(token) - len(suffix)] + repl
                if len(stem) >= 3:
                    return stem
        return token

    def rep(self, token: str) -> str:
        cache = self._rep_cache
        if token not in cache:
            cache[token] = _rep(self, token)
        return cache[token]

    def equivalent(self, a: str, b: str) -> bool:
        return a == b or self.rep(a) == self.rep(b)

    def to_dict(self) -> dict:
        props = [
            {"operator": op.value, "property": prop, "triggers": [" ".join(t) for t in trig]}
            for (op, prop), trig in self.property_entries.items()
        ]
        return {
            "version": SCHEMA_VERSION,
            "aux": sorted(self.aux_words),
            "store": list(self.store_words),
            "op": [" ".join(p) for p in self.op_phrases],
            "properties": props,
            "numbers": {k: list(v) for k, v in self.numbers.items()},
            "equivalence_classes": [{"representative": r, "members": sorted(m)} for r, m in self.classes],
            "inflections": [{"suffix_from": a, "suffix_to": b} for a, b in self.inflections],
        }

    def __hash__(self):
        return hash((self.source, self.aux_words, self.store_words, self.op_phrases))

    def __eq__(self, other):
        return isinstance(other, Lexicon) and self.to_dict() == other.to_dict()


def _merge_classes(rows: Iterable[tuple[str, Sequence[str]]]) -> tuple:
    """Union classes that share a token.  The merged class keeps the
    representative of its earliest row."""
    parent: dict = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    order = []
    reps = []
    for rep, members in rows:
        toks = [rep, *members]
        for t in toks:
            if t not in parent:
                parent[t] = t
                order.append(t)
        for t in toks[1:]:
            a, b = find(toks[0]), find(t)
            if a != b:
                parent[b] = a
        reps.append(rep)

    groups: dict = {}
    for t in order:
        groups.setdefault(find(t), set()).add(t)
    out = []
    seen = set()
    for rep in reps:
        root = find(rep)
        if root in seen:
            continue
        seen.add(root)
        out.append((rep, frozenset(groups[root])))
    return tuple(out)


def _rep(lex: Lexicon, token: str) -> str:
    if is_ref(token) or token in STRUCTURAL_TOKENS:
        return token
    cmap = lex.class_map
    seen = [token]
    cur = token
    for _ in range(16):
        if cur in cmap:
            nxt = cmap[cur]
        else:
            s = lex.stem(cur)
            nxt = cmap.get(s, s)
        if nxt == cur:
            return cur
        if nxt in seen:
            # a cycle between stemming and class lookup; pick a fixed member
            cyc = seen[seen.index(nxt):]
            return min(cyc)
        seen.append(nxt)
        cur = nxt
    return cur


@lru_cache(maxsize=4)
def default_lexicon() -> Lexicon:
    return Lexicon.load()
