"""Reading decomposition corpora and reading/writing pipeline artifacts.

Every artifact file is JSON Lines.  The first line is a header
``{"schema": "qdecomp/<kind>", "version": 1}`` and each further line holds
one example.  Keys are sorted, separators are compact and floats carry at
most 9 significant digits, so writing the same records twice gives the same
bytes.  See ``docs/formats.md`` for the record layouts.
"""
from __future__ import annotations

import ast
import base64
import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .alignment import Alignment
from .core import DependencyGraph, LogicalForm, LogicalFormStep, Operator, parse_edge_tag, render_edge_tag
from .graphs import ProbTensor

SCHEMA_VERSION = 1
KINDS = ("lf", "alignment", "dg", "probs")
REQUIRED_COLUMNS = ("question_id", "question_text", "decomposition")


class CorpusError(ValueError):
    pass


class SchemaVersionMismatch(CorpusError):
    pass


class ParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MalformedCsv(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingColumn(CorpusError):
    pass


@dataclass
class CorpusExample:
    id: str
    question: str
    decomposition: str
    operators: list | None = None


# -- BREAK-style CSV -------------------------------------------------------

def _parse_operators(text: str):
    text = (text or "").strip()
    if not text:
        return None
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return [t.strip() for t in text.split(",") if t.strip()]
    return [str(v) for v in value] if isinstance(value, (list, tuple)) else [str(value)]


def iter_break_csv(path) -> Iterator[CorpusExample]:
    """Stream examples from a CSV with ``question_id``, ``question_text``
    and ``decomposition`` columns (an ``operators`` column is optional)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file") from None
        except csv.Error as exc:
            raise MalformedCsv(str(exc), 1) from None
        header = [h.strip().lstrip("﻿") for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")
        col = {name: k for k, name in enumerate(header)}
        seen = set()
        while True:
            try:
                row = next(reader)
            except StopIteration:
                return
            except csv.Error as exc:
                raise MalformedCsv(str(exc), reader.line_num) from None
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedCsv(f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            qid = row[col["question_id"]]
            if qid in seen:
                raise MalformedCsv(f"duplicate question_id {qid!r}", reader.line_num)
            seen.add(qid)
            ops = _parse_operators(row[col["operators"]]) if "operators" in col else None
            yield CorpusExample(qid, row[col["question_text"]], row[col["decomposition"]], ops)


def read_break_csv(path) -> list[CorpusExample]:
    return list(iter_break_csv(path))


def write_break_csv(examples: Iterable[CorpusExample], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS + ("operators",))
        for ex in examples:
            w.writerow([ex.id, ex.question, ex.decomposition, repr(ex.operators) if ex.operators else ""])


# -- JSONL plumbing --------------------------------------------------------

def _round(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(_round(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_jsonl(path, kind: str, records: Iterable[dict]) -> None:
    """Write ``records`` under a ``kind`` header; ``path`` may be ``"-"``
    for stdout or an open text stream."""
    if kind not in KINDS:
        raise ValueError(f"unknown artifact kind {kind!r}")
    lines = [dumps({"schema": f"qdecomp/{kind}", "version": SCHEMA_VERSION})]
    lines += [dumps(r) for r in records]
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    elif str(path) == "-":
        import sys
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def iter_jsonl(path, kind: str) -> Iterator[tuple[int, dict]]:
    """(line number, record) pairs after checking the header."""
    fh = path if hasattr(path, "read") else open(path, encoding="utf-8")
    try:
        first = True
        for lineno, line in enumerate(fh, 1):
            if not line.endswith("\n"):
                raise ParseError("truncated line (no trailing newline)", lineno)
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            if first:
                first = False
                schema = obj.get("schema")
                if schema != f"qdecomp/{kind}":
                    raise ParseError(f"expected a qdecomp/{kind} header, found {schema!r}", lineno)
                if obj.get("version") != SCHEMA_VERSION:
                    raise SchemaVersionMismatch(
                        f"{kind} file has version {obj.get('version')!r}, expected {SCHEMA_VERSION}")
                continue
            yield lineno, obj
        if first:
            raise ParseError("missing header", 1)
    finally:
        if fh is not path:
            fh.close()


def _field(obj, key, lineno):
    try:
        return obj[key]
    except KeyError:
        raise ParseError(f"missing field {key!r}", lineno) from None


# -- LF files --------------------------------------------------------------

@dataclass
class LfRecord:
    id: str
    lf: LogicalForm | None
    question: str = ""
    decomposition: str = ""
    error: str | None = None


def lf_to_json(lf: LogicalForm) -> list:
    return [{"operator": s.operator.value, "properties": list(s.properties),
             "args": [[name, list(value)] for name, value in s.args]} for s in lf.steps]


def lf_from_json(steps) -> LogicalForm:
    return LogicalForm(tuple(
        LogicalFormStep(Operator(s["operator"]), tuple(s.get("properties", ())),
                        tuple((name, tuple(value)) for name, value in s.get("args", ())))
        for s in steps))


def write_lf_file(path, records: Iterable[LfRecord]) -> None:
    out = []
    for r in records:
        row = {"id": r.id, "question": r.question, "decomposition": r.decomposition,
               "steps": lf_to_json(r.lf) if r.lf is not None else None}
        if r.error:
            row["error"] = r.error
        out.append(row)
    write_jsonl(path, "lf", out)


def read_lf_file(path) -> list[LfRecord]:
    out = []
    for lineno, obj in iter_jsonl(path, "lf"):
        steps = _field(obj, "steps", lineno)
        try:
            lf = lf_from_json(steps) if steps is not None else None
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad LF: {exc}", lineno) from None
        out.append(LfRecord(str(_field(obj, "id", lineno)), lf, obj.get("question", ""),
                            obj.get("decomposition", ""), obj.get("error")))
    return out


# -- alignment files -------------------------------------------------------

@dataclass
class AlignmentRecord:
    id: str
    question_tokens: tuple
    step_tokens: tuple
    alignment: Alignment | None
    error: str | None = None


def write_alignment_file(path, records: Iterable[AlignmentRecord]) -> None:
    out = []
    for r in records:
        row = {"id": r.id, "question_tokens": list(r.question_tokens),
               "step_tokens": [list(s) for s in r.step_tokens], "pairs": None}
        if r.alignment is not None:
            a = r.alignment
            row.update(pairs=[list(p) for p in a.pairs], status=a.status, objective=a.objective,
                       uncovered=[list(u) for u in a.uncovered])
        if r.error:
            row["error"] = r.error
        out.append(row)
    write_jsonl(path, "alignment", out)


def read_alignment_file(path) -> list[AlignmentRecord]:
    out = []
    for lineno, obj in iter_jsonl(path, "alignment"):
        pairs = _field(obj, "pairs", lineno)
        al = None
        if pairs is not None:
            try:
                al = Alignment(tuple(tuple(int(v) for v in p) for p in pairs), obj.get("status", "optimal"),
                               obj.get("objective"), tuple(tuple(u) for u in obj.get("uncovered", ())))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"bad alignment: {exc}", lineno) from None
        out.append(AlignmentRecord(str(_field(obj, "id", lineno)), tuple(obj.get("question_tokens", ())),
                                   tuple(tuple(s) for s in obj.get("step_tokens", ())), al, obj.get("error")))
    return out


# -- DG files --------------------------------------------------------------

@dataclass
class DgRecord:
    id: str
    dg: DependencyGraph | None
    error: str | None = None
    extra: dict = field(default_factory=dict)


def dg_to_json(dg: DependencyGraph) -> dict:
    return {"n": dg.token_count, "tokens": list(dg.tokens),
            "edges": [[i, j, render_edge_tag(t)] for i, j, t in dg.edges]}


def dg_from_json(obj) -> DependencyGraph:
    n = int(obj["n"])
    edges = []
    for i, j, t in obj["edges"]:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) outside n={n}")
        edges.append((i, j, parse_edge_tag(t)))
    tokens = tuple(obj.get("tokens", ()))
    if tokens and len(tokens) != n:
        raise ValueError(f"{len(tokens)} tokens for n={n}")
    return DependencyGraph(n, tuple(edges), tokens)


def write_dg_file(path, records: Iterable[DgRecord]) -> None:
    out = []
    for r in records:
        row = {"id": r.id, **(dg_to_json(r.dg) if r.dg is not None else {"n": None, "tokens": [], "edges": None})}
        row.update(r.extra)
        if r.error:
            row["error"] = r.error
        out.append(row)
    write_jsonl(path, "dg", out)


def read_dg_file(path) -> list[DgRecord]:
    out = []
    for lineno, obj in iter_jsonl(path, "dg"):
        dg = None
        if obj.get("edges") is not None:
            try:
                dg = dg_from_json(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad DG: {exc}", lineno) from None
        extra = {k: v for k, v in obj.items() if k not in ("id", "n", "tokens", "edges", "error")}
        out.append(DgRecord(str(_field(obj, "id", lineno)), dg, obj.get("error"), extra))
    return out


# -- probability tensors ---------------------------------------------------

def encode_tensor(p: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(p, dtype="<f4").tobytes()).decode("ascii")


def decode_tensor(data: str, n: int, t: int) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"), validate=True)
    if len(raw) != 4 * n * n * t:
        raise ValueError(f"payload has {len(raw)} bytes, expected {4 * n * n * t}")
    return np.frombuffer(raw, dtype="<f4").reshape(n, n, t).astype(np.float64)


def tensor_to_json(pt: ProbTensor, nested: bool = False) -> dict:
    row = {"id": pt.id, "n": pt.n, "tags": list(pt.tags), "tokens": list(pt.tokens)}
    if nested:
        row.update(encoding="nested", p=np.asarray(pt.p, dtype="<f4").astype(np.float64).tolist())
    else:
        row.update(encoding="base64-f4le", data=encode_tensor(pt.p))
    return row


def tensor_from_json(obj) -> ProbTensor:
    n, tags = int(obj["n"]), list(obj["tags"])
    enc = obj.get("encoding", "base64-f4le")
    if enc == "base64-f4le":
        p = decode_tensor(obj["data"], n, len(tags))
    elif enc == "nested":
        p = np.asarray(obj["p"], dtype=np.float64).reshape(n, n, len(tags))
    else:
        raise ValueError(f"unknown tensor encoding {enc!r}")
    return ProbTensor(str(obj["id"]), n, tuple(tags), p, tuple(obj.get("tokens", ())))


def write_tensor_file(path, tensors: Iterable[ProbTensor], nested: bool = False) -> None:
    write_jsonl(path, "probs", (tensor_to_json(t, nested) for t in tensors))


def read_tensor_file(path) -> list[ProbTensor]:
    out = []
    for lineno, obj in iter_jsonl(path, "probs"):
        try:
            out.append(tensor_from_json(obj))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad tensor: {exc}", lineno) from None
    return out
