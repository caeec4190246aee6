import io

import numpy as np
import pytest

from qdecomp import pipeline
from qdecomp.config import Config
from qdecomp.core import parse_qdmr_text
from qdecomp.corpus_io import (
    AlignmentRecord,
    CorpusExample,
    DgRecord,
    LfRecord,
    MalformedCsv,
    MissingColumn,
    ParseError,
    SchemaVersionMismatch,
    read_alignment_file,
    read_break_csv,
    read_dg_file,
    read_lf_file,
    read_tensor_file,
    write_alignment_file,
    write_break_csv,
    write_dg_file,
    write_lf_file,
    write_tensor_file,
)
from qdecomp.graphs import ProbTensor

from conftest import CENSUS_D, CENSUS_Q


@pytest.fixture(scope="module")
def census():
    return pipeline.to_dg(CorpusExample("census", CENSUS_Q, CENSUS_D), Config())


def _csv(tmp_path, text):
    path = tmp_path / "c.csv"
    path.write_text(text, encoding="utf-8")
    return path


def test_break_csv_census_row(tmp_path):
    path = _csv(tmp_path, 'question_id,question_text,decomposition,operators\n'
                          f'c1,"{CENSUS_Q}","{CENSUS_D}","[\'select\', \'filter\']"\n')
    (ex,) = read_break_csv(path)
    assert ex.id == "c1" and ex.question == CENSUS_Q
    assert len(parse_qdmr_text(ex.decomposition).steps) == 6
    assert ex.operators == ["select", "filter"]


def test_break_csv_round_trip(tmp_path):
    exs = pipeline.load_sample_corpus()[:10]
    write_break_csv(exs, tmp_path / "o.csv")
    back = read_break_csv(tmp_path / "o.csv")
    assert [(e.id, e.question, e.decomposition) for e in back] == [(e.id, e.question, e.decomposition) for e in exs]


def test_break_csv_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        read_break_csv(_csv(tmp_path, "question_id,question_text\n1,what\n"))
    with pytest.raises(MissingColumn):
        read_break_csv(_csv(tmp_path, ""))


@pytest.mark.parametrize("body", [
    'a,"what is it,return it\n',           # unterminated quote
    "a,what,return it,extra\n",           # too many fields
    "a,what,return x\na,who,return y\n",  # duplicate id
])
def test_break_csv_malformed(tmp_path, body):
    with pytest.raises(MalformedCsv) as info:
        read_break_csv(_csv(tmp_path, "question_id,question_text,decomposition\n" + body))
    assert info.value.line is not None


def test_lf_file_round_trip(tmp_path, census):
    path = tmp_path / "lf.jsonl"
    recs = [LfRecord("census", census.lf, CENSUS_Q, CENSUS_D), LfRecord("bad", None, error="boom")]
    write_lf_file(path, recs)
    back = read_lf_file(path)
    assert back[0].lf == census.lf and back[0].question == CENSUS_Q
    assert back[1].lf is None and back[1].error == "boom"


def test_alignment_file_round_trip(tmp_path, census):
    path = tmp_path / "al.jsonl"
    steps = tuple(s.tokens for s in parse_qdmr_text(CENSUS_D).steps)
    qt = census.aug.tokens[: census.aug.alignable_len]
    write_alignment_file(path, [AlignmentRecord("census", qt, steps, census.alignment)])
    (rec,) = read_alignment_file(path)
    assert rec.alignment.pairs == census.alignment.pairs
    assert rec.question_tokens == tuple(qt) and rec.step_tokens == steps


def test_dg_file_round_trip(tmp_path, census):
    path = tmp_path / "dg.jsonl"
    write_dg_file(path, [DgRecord("census", census.dg, extra={"status": "optimal"}), DgRecord("x", None, "no")])
    a, b = read_dg_file(path)
    assert a.dg == census.dg and a.extra == {"status": "optimal"}
    assert b.dg is None and b.error == "no"


@pytest.mark.parametrize("nested", [False, True])
def test_tensor_file_round_trip(tmp_path, nested):
    rng = np.random.default_rng(0)
    p = rng.random((3, 3, 2)) / 2
    pt = ProbTensor("t0", 3, ("span", "filter-sub"), p, ("a", "b", "c"))
    path = tmp_path / "p.jsonl"
    write_tensor_file(path, [pt], nested=nested)
    (back,) = read_tensor_file(path)
    assert back.tags == pt.tags and back.tokens == pt.tokens
    # stored as float32
    np.testing.assert_allclose(back.p, p, atol=1e-7)


def test_writes_are_byte_stable(tmp_path, census):
    a, b = io.StringIO(), io.StringIO()
    for fh in (a, b):
        write_dg_file(fh, [DgRecord("census", census.dg)])
    assert a.getvalue() == b.getvalue()
    assert a.getvalue().startswith('{"schema":"qdecomp/dg","version":1}\n')


def test_truncated_file(tmp_path, census):
    path = tmp_path / "lf.jsonl"
    write_lf_file(path, [LfRecord("census", census.lf)])
    text = path.read_text()
    path.write_text(text[:-10])
    with pytest.raises(ParseError) as info:
        read_lf_file(path)
    assert info.value.line == 2


def test_schema_checks(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"schema":"qdecomp/lf","version":7}\n')
    with pytest.raises(SchemaVersionMismatch):
        read_lf_file(path)
    path.write_text('{"schema":"qdecomp/dg","version":1}\n')
    with pytest.raises(ParseError):
        read_lf_file(path)
    path.write_text("")
    with pytest.raises(ParseError):
        read_lf_file(path)


def test_bad_records(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"schema":"qdecomp/dg","version":1}\n{"id":"a","n":2,"edges":[[0,5,"span"]]}\n')
    with pytest.raises(ParseError):
        read_dg_file(path)
    path.write_text('{"schema":"qdecomp/probs","version":1}\n'
                    '{"id":"a","n":2,"tags":["span"],"data":"AAAA"}\n')
    with pytest.raises(ParseError):
        read_tensor_file(path)
    path.write_text('{"schema":"qdecomp/lf","version":1}\n{"id":"a","steps":[{"operator":"nope"}]}\n')
    with pytest.raises(ParseError):
        read_lf_file(path)
