import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdecomp.alignment import Alignment, align
from qdecomp.core import DUPLICATE, SPAN, DependencyGraph, EdgeTag, Question, SpanDependencyGraph, \
    parse_edge_tag, parse_qdmr_text
from qdecomp.graphs import (
    CyclicSdg,
    DumExhausted,
    DupExhausted,
    InconsistentNode,
    ProbTensor,
    augment_question,
    dg_to_lf,
    dg_to_sdg_soft,
    extract_sdg,
    graph_score,
    greedy_decode,
    sdg_to_dg,
    sdg_to_lf,
)
from qdecomp.lf_em import lf_em
from qdecomp.qdmr_to_lf import qdmr_to_lf

FILTER_SUB = EdgeTag.semantic("filter", (), "sub")
PROJECT_SUB = EdgeTag.semantic("project", (), "sub")


def _edges(dg):
    return {(i, j, str(t)) for i, j, t in dg.edges}


@pytest.fixture(scope="module")
def census(census_question, census_qdmr, lex):
    lf = qdmr_to_lf(census_qdmr, lex)
    aug = augment_question(census_question, lex)
    al = align(aug, census_qdmr, lex)
    sdg = extract_sdg(lf, al, aug)
    return lf, aug, al, sdg


# -- augmentation ------------------------------------------------------------

def test_augment_lengths(lex):
    q = Question(("a", "b", "c", "d", "e"))
    assert augment_question(q, store=("x", "y", "z")).n == 17
    assert augment_question(q, store=()).n == 14
    assert augment_question(q, lex).n == 5 + 1 + len(lex.store_words) + 8


def test_store_word_addressable(lex):
    aug = augment_question("show me all connections from boston", lex)
    assert "flights" in aug.tokens[aug.sep_index + 1:]


# -- LF + alignment -> SDG -> DG ---------------------------------------------

def test_census_sdg_edges(census):
    _, _, _, sdg = census
    assert [(a, b, str(t)) for a, b, t in sdg.edges if a == 5] == [
        (5, 3, "comparison-arg[min]"), (5, 4, "comparison-arg[min]")]
    assert len(sdg.nodes) == 6


def test_shared_token_becomes_dup(census):
    _, aug, _, sdg = census
    size = aug.tokens.index("size", aug.sep_index)
    assert sdg.nodes[3] == (size,)
    (dup, target), = sdg.duplicates
    assert sdg.nodes[4] == (dup,) and target == size and aug.tokens[dup] == "[DUP]"


def test_empty_step_gets_dum(lex):
    q = Question.from_text("how many cubes are there")
    qdmr = parse_qdmr_text("return cubes ;return number of #1")
    lf = qdmr_to_lf(qdmr, lex)
    aug = augment_question(q, lex)
    sdg = extract_sdg(lf, align(aug, qdmr, lex), aug)
    assert sdg.nodes[1] == (aug.dum_token_indices[0],)


def test_single_step_sdg(lex):
    q = Question.from_text("show cubes")
    qdmr = parse_qdmr_text("return cubes")
    aug = augment_question(q, lex)
    sdg = extract_sdg(qdmr_to_lf(qdmr, lex), align(aug, qdmr, lex), aug)
    assert sdg.nodes == ((1,),) and sdg.edges == ()


def test_dum_and_dup_exhaustion(lex):
    q = Question.from_text("how many cubes are there")
    qdmr = parse_qdmr_text("return cubes ;return number of #1")
    lf = qdmr_to_lf(qdmr, lex)
    aug = augment_question(q, lex, k_dum=0)
    with pytest.raises(DumExhausted):
        extract_sdg(lf, align(aug, qdmr, lex), aug)
    qdmr = parse_qdmr_text("return cubes ;return cubes")
    aug = augment_question(q, lex, k_dup=0)
    with pytest.raises(DupExhausted):
        extract_sdg(qdmr_to_lf(qdmr, lex), Alignment(((2, 0, 0), (2, 1, 0))), aug)


def test_span_chain_and_representative():
    aug = augment_question(Question(tuple("abcdefg")), store=(), k_dum=0, k_dup=0)
    sdg = SpanDependencyGraph(((2, 5, 6), (0,)), ((0, 1, FILTER_SUB),))
    dg = sdg_to_dg(sdg, aug)
    assert _edges(dg) == {(2, 5, "span"), (5, 6, "span"), (6, 0, "filter-sub")}


def test_single_semantic_edge():
    aug = augment_question(Question(("x", "y")), store=(), k_dum=0, k_dup=0)
    dg = sdg_to_dg(SpanDependencyGraph(((0,), (1,)), ((1, 0, FILTER_SUB),)), aug)
    assert _edges(dg) == {(1, 0, "filter-sub")}


def test_census_dg_shape(census):
    _, aug, _, sdg = census
    dg = sdg_to_dg(sdg, aug)
    tags = sorted(str(t) for _, _, t in dg.edges)
    assert tags.count("span") == 3 and tags.count("duplicate") == 1
    assert tags.count("comparison-arg[min]") == 2
    for i, j, t in dg.edges:
        if t.is_span:
            assert i < j


# -- DG -> SDG -> LF ---------------------------------------------------------

def test_soft_inverse(census):
    _, aug, _, sdg = census
    back = dg_to_sdg_soft(sdg_to_dg(sdg, aug))
    assert sorted(back.nodes) == sorted(sdg.nodes)
    assert back.duplicates == sdg.duplicates
    where = {n: k for k, n in enumerate(back.nodes)}
    moved = {(where[sdg.nodes[a]], where[sdg.nodes[b]], t) for a, b, t in sdg.edges}
    assert moved == set(back.edges)


def test_census_round_trip(census):
    lf, aug, _, sdg = census
    assert lf_em(sdg_to_lf(dg_to_sdg_soft(sdg_to_dg(sdg, aug)), aug), lf)


def test_stray_span_joins_component():
    dg = DependencyGraph(4, ((1, 2, SPAN), (2, 3, SPAN), (1, 3, SPAN)), ("a", "b", "c", "d"))
    assert dg_to_sdg_soft(dg).nodes == ((1, 2, 3),)


def test_leftmost_span_parent_kept():
    dg = DependencyGraph(4, ((0, 3, SPAN), (2, 3, SPAN)), ("a", "b", "c", "d"))
    # the dropped parent has no other arc, so it belongs to no span
    assert dg_to_sdg_soft(dg).nodes == ((0, 3),)
    dg = DependencyGraph(4, ((0, 3, SPAN), (2, 3, SPAN), (2, 1, FILTER_SUB)), ("a", "b", "c", "d"))
    assert dg_to_sdg_soft(dg).nodes == ((1,), (2,), (0, 3))


def test_mixed_operators_inconsistent():
    tokens = ("cubes", "red", "size")
    dg = DependencyGraph(3, ((1, 0, FILTER_SUB), (1, 2, PROJECT_SUB)), tokens)
    sdg = dg_to_sdg_soft(dg)  # soft: no error yet
    with pytest.raises(InconsistentNode):
        sdg_to_lf(sdg, tokens)


def test_select_node():
    lf = sdg_to_lf(SpanDependencyGraph(((0,),), ()), ("cubes",))
    assert lf.render() == ["SELECT[](sub=cubes)"]


def test_cycle():
    sdg = SpanDependencyGraph(((0,), (1,)), ((0, 1, FILTER_SUB), (1, 0, FILTER_SUB)))
    with pytest.raises(CyclicSdg):
        sdg_to_lf(sdg, ("a", "b"))


def test_dg_to_lf_uses_graph_tokens(census):
    lf, aug, _, sdg = census
    dg = sdg_to_dg(sdg, aug)
    assert dg_to_lf(dg) == dg_to_lf(dg, aug)


# -- tensors and greedy decoding ---------------------------------------------

def test_prob_tensor_validation():
    with pytest.raises(ValueError):
        ProbTensor("x", 2, ("span",), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        ProbTensor("x", 2, ("span",), np.full((2, 2, 1), 1.5))
    with pytest.raises(ValueError):
        ProbTensor("x", 2, ("span", "duplicate"), np.full((2, 2, 2), 0.6))
    with pytest.raises(ValueError):
        ProbTensor("x", 2, ("nonsense",), np.zeros((2, 2, 1)))


def test_greedy_single_edge():
    p = np.zeros((2, 2, 1))
    p[0, 1, 0] = 0.9
    dg = greedy_decode(ProbTensor("x", 2, ("span",), p))
    assert _edges(dg) == {(0, 1, "span")}


def test_greedy_low_mass_is_empty():
    p = np.full((3, 3, 2), 0.24)
    assert greedy_decode(ProbTensor("x", 3, ("span", "filter-sub"), p)).edges == ()


def test_greedy_uses_total_mass_and_breaks_ties_alphabetically():
    p = np.zeros((2, 2, 3))
    p[1, 0] = [0.2, 0.2, 0.2]  # no single tag above 0.5, total is
    dg = greedy_decode(ProbTensor("x", 2, ("span", "filter-sub", "duplicate"), p))
    assert _edges(dg) == {(1, 0, "duplicate")}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 0.99))
def test_scaling_never_adds_edges(seed, factor):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(4), size=(3, 3))[:, :, :3]
    tags = ("span", "filter-sub", "union-sub")
    before = {(i, j) for i, j, _ in greedy_decode(ProbTensor("a", 3, tags, p)).edges}
    i, j = rng.integers(3, size=2)
    q = p.copy()
    q[i, j] *= factor
    after = {(a, b) for a, b, _ in greedy_decode(ProbTensor("b", 3, tags, q)).edges}
    assert after - before == set()
    assert after >= before - {(int(i), int(j))}


def test_graph_score():
    p = np.zeros((2, 2, 1))
    p[0, 1, 0] = 0.75
    pt = ProbTensor("x", 2, ("span",), p)
    empty = DependencyGraph(2, ())
    one = DependencyGraph(2, ((0, 1, SPAN),))
    assert graph_score(one, pt) - graph_score(empty, pt) == pytest.approx(np.log(0.75) - np.log(0.25))
    assert parse_edge_tag("duplicate") == DUPLICATE
