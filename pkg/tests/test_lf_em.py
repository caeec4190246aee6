import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qdecomp.core import LogicalForm, LogicalFormStep, parse_lf_step, render_lf_step
from qdecomp.lf_em import (
    LengthMismatch,
    apply_merge,
    corpus_lf_em,
    layers,
    lf_em,
    merge_candidates,
    merge_steps,
    normalize,
    normalize_tokens,
    reorder,
    step_layer,
)
from qdecomp.qdmr_to_lf import qdmr_to_lf

from lfgen import all_topological_orders, random_lf, random_topological_order, renumber


def S(op, props=(), **args):
    return LogicalFormStep(op, props, tuple((k.rstrip("_"), tuple(v.split())) for k, v in args.items()))


def LF(*steps):
    return LogicalForm(tuple(steps))


def _from_normalized(norm):
    return LogicalForm(tuple(parse_lf_step(s) for s in norm.steps))


# -- token normalization -----------------------------------------------------

def test_t_prop_and_t_aux(lex):
    out = normalize_tokens(LF(S("select", sub="things"), S("aggregate", ("max",), arg="maximal number of #1")), lex)
    assert render_lf_step(out.steps[1]) == "AGGREGATE[max](arg=#1)"


def test_aux_removal(lex):
    assert lex.is_aux("from")
    out = normalize_tokens(LF(S("select", sub="cities"), S("filter", sub="#1", condition="from toronto")), lex)
    assert render_lf_step(out.steps[1]) == "FILTER[](condition=toronto; sub=#1)"


def test_t_rep(lex):
    out = normalize_tokens(LF(S("select", sub="countries")), lex)
    assert render_lf_step(out.steps[0]) == "SELECT[](sub=country)"


# -- merging -----------------------------------------------------------------

def test_metal_objects_pair(lex):
    split = qdmr_to_lf("return objects ;return #1 that are metal", lex)
    merged = qdmr_to_lf("return metal objects", lex)
    assert lf_em(split, merged, lex)
    assert len(normalize(split, lex)) == 1


def test_project_into_select(lex):
    lf = LF(S("select", sub="teams"), S("project", sub="#1", projection="head coach"))
    out = merge_steps(lf)
    assert len(out) == 1 and out.steps[0].operator.value == "project"


def test_filter_chain_merges():
    lf = LF(S("select", sub="cities"), S("filter", sub="#1", condition="large"), S("filter", sub="#2", condition="old"))
    assert len(merge_steps(lf)) == 1


def test_merge_fixed_point_without_candidates():
    lf = LF(S("select", sub="cubes"), S("aggregate", ("count",), arg="#1"))
    assert merge_candidates(lf) == []
    assert merge_steps(lf) == lf


def _all_fixed_points(lf):
    cands = merge_candidates(lf)
    if not cands:
        return {reorder(lf).steps}
    out = set()
    for a, b in cands:
        out |= _all_fixed_points(apply_merge(lf, a, b))
    return out


@pytest.mark.parametrize("seed", range(25))
def test_merge_confluence(seed):
    lf = normalize_tokens(random_lf(np.random.default_rng(seed), max_steps=5))
    assert len(_all_fixed_points(lf)) == 1


# -- layers and reordering ---------------------------------------------------

def test_census_layers(census_qdmr, lex):
    lf = qdmr_to_lf(census_qdmr, lex)
    assert layers(lf) == [0, 1, 1, 2, 2, 3]
    assert step_layer(lf, 5) == 3


def test_simple_layers():
    assert layers(LF(S("select", sub="x"))) == [0]
    chain = LF(S("select", sub="x"), S("filter", sub="#1", condition="a"), S("filter", sub="#2", condition="b"))
    assert layers(chain) == [0, 1, 2]


def test_parallel_selects_swap():
    a = LF(S("select", sub="cubes"), S("select", sub="spheres"), S("union", sub="#1", sub_="#2"))
    b = LF(S("select", sub="spheres"), S("select", sub="cubes"), S("union", sub="#2", sub_="#1"))
    assert reorder(a).steps == reorder(b).steps


def test_reorder_idempotent():
    lf = LF(S("select", sub="cubes"), S("select", sub="spheres"), S("union", sub="#1", sub_="#2"))
    once = reorder(lf)
    assert reorder(_from_normalized(once)).steps == once.steps


def test_census_single_normal_form(census_qdmr, lex):
    lf = qdmr_to_lf(census_qdmr, lex)
    forms = {normalize(renumber(lf, order), lex).steps for order in all_topological_orders(lf)}
    assert len(forms) == 1


# -- the metric --------------------------------------------------------------

def test_lf_em_basic(lex):
    a = LF(S("select", sub="cubes"))
    assert lf_em(a, a, lex)
    assert not lf_em(LF(S("select", sub="spheres")), a, lex)
    assert not lf_em(None, a, lex)


def test_argument_symmetry(lex):
    base = [S("select", sub="apples"), S("select", sub="pears")]
    s1 = LF(*base, S("arithmetic", ("sum",), arg="#1", arg_="#2"))
    s2 = LF(*base, S("arithmetic", ("sum",), arg="#2", arg_="#1"))
    assert lf_em(s1, s2, lex)
    d1 = LF(*base, S("arithmetic", ("diff",), left="#1", right="#2"))
    d2 = LF(*base, S("arithmetic", ("diff",), left="#2", right="#1"))
    assert not lf_em(d1, d2, lex)


def test_corpus_lf_em(lex):
    a, b = LF(S("select", sub="cubes")), LF(S("select", sub="spheres"))
    assert corpus_lf_em([a, a], [a, a], lex) == 1.0
    assert corpus_lf_em([a, b], [a, a], lex) == 0.5
    assert corpus_lf_em([a] * 52 + [b] * 48, [a] * 100, lex) == pytest.approx(0.52)
    with pytest.raises(LengthMismatch):
        corpus_lf_em([a], [a, a], lex)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_order_invariance(seed):
    rng = np.random.default_rng(seed)
    lf = random_lf(rng)
    assert lf_em(renumber(lf, random_topological_order(lf, rng)), lf)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_normalize_idempotent(seed):
    lf = random_lf(np.random.default_rng(seed))
    once = normalize(lf)
    assert normalize(_from_normalized(once)).steps == once.steps
    tok = normalize_tokens(lf)
    assert normalize_tokens(tok) == tok
    merged = merge_steps(lf)
    assert merge_steps(merged) == merged
