from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amrt.expr import Attr, Cmp, Lit, Param, Ref, UnboundParameter
from amrt.pattern import (
    Pattern,
    PatternEdge,
    PatternError,
    PatternNode,
    UnknownAnchorError,
    match_pattern,
    search,
)

from oracles import binding_set, brute_force_matches, random_model, random_pattern

FAILED_COMP = Pattern((PatternNode("c", "Component"),), where=(Cmp("=", Attr("c", "state"), Lit("FAILED")),), anchor="c")


def test_no_failed_component_in_m0(model):
    assert match_pattern(model, FAILED_COMP) == []


def test_failed_component_found(model):
    model.nodes["C2"].attrs["state"] = "FAILED"
    assert match_pattern(model, FAILED_COMP) == [{"c": "C2"}]
    assert match_pattern(model, FAILED_COMP, anchor="C2") == [{"c": "C2"}]
    assert match_pattern(model, FAILED_COMP, anchor="C1") == []


def test_unknown_anchor(model):
    with pytest.raises(UnknownAnchorError):
        match_pattern(model, FAILED_COMP, anchor="C9")


def test_edges_and_homomorphism(model):
    chain = Pattern(
        (PatternNode("a", "Component"), PatternNode("b", "Component"), PatternNode("s", "Server")),
        (PatternEdge("a", "connects", "b"), PatternEdge("a", "deployedOn", "s"), PatternEdge("b", "deployedOn", "s")),
    )
    assert match_pattern(model, chain) == [{"a": "C1", "b": "C2", "s": "S1"}, {"a": "C2", "b": "C3", "s": "S1"}]
    # without an edge between them, two variables may land on the same node
    pair = Pattern((PatternNode("a", "Component"), PatternNode("b", "Component")))
    assert len(match_pattern(model, pair)) == 9
    distinct = Pattern(pair.nodes, where=(Cmp("!=", Ref("a"), Ref("b")),))
    assert len(match_pattern(model, distinct)) == 6


def test_negative_pattern(model):
    # components with no outgoing connection
    leaf = Pattern(
        (PatternNode("c", "Component"),),
        negatives=(Pattern((PatternNode("d", "Component"),), (PatternEdge("c", "connects", "d"),)),),
    )
    assert match_pattern(model, leaf) == [{"c": "C3"}]


def test_params_and_mixed_kinds(model):
    slow = Pattern((PatternNode("c", "Component"),), where=(Cmp(">", Attr("c", "rt"), Param("LIMIT")),))
    assert match_pattern(model, slow, params={"LIMIT": 240.0}) == [{"c": "C2"}, {"c": "C3"}]
    with pytest.raises(UnboundParameter):
        match_pattern(model, slow)
    odd = Pattern((PatternNode("c", "Component"),), where=(Cmp("<", Attr("c", "rt"), Lit("x")),))
    assert match_pattern(model, odd) == []
    odd_ne = Pattern((PatternNode("c", "Component"),), where=(Cmp("!=", Attr("c", "rt"), Lit("x")),))
    assert len(match_pattern(model, odd_ne)) == 3


def test_malformed_patterns_rejected():
    with pytest.raises(PatternError):
        Pattern((PatternNode("a", "A"), PatternNode("a", "B"))).check()
    with pytest.raises(PatternError):
        Pattern((PatternNode("a", "A"),), (PatternEdge("a", "e", "zz"),)).check()
    with pytest.raises(PatternError):
        Pattern((PatternNode("a", "A"),), anchor="b").check()


def test_fixing_an_undeclared_variable(model):
    with pytest.raises(PatternError):
        search(model, FAILED_COMP, {"zz": "C1"})


def test_results_are_canonical(model):
    pair = Pattern((PatternNode("a", "Component"), PatternNode("b", "Component")))
    found = match_pattern(model, pair)
    assert found == sorted(found, key=lambda b: (b["a"], b["b"]))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matcher_agrees_with_brute_force(seed):
    rng = random.Random(seed)
    model = random_model(rng, max_nodes=7)
    pattern = random_pattern(rng)
    pattern.check()
    got = match_pattern(model, pattern)
    assert binding_set(got) == binding_set(brute_force_matches(model, pattern))
    assert len(got) == len(binding_set(got))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_anchored_union_is_unanchored(seed):
    rng = random.Random(seed)
    model = random_model(rng, max_nodes=7)
    pattern = random_pattern(rng, anchored=True)
    atype = pattern.var_type(pattern.anchor)
    union = set()
    for nid in model.nodes_of_type(atype):
        anchored = match_pattern(model, pattern, anchor=nid)
        assert all(b[pattern.anchor] == nid for b in anchored)
        union |= binding_set(anchored)
    assert union == binding_set(match_pattern(model, pattern))
