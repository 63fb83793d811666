from __future__ import annotations

import pytest

from amrt.change import (
    AdaptationOption,
    Candidate,
    ChangeError,
    Context,
    CycleDetected,
    PreconditionVanished,
    SetT,
    applicable_options,
    apply_option,
    estimate,
    expand_composite,
    verify_option,
)
from amrt.expr import Attr, Cmp, Lit
from amrt.model import AddEdge, AddNode, SetAttr, TypeViolation, snapshot_digest
from amrt.pattern import Pattern, PatternNode
from amrt.system import ChangeEvent

ANY = Pattern((PatternNode("c", "Component"),), anchor="c")


def _opt(bundle, oid):
    return next(o for o in bundle.options if o.option_id == oid)


def test_m0_has_no_candidates(model, bundle):
    assert applicable_options(model, bundle.options) == []


def test_failed_component_offers_restart(model, bundle):
    model.nodes["C2"].attrs["state"] = "FAILED"
    assert applicable_options(model, bundle.options) == [Candidate.make("RestartComponent", {"c": "C2"})]


def test_slow_component_offers_replica(model, bundle):
    model.nodes["C2"].attrs["rt"] = 700.0
    assert applicable_options(model, bundle.options) == [Candidate.make("AddReplica", {"c": "C2", "h": "S1"})]


def test_context_restricts_anchored_search(model, bundle):
    model.nodes["C1"].attrs["state"] = "FAILED"
    model.nodes["C2"].attrs["state"] = "FAILED"
    ctx = Context(events=(ChangeEvent(1, 1, "attr-changed", "C2", "state"),))
    assert applicable_options(model, bundle.options, ctx) == [Candidate.make("RestartComponent", {"c": "C2"})]
    assert len(applicable_options(model, bundle.options)) == 2
    edge_ctx = Context(events=(ChangeEvent(2, 1, "edge-added", "C1-connects->C2"),))
    assert len(applicable_options(model, bundle.options, edge_ctx)) == 2


def test_apply_restart_and_verify(model, bundle):
    model.nodes["C2"].attrs["state"] = "FAILED"
    cand = Candidate.make("RestartComponent", {"c": "C2"})
    txn = apply_option(model, cand, bundle.options)
    assert model.nodes["C2"].attrs["state"] == "RUNNING"
    assert verify_option(model, cand, txn, bundle.options).passed
    assert txn.commit() == (SetAttr("C2", "state", "FAILED", "RUNNING"),)


def test_apply_replica_clones_and_rolls_back(model, bundle):
    model.nodes["C2"].attrs["rt"] = 700.0
    before = snapshot_digest(model)
    cand = Candidate.make("AddReplica", {"c": "C2", "h": "S1"})
    txn = apply_option(model, cand, bundle.options)
    assert [type(op) for op in txn.ops] == [AddNode, AddEdge]
    clone = model.nodes["C2#r1"]
    assert clone.attrs == model.nodes["C2"].attrs
    assert model.has_edge("C2#r1", "deployedOn", "S1")
    assert verify_option(model, cand, txn, bundle.options).passed
    txn.rollback()
    assert snapshot_digest(model) == before


def test_replica_invariant_caps_at_three(model, bundle):
    model.nodes["C2"].attrs["rt"] = 700.0
    cand = Candidate.make("AddReplica", {"c": "C2", "h": "S1"})
    txn = model.begin_transaction()
    for _ in range(2):
        apply_option(model, cand, bundle.options, txn)
        assert verify_option(model, cand, txn, bundle.options).passed
    apply_option(model, cand, bundle.options, txn)
    out = verify_option(model, cand, txn, bundle.options)
    assert not out.passed and out.reasons == ("invariant 0",)
    txn.rollback()


def test_postcondition_failure(model):
    broken = AdaptationOption("Broken", ANY, effect=(SetT("c", "state", Lit("FAILED")),), post=(Cmp("=", Attr("c", "state"), Lit("RUNNING")),))
    cand = Candidate.make("Broken", {"c": "C1"})
    txn = apply_option(model, cand, [broken])
    assert verify_option(model, cand, txn, [broken]).reasons == ("postcondition",)
    txn.rollback()


def test_conformance_failure_is_reported(model):
    bad = AdaptationOption("Bad", ANY, effect=(SetT("c", "state", Lit("ZOMBIE")),))
    cand = Candidate.make("Bad", {"c": "C1"})
    txn = apply_option(model, cand, [bad])
    out = verify_option(model, cand, txn, [bad])
    assert not out.passed and out.reasons[0].startswith("conformance")
    txn.rollback()


def test_vanished_precondition(model, bundle):
    with pytest.raises(PreconditionVanished):
        apply_option(model, Candidate.make("RestartComponent", {"c": "C2"}), bundle.options)
    assert model.open_transaction is None


def test_failed_effect_undoes_partial_work(model):
    half = AdaptationOption("Half", ANY, effect=(SetT("c", "load", Lit(1.0)), SetT("c", "rt", Lit("fast"))))
    before = snapshot_digest(model)
    txn = model.begin_transaction()
    with pytest.raises(TypeViolation):
        apply_option(model, Candidate.make("Half", {"c": "C1"}), [half], txn)
    assert snapshot_digest(model) == before
    assert txn.ops == []
    txn.rollback()


def test_composite_expansion_and_cycles(model):
    a = AdaptationOption("A", ANY, effect=(SetT("c", "load", Lit(1.0)),))
    b = AdaptationOption("B", ANY, effect=(SetT("c", "rt", Lit(5.0)),))
    both = AdaptationOption("Both", ANY, compose=("A", "B"))
    top = AdaptationOption("Top", ANY, compose=("Both", "A"))
    assert expand_composite(top, [a, b, both, top]) == ["A", "B", "A"]
    txn = apply_option(model, Candidate.make("Both", {"c": "C3"}), [a, b, both])
    assert (model.nodes["C3"].attrs["load"], model.nodes["C3"].attrs["rt"]) == (1.0, 5.0)
    txn.rollback()
    loop1 = AdaptationOption("L1", ANY, compose=("L2",))
    loop2 = AdaptationOption("L2", ANY, compose=("L1",))
    with pytest.raises(CycleDetected):
        expand_composite(loop1, [loop1, loop2])
    with pytest.raises(ChangeError):
        expand_composite(AdaptationOption("X", ANY, compose=("nope",)), [])


def test_option_validation():
    with pytest.raises(ChangeError):
        AdaptationOption("Neg", ANY, cost=-1.0)
    with pytest.raises(ChangeError):
        AdaptationOption("Both", ANY, effect=(SetT("c", "rt", Lit(1.0)),), compose=("A",))


def test_estimate(bundle):
    prefs = bundle.preferences
    assert estimate(Candidate.make("RestartComponent", {"c": "C2"}), bundle.options, prefs) == pytest.approx((1.0, 0.198))
    assert estimate(Candidate.make("AddReplica", {"c": "C2", "h": "S1"}), bundle.options, prefs) == pytest.approx((2.0, 0.08))


def test_writes(bundle):
    assert _opt(bundle, "RestartComponent").writes() == {("c", "state")}
