from __future__ import annotations

import functools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amrt.expr import Attr, Cmp, Lit
from amrt.objectives import (
    GoalSpec,
    ObjectiveError,
    QualityDimension,
    check_goal,
    measure,
    normalize,
    utility,
    validate_weights,
)
from amrt.model import ReflectionModel
from amrt.pattern import Pattern, PatternNode

from conftest import m0, shop_bundle
from oracles import shop_utility


@functools.lru_cache(maxsize=None)
def _core():
    return shop_bundle()


def _components(model):
    return {nid: (n.attrs["state"], n.attrs["rt"]) for nid, n in model.nodes.items() if n.type == "Component"}


def test_m0_utility(model, bundle):
    assert utility(model, bundle.qualities, bundle.preferences) == pytest.approx(0.9, abs=1e-9)
    assert shop_utility(_components(model)) == pytest.approx(0.9, abs=1e-9)


def test_utility_with_failed_component(model, bundle):
    model.nodes["C2"].attrs["state"] = "FAILED"
    assert utility(model, bundle.qualities, bundle.preferences) == pytest.approx(0.71, abs=1e-9)


def test_measure_each_quality(model, bundle):
    perf, avail = bundle.qualities
    assert measure(model, perf) == pytest.approx(250.0)
    assert measure(model, avail) == 1.0
    assert normalize(250.0, perf) == pytest.approx(0.75)
    assert normalize(2000.0, perf) == 0.0


def test_empty_selection_scores_worst(mm, bundle):
    empty = ReflectionModel(mm)
    perf, avail = bundle.qualities
    assert measure(empty, perf) == 1000.0
    assert measure(empty, avail) == 0.0


def test_aggregators(model):
    q = lambda agg, attr="rt": QualityDimension("q", agg, "Component", attr, hi=1000.0)  # noqa: E731
    assert measure(model, q("min")) == 200.0
    assert measure(model, q("max")) == 300.0
    assert measure(model, q("sum")) == 750.0
    assert measure(model, q("sum", None)) == 3.0


def test_quality_validation():
    with pytest.raises(ObjectiveError):
        QualityDimension("q", "median", "Component", "rt")
    with pytest.raises(ObjectiveError):
        QualityDimension("q", "avg", "Component", None)
    with pytest.raises(ObjectiveError):
        QualityDimension("q", "avg", "Component", "rt", lo=1.0, hi=1.0)


def test_measure_rejects_unknown_names(model):
    with pytest.raises(ObjectiveError):
        measure(model, QualityDimension("q", "avg", "Robot", "rt"))
    with pytest.raises(ObjectiveError):
        measure(model, QualityDimension("q", "avg", "Component", "speed"))


def test_weight_validation(bundle):
    validate_weights({"perf": 0.4, "avail": 0.6}, bundle.qualities)
    with pytest.raises(ObjectiveError):
        validate_weights({"perf": 0.5, "avail": 0.6}, bundle.qualities)
    with pytest.raises(ObjectiveError):
        validate_weights({"perf": 1.2, "avail": -0.2}, bundle.qualities)
    with pytest.raises(ObjectiveError):
        validate_weights({"speed": 1.0}, bundle.qualities)


def test_goals(model, bundle):
    no_failed, uses_auth = bundle.goals
    assert check_goal(model, no_failed) == (True, [])
    assert check_goal(model, uses_auth) == (True, [])
    model.nodes["C3"].attrs["state"] = "FAILED"
    assert check_goal(model, no_failed) == (False, [{"c": "C3"}])
    model._drop_edge("C1-connects->C2")
    assert check_goal(model, uses_auth) == (False, [{"s": "C1"}])


def test_require_goal_without_anchor(model):
    any_db = GoalSpec("HasDB", "require", Pattern((PatternNode("d", "Component"),), where=(Cmp("=", Attr("d", "ctype"), Lit("DB")),)))
    assert check_goal(model, any_db)[0]
    model.nodes["C3"].attrs["ctype"] = "Cache"
    assert check_goal(model, any_db) == (False, [])


def test_unknown_goal_kind():
    with pytest.raises(ObjectiveError):
        GoalSpec("g", "prefer", Pattern((PatternNode("c", "Component"),)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_utility_matches_oracle_and_stays_in_unit_interval(seed):
    rng = random.Random(seed)
    model = m0()
    for nid in ("C1", "C2", "C3"):
        model.nodes[nid].attrs["state"] = rng.choice(["RUNNING", "FAILED"])
        model.nodes[nid].attrs["rt"] = rng.uniform(0, 1500)
    b = _core()
    u = utility(model, b.qualities, b.preferences)
    assert 0.0 <= u <= 1.0
    assert u == pytest.approx(shop_utility(_components(model)), abs=1e-12)
