"""Goals, quality dimensions, preference weights, and utility."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .expr import Cmp, all_hold
from .model import ReflectionModel
from .pattern import Pattern, match_pattern, search

AGGREGATORS = ("avg", "min", "max", "sum", "fraction")
WEIGHT_TOLERANCE = 1e-9


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class QualityDimension:
    """``aggregator(node_type[.attribute] where filter)`` with a direction and bounds.

    The filter selects the aggregated nodes for avg/min/max/sum; for
    ``fraction`` it is the predicate whose satisfying share is measured.
    Filter terms use ``Attr("", name)`` for attributes of the node itself.
    """

    quality_id: str
    aggregator: str
    node_type: str
    attribute: str | None
    where: tuple[Cmp, ...] = ()
    direction: str = "minimize"
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.aggregator not in AGGREGATORS:
            raise ObjectiveError(f"unknown aggregator {self.aggregator!r}")
        if self.direction not in ("minimize", "maximize"):
            raise ObjectiveError(f"unknown direction {self.direction!r}")
        if not self.lo < self.hi:
            raise ObjectiveError(f"{self.quality_id}: bounds need lo < hi")
        if self.aggregator in ("avg", "min", "max") and self.attribute is None:
            raise ObjectiveError(f"{self.quality_id}: {self.aggregator} needs an attribute")

    @property
    def worst(self) -> float:
        return self.hi if self.direction == "minimize" else self.lo


@dataclass(frozen=True)
class GoalSpec:
    goal_id: str
    kind: str  # "require" | "forbid"
    pattern: Pattern

    def __post_init__(self) -> None:
        if self.kind not in ("require", "forbid"):
            raise ObjectiveError(f"unknown goal kind {self.kind!r}")


def validate_weights(weights: Mapping[str, float], qualities: Sequence[QualityDimension]) -> None:
    declared = {q.quality_id for q in qualities}
    for qid, w in weights.items():
        if qid not in declared:
            raise ObjectiveError(f"weight for undeclared quality {qid!r}")
        if not 0.0 <= w <= 1.0:
            raise ObjectiveError(f"weight {qid}={w} outside [0, 1]")
    if abs(sum(weights.values()) - 1.0) > WEIGHT_TOLERANCE:
        raise ObjectiveError(f"weights sum to {sum(weights.values())!r}, not 1")


def _selected(model: ReflectionModel, q: QualityDimension) -> tuple[list[str], list[str]]:
    ids = model.nodes_of_type(q.node_type)
    hits = [nid for nid in ids if all_hold(q.where, {"": nid}, model.nodes)]
    return ids, hits


def measure(model: ReflectionModel, q: QualityDimension) -> float:
    if q.node_type not in model.metamodel.node_types:
        raise ObjectiveError(f"unknown node type {q.node_type!r}")
    if q.attribute is not None and model.metamodel.attr(q.node_type, q.attribute) is None:
        raise ObjectiveError(f"unknown attribute {q.node_type}.{q.attribute}")
    ids, hits = _selected(model, q)
    if q.aggregator == "fraction":
        return len(hits) / len(ids) if ids else q.worst
    if q.attribute is None:
        return float(len(hits))  # sum without attribute counts nodes
    values = [model.nodes[nid].attrs[q.attribute] for nid in hits if q.attribute in model.nodes[nid].attrs]
    if q.aggregator == "sum":
        return float(sum(values))
    if not values:
        return q.worst
    if q.aggregator == "avg":
        return sum(values) / len(values)
    return float(min(values) if q.aggregator == "min" else max(values))


def normalize(raw: float, q: QualityDimension) -> float:
    n = min(1.0, max(0.0, (raw - q.lo) / (q.hi - q.lo)))
    return n if q.direction == "maximize" else 1.0 - n


def utility(model: ReflectionModel, qualities: Sequence[QualityDimension], prefs: Mapping[str, float]) -> float:
    if not prefs:
        return 0.0
    validate_weights(prefs, qualities)
    by_id = {q.quality_id: q for q in qualities}
    return sum(w * normalize(measure(model, by_id[qid]), by_id[qid]) for qid, w in prefs.items())


def check_goal(model: ReflectionModel, goal: GoalSpec) -> tuple[bool, list[dict[str, str]]]:
    """Return (satisfied, witnesses).

    forbid: witnesses are the matches. require with an anchor: every node of
    the anchor type that passes the anchor-only predicates must extend to a
    match; witnesses are the ones that do not. require without an anchor
    just needs one match.
    """
    p = goal.pattern
    if goal.kind == "forbid":
        found = match_pattern(model, p)
        return (not found, found)
    if p.anchor is None:
        return (bool(match_pattern(model, p)), [])
    scope_type = p.var_type(p.anchor)
    own = tuple(c for c in p.where if c.variables() <= {p.anchor})
    missing = []
    for nid in model.nodes_of_type(scope_type):
        if not all_hold(own, {p.anchor: nid}, model.nodes):
            continue
        if not search(model, p, {p.anchor: nid}):
            missing.append({p.anchor: nid})
    return (not missing, missing)
