"""Evaluation conditions: prioritized, side-effect-free checks on reflection
models, run either as a full sweep or anchored at change events."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from . import guard
from .model import ReflectionModel, UnknownElementError
from .pattern import Pattern, match_pattern, search

log = logging.getLogger(__name__)

LANES = ("fast", "slow")


@dataclass(frozen=True)
class Trigger:
    kind: str
    attribute: str | None = None

    def fires_on(self, event) -> bool:
        if event.kind != self.kind:
            return False
        return self.attribute is None or event.attribute == self.attribute


@dataclass(frozen=True)
class EvaluationCondition:
    """A pattern describing a bad situation: every match is a violation."""

    condition_id: str
    priority: int
    pattern: Pattern
    lane: str = "fast"
    triggers: tuple[Trigger, ...] = ()
    linked: str | None = None

    def __post_init__(self) -> None:
        if self.lane not in LANES:
            raise ValueError(f"unknown lane {self.lane!r}")

    def triggered_by(self, event) -> bool:
        return any(t.fires_on(event) for t in self.triggers)

    @property
    def anchor_var(self) -> str:
        return self.pattern.anchor or self.pattern.nodes[0].var


@dataclass(frozen=True)
class EvaluationResult:
    result_id: str
    condition_id: str
    priority: int
    tick: int
    violated: bool
    bindings: tuple = ()
    anchor_element_id: str | None = None
    mode: str = "full"
    error: str | None = None

    def to_dict(self) -> dict:
        d = {
            "resultId": self.result_id,
            "conditionId": self.condition_id,
            "priority": self.priority,
            "violated": self.violated,
            "anchor": self.anchor_element_id,
            "bindings": [dict(sorted(b.items())) for b in self.bindings],
        }
        if self.error:
            d["error"] = self.error
        return d


class PublishReport(NamedTuple):
    annotated: int
    stale: int


def _by_priority(conditions: Iterable[EvaluationCondition]) -> list[EvaluationCondition]:
    return sorted(conditions, key=lambda c: (-c.priority, c.condition_id))


def _result(cond, tick, anchor, bindings, mode, error=None) -> EvaluationResult:
    return EvaluationResult(
        result_id=f"{cond.condition_id}@{tick}:{anchor if anchor is not None else '-'}",
        condition_id=cond.condition_id,
        priority=cond.priority,
        tick=tick,
        violated=bool(bindings),
        bindings=tuple(bindings),
        anchor_element_id=anchor,
        mode=mode,
        error=error,
    )


def _type_error(model: ReflectionModel, cond: EvaluationCondition) -> str | None:
    unknown = sorted(cond.pattern.types() - set(model.metamodel.node_types))
    if unknown:
        return f"unknown node type(s) {', '.join(unknown)}"
    return None


def _grouped(cond, tick, bindings, mode) -> list[EvaluationResult]:
    groups: dict[str, list] = {}
    for b in bindings:
        groups.setdefault(b[cond.anchor_var], []).append(b)
    return [_result(cond, tick, a, bs, mode) for a, bs in groups.items()]


def _full_one(model, cond, tick, mode="full") -> list[EvaluationResult]:
    err = _type_error(model, cond)
    if err:
        return [_result(cond, tick, None, [], mode, err)]
    try:
        found = match_pattern(model, cond.pattern)
    except Exception as exc:  # quarantined per condition
        log.warning("condition %s failed: %s", cond.condition_id, exc)
        return [_result(cond, tick, None, [], mode, str(exc))]
    return _grouped(cond, tick, found, mode) or [_result(cond, tick, None, [], mode)]


def evaluate_full(model: ReflectionModel, conditions: Sequence[EvaluationCondition], tick: int = 0) -> list[EvaluationResult]:
    with guard.pure(model, "evaluate_full"):
        out: list[EvaluationResult] = []
        for cond in _by_priority(conditions):
            out.extend(_full_one(model, cond, tick))
        return out


def _seeds(model: ReflectionModel, event) -> list[str]:
    if event.kind in ("attr-changed", "node-added"):
        return [event.element_id] if event.element_id in model.nodes else []
    if event.kind == "edge-added":
        e = model.edges.get(event.element_id)
        if e is not None:
            return [n for n in (e.src, e.tgt) if n in model.nodes]
    return []


def evaluate_incremental(
    model: ReflectionModel,
    conditions: Sequence[EvaluationCondition],
    events: Sequence,
    tick: int = 0,
) -> list[EvaluationResult]:
    """Evaluate only the conditions some event triggers, starting at the event locations.

    A changed node is tried at every pattern variable of its type, so a new
    violation that contains the changed element is found even when the
    element is not the anchor. Conditions with negative sub-patterns can be
    unblocked by changes outside any match and are re-evaluated in full
    when triggered.
    """
    with guard.pure(model, "evaluate_incremental"):
        out: list[EvaluationResult] = []
        for cond in _by_priority(conditions):
            fired = [ev for ev in events if cond.triggered_by(ev)]
            if not fired:
                continue
            err = _type_error(model, cond)
            if err:
                out.append(_result(cond, tick, None, [], "incremental", err))
                continue
            if cond.pattern.negatives:
                out.extend(_full_one(model, cond, tick, "incremental"))
                continue
            try:
                out.extend(_anchored(model, cond, fired, tick))
            except Exception as exc:
                log.warning("condition %s failed: %s", cond.condition_id, exc)
                out.append(_result(cond, tick, None, [], "incremental", str(exc)))
        return out


def _anchored(model, cond, fired, tick) -> list[EvaluationResult]:
    seen_seeds: list[str] = []
    for ev in fired:
        for s in _seeds(model, ev):
            if s not in seen_seeds:
                seen_seeds.append(s)
    groups: dict[str, list] = {}
    keys: dict[str, set] = {}
    order: list[str] = []
    pattern = cond.pattern
    slots = [pattern.anchor] if pattern.anchor else []
    slots += [v for v in pattern.variables if v != pattern.anchor]
    for seed in seen_seeds:
        seed_type = model.nodes[seed].type
        for var in slots:
            if pattern.var_type(var) != seed_type:
                continue
            for b in search(model, pattern, {var: seed}):
                a = b[cond.anchor_var]
                k = tuple(sorted(b.items()))
                if a not in groups:
                    groups[a], keys[a] = [], set()
                    order.append(a)
                if k not in keys[a]:
                    keys[a].add(k)
                    groups[a].append(b)
        if seed not in groups:
            order.append(seed)
            groups[seed], keys[seed] = [], set()
    return [_result(cond, tick, a, groups[a], "incremental") for a in order]


def annotate_and_publish(model: ReflectionModel, results: Iterable[EvaluationResult]) -> PublishReport:
    annotated = stale = 0
    for r in results:
        if not r.violated:
            continue
        try:
            model.annotate_result(r)
        except UnknownElementError:
            log.warning("result %s anchored at vanished element %s", r.result_id, r.anchor_element_id)
            stale += 1
            continue
        annotated += 1
    return PublishReport(annotated, stale)


def violation_set(results: Iterable[EvaluationResult]) -> set[tuple[str, tuple]]:
    """(conditionId, binding) pairs, the unit the incremental/full equivalence is stated in."""
    return {(r.condition_id, tuple(sorted(b.items()))) for r in results for b in r.bindings}
