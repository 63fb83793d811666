"""The resolved adaptation model: everything the engines execute."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .change import AdaptationOption
from .evaluation import EvaluationCondition
from .model import Metamodel
from .objectives import GoalSpec, QualityDimension


@dataclass(frozen=True)
class ParamDecl:
    name: str
    kind: str
    value: Any


@dataclass(frozen=True)
class RuleAction:
    option_id: str
    args: tuple[tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class CoupledRule:
    """When ``condition_id`` is violated, apply ``actions`` in order."""

    rule_id: str
    condition_id: str
    actions: tuple[RuleAction, ...]
    enabled: bool = True


@dataclass(frozen=True)
class AdaptationModel:
    name: str
    params: tuple[ParamDecl, ...] = ()
    qualities: tuple[QualityDimension, ...] = ()
    preferences: Mapping[str, float] = field(default_factory=dict)
    goals: tuple[GoalSpec, ...] = ()
    conditions: tuple[EvaluationCondition, ...] = ()
    options: tuple[AdaptationOption, ...] = ()
    rules: tuple[CoupledRule, ...] = ()
    metamodel: Metamodel | None = field(default=None, compare=False, repr=False)
    spans: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def option_table(self) -> dict[str, AdaptationOption]:
        return {o.option_id: o for o in self.options}

    def condition(self, condition_id: str) -> EvaluationCondition | None:
        return next((c for c in self.conditions if c.condition_id == condition_id), None)

    def rules_for(self, condition_id: str) -> list[CoupledRule]:
        return [r for r in self.rules if r.condition_id == condition_id and r.enabled]

    def planner_options(self) -> list[AdaptationOption]:
        """Options the planner may try: it never invents parameter values."""
        return [o for o in self.options if o.default_params() is not None]
