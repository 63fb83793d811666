"""Feedback-loop engines.

The coupled engine maps violated fast-lane conditions straight to options
through rules. The decoupled engine analyzes slow-lane conditions and goals,
then searches prescriptive variants of the model for the best plan. Both go
through the same consistency gate before anything reaches the system.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from . import guard
from .bundle import AdaptationModel
from .change import (
    Candidate,
    ChangeError,
    Context,
    apply_option,
    applicable_options,
    estimate,
    verify_option,
)
from .evaluation import EvaluationResult, annotate_and_publish, evaluate_full, evaluate_incremental
from .model import ModelError, ReflectionModel
from .objectives import check_goal, utility
from .pattern import match_pattern
from .system import SimError, SimSystem, command_to_dict, execute_sync, monitor_sync, translate_delta

log = logging.getLogger(__name__)

ENGINE_MODES = ("coupled", "decoupled", "both")


class InvalidModelError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class PlannerConfig:
    max_depth: int = 3
    beam_width: int | None = 8  # None: unbounded
    cost_weight: float = 0.01
    full_sweep_period: int = 20
    slow_lane_period: int = 5
    critical_priority: int = 100
    max_expansions: int = 100_000

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.beam_width is not None and self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.cost_weight < 0:
            raise ValueError("cost_weight must be >= 0")
        if self.full_sweep_period < 1 or self.slow_lane_period < 1:
            raise ValueError("periods must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerConfig":
        names = {
            "maxDepth": "max_depth",
            "beamWidth": "beam_width",
            "costWeight": "cost_weight",
            "fullSweepPeriod": "full_sweep_period",
            "slowLanePeriod": "slow_lane_period",
            "criticalPriority": "critical_priority",
            "maxExpansions": "max_expansions",
        }
        unknown = set(d) - set(names)
        if unknown:
            raise ValueError(f"unknown planner settings: {sorted(unknown)}")
        return cls(**{names[k]: v for k, v in d.items()})


@dataclass
class DecisionRecord:
    tick: int
    engine: str
    consumed_event_ids: list[int] = field(default_factory=list)
    result_ids: list[str] = field(default_factory=list)
    condition_ids: list[str] = field(default_factory=list)
    chosen: list[Candidate] = field(default_factory=list)
    utility_before: float = 0.0
    utility_after: float = 0.0
    predicted_utility: float | None = None
    gate_outcome: list[str] = field(default_factory=list)
    executed_commands: list = field(default_factory=list)
    note: str | None = None
    results: list = field(default_factory=list, repr=False, compare=False)

    @property
    def adapted(self) -> bool:
        return bool(self.chosen or self.gate_outcome)

    def to_dict(self) -> dict:
        d = {
            "engine": self.engine,
            "consumedEventIds": self.consumed_event_ids,
            "resultIds": self.result_ids,
            "conditionIds": self.condition_ids,
            "chosen": [c.to_dict() for c in self.chosen],
            "utilityBefore": self.utility_before,
            "utilityAfter": self.utility_after,
            "gateOutcome": self.gate_outcome,
            "executedCommands": [command_to_dict(c) for c in self.executed_commands],
        }
        if self.predicted_utility is not None:
            d["predictedUtility"] = self.predicted_utility
        if self.note:
            d["note"] = self.note
        return d


Tracer = Callable[[int, str, dict], None]


class EngineState:
    def __init__(self, adaptation_model: AdaptationModel, config: PlannerConfig | None = None, mode: str = "both", trace: Tracer | None = None):
        if mode not in ENGINE_MODES:
            raise ValueError(f"unknown engine mode {mode!r}")
        self.adaptation_model = adaptation_model
        self.config = config or PlannerConfig()
        self.mode = mode
        self.history: list[DecisionRecord] = []
        self.pending_swap: AdaptationModel | None = None
        self.pending_events: list = []
        self.last_consumed: list = []
        self.last_sweep: int | None = None
        self.full_fast_due = True
        self.trace = trace or (lambda tick, kind, payload: None)
        self._lock = threading.Lock()

    def record(self, rec: DecisionRecord) -> None:
        if self.history and rec.tick < self.history[-1].tick:
            raise ValueError("decision history must be appended in tick order")
        self.history.append(rec)
        self.trace(rec.tick, "decision", rec.to_dict())


def _utility(model: ReflectionModel, am: AdaptationModel) -> float:
    return utility(model, am.qualities, am.preferences)


def _trace_results(state: EngineState, tick: int, lane: str, mode: str, results: Sequence[EvaluationResult]) -> None:
    state.trace(tick, "evaluation", {"lane": lane, "mode": mode, "results": [r.to_dict() for r in results]})


# -- consistency gate ----------------------------------------------------------


@dataclass
class GateResult:
    passed: bool
    reasons: list[str]
    commands: list
    events: list


def gated_apply(model: ReflectionModel, sys: SimSystem, cands: Sequence[Candidate], am: AdaptationModel) -> GateResult:
    """Apply ``cands`` in one transaction, verify, commit and execute, or roll back.

    Raises :class:`PreconditionVanished` if a candidate is no longer applicable.
    """
    table = am.option_table
    txn = model.begin_transaction()
    try:
        for cand in cands:
            apply_option(model, cand, table, txn)
    except ChangeError:
        if txn.status == "open":
            txn.rollback()
        raise
    except ModelError as exc:
        if txn.status == "open":
            txn.rollback()
        return GateResult(False, [f"edit failed: {exc}"], [], [])
    reasons: list[str] = []
    for cand in cands:
        outcome = verify_option(model, cand, txn, table)
        reasons += [f"{cand.option_id}: {r}" for r in outcome.reasons]
    if not reasons:
        try:
            translate_delta(txn.ops, sys)
        except SimError as exc:
            reasons.append(f"not executable: {exc}")
    if reasons:
        txn.rollback()
        return GateResult(False, reasons, [], [])
    delta = txn.commit()
    if guard.enabled():
        inv = [match_pattern(model, p, params=c.args) for c in cands for p in table[c.option_id].invariants]
        guard.check_commit(model, inv)
    events: list = []
    commands = execute_sync(delta, sys, events)
    return GateResult(True, [], commands, events)


# -- coupled engine ------------------------------------------------------------


def coupled_step(state: EngineState, model: ReflectionModel, events: Sequence, sys: SimSystem, tick: int) -> DecisionRecord:
    am = state.adaptation_model
    fast = [c for c in am.conditions if c.lane == "fast"]
    if state.full_fast_due:
        results = evaluate_full(model, fast, tick)
        mode = "full"
        state.full_fast_due = False
    else:
        results = evaluate_incremental(model, fast, events, tick)
        mode = "incremental"
    annotate_and_publish(model, results)
    _trace_results(state, tick, "fast", mode, results)

    violated = [r for r in results if r.violated]
    rec = DecisionRecord(
        tick,
        "coupled",
        consumed_event_ids=[e.event_id for e in events],
        result_ids=[r.result_id for r in violated],
        condition_ids=sorted({r.condition_id for r in violated}),
        utility_before=_utility(model, am),
    )
    rec.results = results
    table = am.option_table
    adapted: set[str] = set()
    for r in violated:
        if r.anchor_element_id in adapted:
            continue
        for rule in am.rules_for(r.condition_id):
            fired = False
            for action in rule.actions:
                opt = table[action.option_id]
                args = {action.option_id: dict(action.args)} if action.args else None
                cands = applicable_options(model, [opt], Context(results=(r,)), args)
                if opt.pre.anchor is None:
                    cands = [c for c in cands if r.anchor_element_id in c.bindings.values()]
                if not cands:
                    rec.gate_outcome.append(f"{rule.rule_id}/{opt.option_id}: not applicable at {r.anchor_element_id}")
                    continue
                cand = cands[0]
                try:
                    gate = gated_apply(model, sys, [cand], am)
                except ChangeError as exc:
                    rec.gate_outcome.append(f"{rule.rule_id}/{cand}: {exc}")
                    continue
                if gate.passed:
                    fired = True
                    rec.chosen.append(cand)
                    rec.executed_commands += gate.commands
                    rec.gate_outcome.append(f"{rule.rule_id}/{cand}: pass")
                    for ev in gate.events:
                        state.trace(tick, "event", ev.to_dict())
                    state.trace(tick, "adaptation", {"engine": "coupled", "rule": rule.rule_id, "candidate": cand.to_dict(), "commands": [command_to_dict(c) for c in gate.commands]})
                else:
                    rec.gate_outcome.append(f"{rule.rule_id}/{cand}: fail: {'; '.join(gate.reasons)}")
            if fired:
                adapted.add(r.anchor_element_id)
                break
    rec.utility_after = _utility(model, am)
    if rec.adapted:
        state.record(rec)
    return rec


# -- decoupled engine ----------------------------------------------------------


def _slow_conditions(state: EngineState):
    am = state.adaptation_model
    if state.mode == "decoupled":
        return list(am.conditions)
    return [c for c in am.conditions if c.lane == "slow"]


def analyze(state: EngineState, model: ReflectionModel, events: Sequence, tick: int) -> list[EvaluationResult]:
    """Slow-lane analysis: incremental over the events since the last run, full every F ticks."""
    pending = state.pending_events + [e for e in events if e not in state.pending_events]
    state.pending_events = []
    conds = _slow_conditions(state)
    sweep = state.last_sweep is None or tick - state.last_sweep >= state.config.full_sweep_period
    if sweep:
        results = evaluate_full(model, conds, tick)
        state.last_sweep = tick
    else:
        results = evaluate_incremental(model, conds, pending, tick)
    annotate_and_publish(model, results)
    _trace_results(state, tick, "slow", "full" if sweep else "incremental", results)
    state.last_consumed = pending
    return results


@dataclass
class PlanResult:
    candidates: tuple[Candidate, ...]
    predicted_utility: float
    current_utility: float
    score: float
    exhausted: bool = False
    explored: int = 0


def _path_key(path: Sequence[Candidate]) -> tuple:
    return tuple(c.sort_key() for c in path)


def plan_score(util: float, path: Sequence[Candidate], table, cost_weight: float) -> float:
    return util - cost_weight * math.fsum(table[c.option_id].cost for c in path)


def plan(
    state: EngineState,
    model: ReflectionModel,
    results: Sequence[EvaluationResult],
    config: PlannerConfig | None = None,
    events: Sequence = (),
) -> PlanResult:
    """Beam-bounded best-first search over prescriptive variants of ``model``.

    Each search state is a path of candidates applied with do/undo inside
    one transaction that is always rolled back, so the model is left as it
    was. Paths failing the option gate are dropped; paths violating a goal
    are expanded but never selected. The empty plan wins unless some path
    scores strictly higher than the current utility.
    """
    cfg = config or state.config
    am = state.adaptation_model
    table = am.option_table
    with guard.pure(model, "plan"):
        current = _utility(model, am)
        violated = [r for r in results if r.violated]
        witnesses = []
        for g in am.goals:
            ok, wit = check_goal(model, g)
            if not ok:
                witnesses += [nid for b in wit for nid in b.values()]
        if not violated and not witnesses:
            return PlanResult((), current, current, current)
        context = Context(events=tuple(events), results=tuple(violated), extra=tuple(witnesses))
        eligible = am.planner_options()
        best_score, best_path, best_util = current, (), current
        frontier: list[tuple[Candidate, ...]] = [()]
        explored = 0
        exhausted = False
        saved_mode = model.mode
        model.mode = "prescriptive"
        txn = model.begin_transaction()
        try:
            for _depth in range(cfg.max_depth):
                children: list[tuple[float, tuple[Candidate, ...]]] = []
                for path in frontier:
                    root = txn.savepoint()
                    for cand in path:
                        apply_option(model, cand, table, txn)
                    succ = applicable_options(model, eligible, context)

                    def order(c: Candidate) -> tuple:
                        cost, benefit = estimate(c, table, am.preferences)
                        return (-(benefit - cfg.cost_weight * cost), c.sort_key())

                    succ.sort(key=order)
                    for cand in succ:
                        if explored >= cfg.max_expansions:
                            exhausted = True
                            break
                        explored += 1
                        mark = txn.savepoint()
                        try:
                            apply_option(model, cand, table, txn)
                        except (ChangeError, ModelError):
                            continue
                        if not verify_option(model, cand, txn, table).passed:
                            txn.rollback_to(mark)
                            continue
                        new_path = path + (cand,)
                        util = _utility(model, am)
                        score = plan_score(util, new_path, table, cfg.cost_weight)
                        goals_ok = all(check_goal(model, g)[0] for g in am.goals)
                        if goals_ok and (
                            score > best_score
                            or (score == best_score and best_path and _path_key(new_path) < _path_key(best_path))
                        ):
                            best_score, best_path, best_util = score, new_path, util
                        children.append((score, new_path))
                        txn.rollback_to(mark)
                    txn.rollback_to(root)
                    if exhausted:
                        break
                if exhausted or not children:
                    break
                children.sort(key=lambda sp: (-sp[0], _path_key(sp[1])))
                if cfg.beam_width is not None:
                    children = children[: cfg.beam_width]
                frontier = [p for _, p in children]
        finally:
            txn.rollback()
            model.mode = saved_mode
        return PlanResult(best_path, best_util, current, best_score, exhausted, explored)


def execute_plan(state: EngineState, model: ReflectionModel, result: PlanResult, sys: SimSystem, tick: int) -> DecisionRecord:
    am = state.adaptation_model
    rec = DecisionRecord(tick, "decoupled", utility_before=_utility(model, am), predicted_utility=result.predicted_utility)
    rec.utility_after = rec.utility_before
    if not result.candidates:
        return rec
    if result.exhausted:
        rec.note = "search budget exhausted; best-so-far plan"
    try:
        gate = gated_apply(model, sys, result.candidates, am)
    except ChangeError as exc:
        rec.gate_outcome.append(f"aborted: stale plan: {exc}")
        return rec
    if gate.passed:
        rec.chosen = list(result.candidates)
        rec.executed_commands = gate.commands
        rec.gate_outcome.append("pass")
        for ev in gate.events:
            state.trace(tick, "event", ev.to_dict())
        state.trace(tick, "adaptation", {"engine": "decoupled", "plan": [c.to_dict() for c in result.candidates], "commands": [command_to_dict(c) for c in gate.commands]})
    else:
        rec.gate_outcome.append("fail: " + "; ".join(gate.reasons))
    rec.utility_after = _utility(model, am)
    return rec


def decoupled_step(state: EngineState, model: ReflectionModel, events: Sequence, sys: SimSystem, tick: int) -> DecisionRecord:
    results = analyze(state, model, events, tick)
    result = plan(state, model, results, events=state.last_consumed)
    rec = execute_plan(state, model, result, sys, tick)
    violated = [r for r in results if r.violated]
    rec.results = results
    rec.consumed_event_ids = [e.event_id for e in state.last_consumed]
    rec.result_ids = [r.result_id for r in violated]
    rec.condition_ids = sorted({r.condition_id for r in violated})
    if rec.adapted:
        state.record(rec)
    return rec


# -- scheduling, flexibility, history ------------------------------------------


def schedule_tick(tick_no: int, config: PlannerConfig, escalated: bool = False) -> frozenset[str]:
    engines = {"coupled"}
    if tick_no % config.slow_lane_period == 0 or escalated:
        engines.add("decoupled")
    return frozenset(engines)


def hot_swap(state: EngineState, new_model: AdaptationModel) -> str:
    """Stage ``new_model``; it becomes active at the next tick boundary."""
    from .dsl.checker import static_check

    errors = [d for d in static_check(new_model) if d.severity == "error"]
    if errors:
        raise InvalidModelError(errors)
    with state._lock:
        state.pending_swap = new_model
    return "staged"


def apply_pending_swap(state: EngineState) -> bool:
    with state._lock:
        new = state.pending_swap
        state.pending_swap = None
    if new is None:
        return False
    state.adaptation_model = new
    state.full_fast_due = True
    state.last_sweep = None
    return True


def history_query(
    history: Iterable[DecisionRecord],
    ticks: tuple[int, int] | None = None,
    engine: str | None = None,
    condition_id: str | None = None,
) -> list[DecisionRecord]:
    out = []
    for rec in history:
        if ticks is not None and not ticks[0] <= rec.tick <= ticks[1]:
            continue
        if engine is not None and rec.engine != engine:
            continue
        if condition_id is not None and condition_id not in rec.condition_ids:
            continue
        out.append(rec)
    return sorted(out, key=lambda r: r.tick)


def escalated(results: Sequence[EvaluationResult], config: PlannerConfig) -> bool:
    """True when a violated result is critical enough to run the slow lane now."""
    return any(r.violated and r.priority >= config.critical_priority for r in results)


class FeedbackLoop:
    """Drives one simulated system and its reflection model tick by tick.

    Per tick: activate a staged swap, advance the system, sync the model,
    run the coupled engine, run the decoupled engine when scheduled, and
    finally stage any swap requested for this tick.
    """

    def __init__(
        self,
        sys: SimSystem,
        model: ReflectionModel,
        state: EngineState,
        schedule,
        swaps: dict[int, AdaptationModel] | None = None,
    ):
        self.sys = sys
        self.model = model
        self.state = state
        self.schedule = schedule
        self.swaps = dict(swaps or {})

    def step(self) -> int:
        from .system import tick as sim_tick

        state = self.state
        t = self.sys.clock + 1
        if apply_pending_swap(state):
            state.trace(t, "swap", {"action": "applied", "model": state.adaptation_model.name})
        sim_tick(self.sys, self.schedule)
        events = monitor_sync(self.sys, self.model)
        for ev in events:
            state.trace(t, "event", ev.to_dict())
        fast_results: list[EvaluationResult] = []
        if state.mode in ("coupled", "both"):
            fast_results = coupled_step(state, self.model, events, self.sys, t).results
        else:
            # no coupled engine: critical conditions escalate directly from events
            am = state.adaptation_model
            fast_results = evaluate_incremental(
                self.model, [c for c in am.conditions if c.priority >= state.config.critical_priority], events, t
            )
        if state.mode in ("decoupled", "both"):
            state.pending_events.extend(events)
            if "decoupled" in schedule_tick(t, state.config, escalated(fast_results, state.config)):
                decoupled_step(state, self.model, [], self.sys, t)
        new = self.swaps.get(t)
        if new is not None:
            hot_swap(state, new)
            state.trace(t, "swap", {"action": "staged", "model": new.name})
        self.model.clear_annotations()
        return t

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.step()
