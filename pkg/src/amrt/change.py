"""Adaptation options: applicability, reversible application on a reflection
model, verification (the consistency gate), composites, and cost/benefit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Union

from .expr import Cmp, Operand, all_hold, operand_value
from .model import (
    AddEdge,
    AddNode,
    ModelError,
    ReflectionModel,
    RemoveEdge,
    RemoveNode,
    SetAttr,
    StaleOpError,
    Transaction,
    edge_id,
    validate_conformance,
)
from .pattern import Pattern, binding_key, match_pattern, search


class ChangeError(Exception):
    pass


class PreconditionVanished(ChangeError):
    pass


class CycleDetected(ChangeError):
    pass


# -- effect templates ----------------------------------------------------------


@dataclass(frozen=True)
class SetT:
    var: str
    attr: str
    value: Operand

    def __str__(self) -> str:
        return f"set {self.var}.{self.attr} = {self.value}"


@dataclass(frozen=True)
class AddT:
    """Create ``var`` as a copy of the node bound to ``clone``; its id is ``<base>#r<k>``."""

    var: str
    type: str
    clone: str
    attrs: tuple[tuple[str, Operand], ...] = ()

    def __str__(self) -> str:
        body = ""
        if self.attrs:
            body = " { " + ", ".join(f"{n} = {v}" for n, v in self.attrs) + " }"
        return f"add {self.var} : {self.type} clone {self.clone}{body}"


@dataclass(frozen=True)
class RemoveT:
    var: str
    cascade: bool = True  # also remove incident edges

    def __str__(self) -> str:
        return f"remove {self.var}"


@dataclass(frozen=True)
class ConnectT:
    src: str
    type: str
    tgt: str

    def __str__(self) -> str:
        return f"connect {self.src} {self.type} {self.tgt}"


@dataclass(frozen=True)
class DisconnectT:
    src: str
    type: str
    tgt: str

    def __str__(self) -> str:
        return f"disconnect {self.src} {self.type} {self.tgt}"


EffectTemplate = Union[SetT, AddT, RemoveT, ConnectT, DisconnectT]


@dataclass(frozen=True)
class FormalParam:
    name: str
    kind: str
    default: Any = None  # None: no default, the value must come from a rule


@dataclass(frozen=True)
class AdaptationOption:
    option_id: str
    pre: Pattern
    params: tuple[FormalParam, ...] = ()
    effect: tuple[EffectTemplate, ...] = ()
    compose: tuple[str, ...] = ()
    post: tuple[Cmp, ...] = ()
    invariants: tuple[Pattern, ...] = ()
    cost: float = 0.0
    benefit: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.cost < 0:
            raise ChangeError(f"{self.option_id}: negative cost")
        if self.effect and self.compose:
            raise ChangeError(f"{self.option_id}: an option either has effects or composes others")

    @property
    def kind(self) -> str:
        return "composite" if self.compose else "primitive"

    def default_params(self) -> dict[str, Any] | None:
        """Default actual parameters, or None if some parameter has no default."""
        if any(p.default is None for p in self.params):
            return None
        return {p.name: p.default for p in self.params}

    def writes(self) -> set[tuple[str, str]]:
        """(variable, attribute) pairs written by the option's own effects."""
        out = set()
        for t in self.effect:
            if isinstance(t, SetT):
                out.add((t.var, t.attr))
            elif isinstance(t, AddT):
                out |= {(t.var, n) for n, _ in t.attrs}
        return out


@dataclass(frozen=True, order=True)
class Candidate:
    option_id: str
    binding: tuple[tuple[str, str], ...]
    params: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def make(cls, option_id: str, binding: Mapping[str, str], params: Mapping[str, Any] | None = None) -> "Candidate":
        return cls(option_id, tuple(sorted(binding.items())), tuple(sorted((params or {}).items())))

    @property
    def bindings(self) -> dict[str, str]:
        return dict(self.binding)

    @property
    def args(self) -> dict[str, Any]:
        return dict(self.params)

    def sort_key(self) -> tuple:
        return (self.option_id, binding_key(self.bindings))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"option": self.option_id, "binding": dict(self.binding)}
        if self.params:
            d["params"] = dict(self.params)
        return d

    def __str__(self) -> str:
        inner = ", ".join(f"{k}->{v}" for k, v in self.binding)
        return f"{self.option_id}({inner})"


@dataclass(frozen=True)
class Context:
    """Locations the option search is anchored at: events and evaluation results."""

    events: tuple = ()
    results: tuple = ()
    extra: tuple[str, ...] = ()

    def anchors(self, model: ReflectionModel) -> list[str]:
        out: list[str] = []

        def add(x):
            if x is not None and x in model.nodes and x not in out:
                out.append(x)

        for ev in self.events:
            if ev.element_id in model.nodes:
                add(ev.element_id)
            elif ev.element_id in model.edges:
                e = model.edges[ev.element_id]
                add(e.src)
                add(e.tgt)
        for r in self.results:
            if r.violated:
                add(r.anchor_element_id)
        for x in self.extra:
            add(x)
        return out


@dataclass(frozen=True)
class VerifyOutcome:
    passed: bool
    reasons: tuple[str, ...] = ()


def _table(options) -> dict[str, AdaptationOption]:
    if isinstance(options, Mapping):
        return dict(options)
    return {o.option_id: o for o in options}


def applicable_options(
    model: ReflectionModel,
    options: Iterable[AdaptationOption],
    context: Context | None = None,
    args: Mapping[str, Mapping[str, Any]] | None = None,
) -> list[Candidate]:
    """Every (option, binding) whose precondition holds.

    Preconditions with an anchor variable are matched at the context
    locations only; ``context=None`` matches them everywhere. ``args`` maps
    option ids to actual parameters; options whose parameters have neither
    an argument nor a default are skipped.
    """
    found: set[Candidate] = set()
    anchors = context.anchors(model) if context is not None else None
    for opt in options:
        actual = opt.default_params() or {}
        if args and opt.option_id in args:
            actual = {**actual, **args[opt.option_id]}
        if any(p.name not in actual for p in opt.params):
            continue
        if opt.pre.anchor is not None and anchors is not None:
            bindings = [b for a in anchors for b in search(model, opt.pre, {opt.pre.anchor: a}, actual)]
        else:
            bindings = search(model, opt.pre, None, actual)
        for b in bindings:
            found.add(Candidate.make(opt.option_id, b, actual))
    return sorted(found, key=Candidate.sort_key)


def _value(side: Operand, binding: Mapping[str, str], model: ReflectionModel, params: Mapping[str, Any]) -> Any:
    v = operand_value(side, binding, model.nodes, params)
    if v is not None and not isinstance(v, (bool, int, float, str)):
        raise StaleOpError(f"cannot evaluate {side}")
    return v


def fresh_id(model: ReflectionModel, source_id: str) -> str:
    base = source_id.split("#", 1)[0]
    k = 1
    while model.has(f"{base}#r{k}"):
        k += 1
    return f"{base}#r{k}"


def _apply_effects(
    model: ReflectionModel,
    txn: Transaction,
    opt: AdaptationOption,
    binding: dict[str, str],
    params: Mapping[str, Any],
    table: Mapping[str, AdaptationOption],
    seen: tuple[str, ...] = (),
) -> dict[str, str]:
    if opt.option_id in seen:
        raise CycleDetected(" -> ".join(seen + (opt.option_id,)))
    binding = dict(binding)
    for sub_id in opt.compose:
        sub = table[sub_id]
        sub_params = {**(sub.default_params() or {}), **{k: v for k, v in params.items() if k in {p.name for p in sub.params}}}
        fixed = {v: binding[v] for v in sub.pre.variables if v in binding}
        matches = search(model, sub.pre, fixed, sub_params)
        if not matches:
            raise PreconditionVanished(f"{opt.option_id}: sub-option {sub_id} not applicable")
        sub_binding = _apply_effects(model, txn, sub, matches[0], sub_params, table, seen + (opt.option_id,))
        for k, v in sub_binding.items():
            binding.setdefault(k, v)
    for t in opt.effect:
        if isinstance(t, SetT):
            txn.apply_edit(SetAttr(binding[t.var], t.attr, new=_value(t.value, binding, model, params)))
        elif isinstance(t, AddT):
            src = model.nodes.get(binding[t.clone])
            if src is None:
                raise StaleOpError(f"clone source {binding[t.clone]!r} missing")
            new_id = fresh_id(model, binding[t.clone])
            declared = model.metamodel.node_types.get(t.type, {})
            attrs = {n: v for n, v in src.attrs.items() if n in declared}
            for name, side in t.attrs:
                attrs[name] = _value(side, binding, model, params)
            txn.apply_edit(AddNode(new_id, t.type, attrs))
            binding[t.var] = new_id
        elif isinstance(t, RemoveT):
            nid = binding[t.var]
            if t.cascade:
                for eid in model.incident_edges(nid):
                    txn.apply_edit(RemoveEdge(eid))
            txn.apply_edit(RemoveNode(nid))
        elif isinstance(t, ConnectT):
            s, g = binding[t.src], binding[t.tgt]
            txn.apply_edit(AddEdge(edge_id(s, t.type, g), t.type, s, g))
        elif isinstance(t, DisconnectT):
            eid = model.find_edge(binding[t.src], t.type, binding[t.tgt])
            if eid is None:
                raise StaleOpError(f"no {t.type} edge {binding[t.src]} -> {binding[t.tgt]}")
            txn.apply_edit(RemoveEdge(eid))
        else:
            raise TypeError(f"unknown effect template {t!r}")
    return binding


def apply_option(
    model: ReflectionModel,
    cand: Candidate,
    options,
    txn: Transaction | None = None,
) -> Transaction:
    """Apply ``cand`` inside ``txn`` (a new transaction if None) and return the open transaction.

    The precondition is re-checked first. If an edit fails, everything this
    call applied is undone before the error propagates.
    """
    table = _table(options)
    opt = table[cand.option_id]
    binding, params = cand.bindings, cand.args
    if binding not in search(model, opt.pre, binding, params):
        raise PreconditionVanished(f"{cand} no longer applicable")
    own = txn is None
    if own:
        txn = model.begin_transaction()
    mark = txn.savepoint()
    try:
        full = _apply_effects(model, txn, opt, binding, params, table)
    except (ModelError, ChangeError, KeyError):
        if own:
            txn.rollback()
        else:
            txn.rollback_to(mark)
        raise
    txn.applications.append((cand, full))
    return txn


def _invariants(opt: AdaptationOption, table) -> list[Pattern]:
    out = list(opt.invariants)
    for sub in opt.compose:
        out += _invariants(table[sub], table)
    return out


def verify_option(model: ReflectionModel, cand: Candidate, txn: Transaction, options) -> VerifyOutcome:
    table = _table(options)
    opt = table[cand.option_id]
    full = next((b for c, b in reversed(txn.applications) if c == cand), None)
    if full is None:
        return VerifyOutcome(False, ("candidate was not applied in this transaction",))
    reasons = []
    if not all_hold(opt.post, full, model.nodes, cand.args):
        reasons.append("postcondition")
    for i, inv in enumerate(_invariants(opt, table)):
        if match_pattern(model, inv, params=cand.args):
            reasons.append(f"invariant {i}")
    problems = validate_conformance(model)
    if problems:
        reasons.append("conformance: " + "; ".join(str(p) for p in problems))
    return VerifyOutcome(not reasons, tuple(reasons))


def expand_composite(option: AdaptationOption, options) -> list[str]:
    table = _table(options)
    out: list[str] = []

    def walk(opt: AdaptationOption, path: tuple[str, ...]) -> None:
        if opt.option_id in path:
            raise CycleDetected(" -> ".join(path + (opt.option_id,)))
        if not opt.compose:
            out.append(opt.option_id)
            return
        for sub in opt.compose:
            if sub not in table:
                raise ChangeError(f"unknown sub-option {sub!r}")
            walk(table[sub], path + (opt.option_id,))

    walk(option, ())
    return out


def estimate(cand: Candidate, options, prefs: Mapping[str, float]) -> tuple[float, float]:
    """(cost, preference-weighted benefit) of the candidate's option."""
    opt = _table(options)[cand.option_id]
    return (opt.cost, math.fsum(prefs.get(q, 0.0) * d for q, d in opt.benefit.items()))
