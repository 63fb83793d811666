"""Bind parsed ``.adm`` files to a metamodel and build an :class:`AdaptationModel`.

Global parameters are substituted by value at their use sites; option
parameters stay symbolic until a candidate supplies actual values.
"""

from __future__ import annotations

from typing import Any, Mapping, Sequence

from ..bundle import AdaptationModel, CoupledRule, ParamDecl, RuleAction
from ..change import AddT, AdaptationOption, ChangeError, ConnectT, DisconnectT, FormalParam, RemoveT, SetT
from ..evaluation import EvaluationCondition, LANES, Trigger
from ..expr import Attr, Cmp, Lit, Param, Ref
from ..model import SCALAR_KINDS, AttrDecl, Metamodel
from ..objectives import GoalSpec, ObjectiveError, QualityDimension
from ..pattern import Pattern, PatternEdge, PatternNode
from ..system import EVENT_KINDS
from .diagnostics import AdmError, Diagnostic, Span
from .parser import (
    CmpAst,
    ConditionAst,
    FileAst,
    GoalAst,
    Name,
    OptionAst,
    ParamAst,
    PatternAst,
    PreferencesAst,
    QualityAst,
    RuleAst,
)


def literal_kind(value: Any) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    return "string"


def kind_accepts(kind: str, value: Any) -> bool:
    return AttrDecl(kind).kind_ok(value) or (kind == "float" and literal_kind(value) == "int")


def coerce(kind: str, value: Any) -> Any:
    return float(value) if kind == "float" and literal_kind(value) == "int" else value


def _family(kind: str | None) -> str | None:
    if kind in ("int", "float"):
        return "number"
    if kind in ("string", "id"):
        return "string"
    return kind


class _Resolver:
    def __init__(self, metamodel: Metamodel, overrides: Mapping[str, Any]):
        self.mm = metamodel
        self.overrides = dict(overrides)
        self.errors: list[Diagnostic] = []
        self.params: dict[str, ParamDecl] = {}
        self.spans: dict[str, Span] = {}

    def error(self, code: str, message: str, span: Span) -> None:
        self.errors.append(Diagnostic("error", code, message, span))

    # -- expressions

    def operand(self, raw, scope: Mapping[str, str], formals: Mapping[str, str], span: Span, quality_type: str | None = None):
        """Resolve one operand; returns (operand, kind or None)."""
        if isinstance(raw, Lit):
            return raw, literal_kind(raw.value)
        if isinstance(raw, Attr):
            if raw.var not in scope:
                self.error("unknown-id", f"undeclared variable {raw.var!r}", span)
                return raw, None
            decl = self.mm.attr(scope[raw.var], raw.name)
            if decl is None:
                self.error("unknown-attribute", f"{scope[raw.var]} has no attribute {raw.name!r}", span)
                return raw, None
            return raw, decl.kind
        name = raw.ident
        if name in scope:
            return Ref(name), "id"
        if name in formals:
            return Param(name), formals[name]
        if name in self.params:
            p = self.params[name]
            return Lit(p.value), p.kind
        if quality_type is not None:
            decl = self.mm.attr(quality_type, name)
            if decl is None:
                self.error("unknown-attribute", f"{quality_type} has no attribute {name!r}", span)
                return Attr("", name), None
            return Attr("", name), decl.kind
        self.error("unknown-id", f"unknown name {name!r}", span)
        return Lit(None), None

    def comparison(self, c: CmpAst, scope, formals, quality_type=None) -> Cmp:
        left, lk = self.operand(c.left, scope, formals, c.span, quality_type)
        right, rk = self.operand(c.right, scope, formals, c.span, quality_type)
        lf, rf = _family(lk), _family(rk)
        if lf and rf:
            if lf != rf or (c.op not in ("=", "!=") and lf == "bool"):
                self.error("kind-mismatch", f"cannot compare {lk} {c.op} {rk}", c.span)
        return Cmp(c.op, left, right)

    def conjunction(self, terms: Sequence[CmpAst], scope, formals, quality_type=None) -> tuple[Cmp, ...]:
        return tuple(self.comparison(c, scope, formals, quality_type) for c in terms)

    def pattern(self, p: PatternAst, formals, outer: Mapping[str, str] | None = None, nac: bool = False) -> tuple[Pattern, dict[str, str]]:
        scope = dict(outer or {})
        nodes, anchor = [], None
        for ntype, var, anchored, span in p.nodes:
            if ntype not in self.mm.node_types:
                self.error("unknown-type", f"unknown node type {ntype!r}", span)
            if var in scope:
                self.error("duplicate-id", f"variable {var!r} declared twice", span)
            if var in formals:
                self.error("duplicate-id", f"variable {var!r} shadows a parameter", span)
            scope[var] = ntype
            nodes.append(PatternNode(var, ntype))
            if anchored:
                if nac:
                    self.error("syntax", "negative patterns cannot declare an anchor", span)
                elif anchor is not None:
                    self.error("syntax", "a pattern has at most one anchor", span)
                anchor = var
        edges = []
        for src, etype, tgt, span in p.edges:
            et = self.mm.edge_types.get(etype)
            if et is None:
                self.error("unknown-type", f"unknown edge type {etype!r}", span)
            for v, want in ((src, et.source if et else None), (tgt, et.target if et else None)):
                if v not in scope:
                    self.error("unknown-id", f"undeclared variable {v!r}", span)
                elif want is not None and scope[v] != want:
                    self.error("kind-mismatch", f"{etype} expects {want} at {v!r}, got {scope[v]}", span)
            edges.append(PatternEdge(src, etype, tgt))
        where = self.conjunction(p.where, scope, formals)
        negatives = tuple(self.pattern(n, formals, scope, nac=True)[0] for n in p.negatives)
        return Pattern(tuple(nodes), tuple(edges), where, anchor, negatives), scope

    # -- declarations

    def param(self, d: ParamAst) -> None:
        if d.kind not in SCALAR_KINDS:
            self.error("kind-mismatch", f"unknown kind {d.kind!r}", d.span)
            return
        value = self.overrides.pop(d.name, d.value)
        if not kind_accepts(d.kind, value):
            self.error("kind-mismatch", f"param {d.name}: {value!r} is not a {d.kind}", d.span)
            return
        self.params[d.name] = ParamDecl(d.name, d.kind, coerce(d.kind, value))

    def quality(self, d: QualityAst) -> QualityDimension | None:
        if d.node_type not in self.mm.node_types:
            self.error("unknown-type", f"unknown node type {d.node_type!r}", d.span)
            return None
        if d.attribute is not None:
            decl = self.mm.attr(d.node_type, d.attribute)
            if decl is None:
                self.error("unknown-attribute", f"{d.node_type} has no attribute {d.attribute!r}", d.span)
            elif decl.kind not in ("int", "float"):
                self.error("kind-mismatch", f"{d.node_type}.{d.attribute} is not numeric", d.span)
        where = self.conjunction(d.where, {}, {}, quality_type=d.node_type)
        try:
            return QualityDimension(d.name, d.aggregator, d.node_type, d.attribute, where, d.direction, d.lo, d.hi)
        except ObjectiveError as exc:
            self.error("invalid", str(exc), d.span)
            return None

    def option(self, d: OptionAst, option_ids: set[str], quality_ids: set[str]) -> AdaptationOption | None:
        formals: dict[str, str] = {}
        params = []
        for name, kind, default, span in d.params:
            if kind not in SCALAR_KINDS:
                self.error("kind-mismatch", f"unknown kind {kind!r}", span)
                continue
            if default is not None and not kind_accepts(kind, default):
                self.error("kind-mismatch", f"default {default!r} is not a {kind}", span)
            formals[name] = kind
            params.append(FormalParam(name, kind, None if default is None else coerce(kind, default)))
        pre, scope = self.pattern(d.pre, formals)
        effects = []
        for t, span in d.effects:
            effects.append(self.effect(t, scope, formals, span))
        for sub, span in d.compose:
            if sub not in option_ids:
                self.error("unknown-id", f"unknown option {sub!r}", span)
        post = self.conjunction(d.post, scope, formals)
        invariants = tuple(self.pattern(p, formals)[0] for p in d.invariants)
        benefit = {}
        for q, v, span in d.benefit:
            if q not in quality_ids:
                self.error("unknown-id", f"unknown quality {q!r}", span)
            benefit[q] = v
        try:
            return AdaptationOption(
                d.name, pre, tuple(params), tuple(effects), tuple(s for s, _ in d.compose), post, invariants, d.cost, benefit
            )
        except ChangeError as exc:
            self.error("invalid", str(exc), d.span)
            return None

    def _var(self, var: str, scope, span: Span) -> str | None:
        if var not in scope:
            self.error("unknown-id", f"undeclared variable {var!r}", span)
            return None
        return scope[var]

    def _assign(self, vtype: str | None, attr: str, raw, scope, formals, span: Span):
        value, vk = self.operand(raw, scope, formals, span)
        if vtype is None:
            return value
        decl = self.mm.attr(vtype, attr)
        if decl is None:
            self.error("unknown-attribute", f"{vtype} has no attribute {attr!r}", span)
        elif vk is not None and not (vk == decl.kind or (decl.kind == "float" and vk == "int")):
            self.error("kind-mismatch", f"{vtype}.{attr} is {decl.kind}, got {vk}", span)
        elif isinstance(value, Lit):
            value = Lit(coerce(decl.kind, value.value))
        return value

    def effect(self, t, scope: dict[str, str], formals, span: Span):
        if isinstance(t, SetT):
            vtype = self._var(t.var, scope, span)
            return SetT(t.var, t.attr, self._assign(vtype, t.attr, t.value, scope, formals, span))
        if isinstance(t, AddT):
            if t.type not in self.mm.node_types:
                self.error("unknown-type", f"unknown node type {t.type!r}", span)
            src_type = self._var(t.clone, scope, span)
            if src_type is not None and src_type != t.type:
                self.error("kind-mismatch", f"cannot clone a {src_type} as {t.type}", span)
            if t.var in scope:
                self.error("duplicate-id", f"variable {t.var!r} already bound", span)
            attrs = tuple((n, self._assign(t.type, n, raw, scope, formals, span)) for n, raw in t.attrs)
            scope[t.var] = t.type
            return AddT(t.var, t.type, t.clone, attrs)
        if isinstance(t, RemoveT):
            self._var(t.var, scope, span)
            return t
        et = self.mm.edge_types.get(t.type)
        if et is None:
            self.error("unknown-type", f"unknown edge type {t.type!r}", span)
        for v, want in ((t.src, et.source if et else None), (t.tgt, et.target if et else None)):
            have = self._var(v, scope, span)
            if have is not None and want is not None and have != want:
                self.error("kind-mismatch", f"{t.type} expects {want} at {v!r}, got {have}", span)
        return t

    def rule(self, d: RuleAst, conditions: set[str], options: Mapping[str, OptionAst]) -> CoupledRule:
        if d.condition not in conditions:
            self.error("unknown-id", f"unknown condition {d.condition!r}", d.condition_span)
        actions = []
        for opt_id, raw_args, span in d.actions:
            opt = options.get(opt_id)
            if opt is None:
                self.error("unknown-id", f"unknown option {opt_id!r}", span)
                actions.append(RuleAction(opt_id))
                continue
            if len(raw_args) > len(opt.params):
                self.error("invalid", f"{opt_id} takes {len(opt.params)} arguments, got {len(raw_args)}", span)
            args = []
            for (pname, kind, default, _), raw in zip(opt.params, raw_args):
                value, vk = self.operand(raw, {}, {}, span)
                if not isinstance(value, Lit):
                    continue
                if vk is not None and not kind_accepts(kind, value.value):
                    self.error("kind-mismatch", f"{opt_id}.{pname} is {kind}, got {vk}", span)
                args.append((pname, coerce(kind, value.value)))
            for pname, _, default, _ in opt.params[len(raw_args):]:
                if default is None:
                    self.error("invalid", f"{opt_id}: missing argument {pname!r}", span)
            actions.append(RuleAction(opt_id, tuple(sorted(args))))
        return CoupledRule(d.name, d.condition, tuple(actions))

    def condition(self, d: ConditionAst) -> EvaluationCondition | None:
        pattern, _ = self.pattern(d.pattern, {})
        triggers = []
        for kind, attr, span in d.triggers:
            if kind not in EVENT_KINDS:
                self.error("unknown-id", f"unknown event kind {kind!r}", span)
            if attr is not None and not any(self.mm.attr(t, attr) for t in pattern.types()):
                self.error("unknown-attribute", f"no pattern type has attribute {attr!r}", span)
            triggers.append(Trigger(kind, attr))
        if d.lane not in LANES:
            self.error("invalid", f"unknown lane {d.lane!r}", d.span)
            return None
        return EvaluationCondition(d.name, d.priority, pattern, d.lane, tuple(triggers))

    # -- driver

    def run(self, files: Sequence[FileAst]) -> AdaptationModel:
        decls = [(f, d) for f in files for d in f.decls]
        seen: dict[str, Span] = {}
        for _, d in decls:
            if isinstance(d, PreferencesAst):
                continue
            if d.name in seen:
                self.error("duplicate-id", f"{d.name!r} already declared at {seen[d.name]}", d.span)
            else:
                seen[d.name] = d.span

        def of(cls):
            return [d for _, d in decls if isinstance(d, cls)]

        for d in of(ParamAst):
            self.param(d)
            self.spans[f"param:{d.name}"] = d.span
        for name in self.overrides:
            self.error("unknown-id", f"override for undeclared param {name!r}", files[0].span if files else Span("<cli>", 1, 1))

        qualities = []
        for d in of(QualityAst):
            q = self.quality(d)
            self.spans[f"quality:{d.name}"] = d.span
            if q is not None:
                qualities.append(q)
        quality_ids = {d.name for d in of(QualityAst)}

        prefs: dict[str, float] = {}
        for d in of(PreferencesAst):
            self.spans.setdefault("preferences", d.span)
            for q, w, span in d.weights:
                if q not in quality_ids:
                    self.error("unknown-id", f"weight for unknown quality {q!r}", span)
                if q in prefs:
                    self.error("duplicate-id", f"weight for {q!r} given twice", span)
                prefs[q] = w

        goals = []
        for d in of(GoalAst):
            pattern, _ = self.pattern(d.pattern, {})
            goals.append(GoalSpec(d.name, d.kind, pattern))
            self.spans[f"goal:{d.name}"] = d.span

        conditions = []
        for d in of(ConditionAst):
            self.spans[f"condition:{d.name}"] = d.span
            c = self.condition(d)
            if c is not None:
                conditions.append(c)

        option_asts = {d.name: d for d in of(OptionAst)}
        options = []
        for d in option_asts.values():
            self.spans[f"option:{d.name}"] = d.span
            o = self.option(d, set(option_asts), quality_ids)
            if o is not None:
                options.append(o)

        rules = []
        for d in of(RuleAst):
            self.spans[f"rule:{d.name}"] = d.span
            rules.append(self.rule(d, {d.name for d in of(ConditionAst)}, option_asts))

        return AdaptationModel(
            files[0].name if files else "",
            tuple(self.params.values()),
            tuple(qualities),
            prefs,
            tuple(goals),
            tuple(conditions),
            tuple(options),
            tuple(rules),
            metamodel=self.mm,
            spans=self.spans,
        )


def resolve(files: FileAst | Sequence[FileAst], metamodel: Metamodel, overrides: Mapping[str, Any] | None = None) -> AdaptationModel:
    """Resolve parsed files into a bundle; raise :class:`AdmError` with every problem found."""
    if isinstance(files, FileAst):
        files = [files]
    r = _Resolver(metamodel, overrides or {})
    bundle = r.run(files)
    if r.errors:
        raise AdmError(r.errors)
    return bundle
