"""Recursive-descent parser for ``.adm`` files.

The parser only builds syntax trees; names are bound by the resolver.
After a syntax error it skips ahead to the next declaration keyword, so
one run reports every independent error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Union

from ..change import AddT, ConnectT, DisconnectT, RemoveT, SetT
from ..expr import Attr, Lit
from .diagnostics import AdmError, Diagnostic, Span
from .lexer import Token, tokenize

DECL_KEYWORDS = ("param", "quality", "preferences", "goal", "condition", "option", "rule")
RESERVED = ("where", "not", "and", "true", "false")
_CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Name:
    """A bare identifier in an expression; the resolver decides what it is."""

    ident: str

    def __str__(self) -> str:
        return self.ident


RawOperand = Union[Lit, Attr, Name]


@dataclass(frozen=True)
class CmpAst:
    op: str
    left: RawOperand
    right: RawOperand
    span: Span


@dataclass
class PatternAst:
    nodes: list[tuple[str, str, bool, Span]] = field(default_factory=list)  # type, var, anchored
    edges: list[tuple[str, str, str, Span]] = field(default_factory=list)  # src, type, tgt
    where: list[CmpAst] = field(default_factory=list)
    negatives: list["PatternAst"] = field(default_factory=list)
    span: Span | None = None


@dataclass
class ParamAst:
    name: str
    kind: str
    value: Any
    span: Span


@dataclass
class QualityAst:
    name: str
    aggregator: str
    node_type: str
    attribute: str | None
    where: list[CmpAst]
    direction: str
    lo: float
    hi: float
    span: Span


@dataclass
class PreferencesAst:
    weights: list[tuple[str, float, Span]]
    span: Span


@dataclass
class GoalAst:
    name: str
    kind: str
    pattern: PatternAst
    span: Span


@dataclass
class ConditionAst:
    name: str
    priority: int
    lane: str
    triggers: list[tuple[str, str | None, Span]]
    pattern: PatternAst
    span: Span


@dataclass
class OptionAst:
    name: str
    params: list[tuple[str, str, Any, Span]]  # name, kind, default (None: none)
    pre: PatternAst
    effects: list[tuple[Any, Span]]
    compose: list[tuple[str, Span]]
    post: list[CmpAst]
    invariants: list[PatternAst]
    cost: float
    benefit: list[tuple[str, float, Span]]
    span: Span


@dataclass
class RuleAst:
    name: str
    condition: str
    actions: list[tuple[str, list[RawOperand], Span]]
    span: Span
    condition_span: Span


Decl = Union[ParamAst, QualityAst, PreferencesAst, GoalAst, ConditionAst, OptionAst, RuleAst]


@dataclass
class FileAst:
    name: str
    file: str
    decls: list[Decl]
    span: Span


class _Abort(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[Token], file: str):
        self.toks = tokens
        self.pos = 0
        self.file = file
        self.errors: list[Diagnostic] = []
        self.in_option = False

    # -- token helpers

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.peek()
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.peek().is_(text)

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.pos += 1
            return True
        return False

    def fail(self, expected: str) -> None:
        t = self.peek()
        if t.is_("effect") and not self.in_option:
            self.errors.append(
                Diagnostic("error", "side-effect", "effect blocks are only allowed inside option declarations", t.span)
            )
        else:
            found = "end of file" if t.kind == "eof" else repr(t.text)
            self.errors.append(Diagnostic("error", "syntax", f"expected {expected}, found {found}", t.span))
        raise _Abort

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(repr(text))
        return self.next()

    def ident(self, what: str = "identifier") -> Token:
        t = self.peek()
        if t.kind != "ident" or t.text in RESERVED:
            self.fail(what)
        return self.next()

    def number(self) -> float | int:
        neg = self.accept("-")
        t = self.peek()
        if t.kind != "num":
            self.fail("number")
        self.next()
        value: float | int = int(t.text) if t.text.isdigit() else float(t.text)
        return -value if neg else value

    def literal(self) -> Any:
        t = self.peek()
        if t.kind == "str":
            self.next()
            return json.loads(t.text)
        if t.is_("true") or t.is_("false"):
            self.next()
            return t.text == "true"
        if t.kind == "num" or t.is_("-"):
            return self.number()
        self.fail("literal")

    # -- top level

    def file_ast(self) -> FileAst:
        start = self.peek().span
        name = ""
        try:
            self.expect("adaptation")
            name = self.ident("model name").text
            self.expect(";")
        except _Abort:
            self.recover(0)
        decls: list[Decl] = []
        while self.peek().kind != "eof":
            t = self.peek()
            begin = self.pos
            try:
                if not any(t.is_(k) for k in DECL_KEYWORDS):
                    self.fail("declaration")
                decls.append(getattr(self, "decl_" + t.text)())
            except _Abort:
                self.in_option = False
                self.recover(begin)
        return FileAst(name, self.file, decls, start)

    def recover(self, begin: int) -> None:
        if self.pos == begin and not any(self.peek().is_(k) for k in DECL_KEYWORDS):
            self.next()
        while self.peek().kind != "eof" and not any(self.peek().is_(k) for k in DECL_KEYWORDS):
            self.next()

    # -- declarations

    def decl_param(self) -> ParamAst:
        span = self.next().span
        name = self.ident().text
        self.expect(":")
        kind = self.ident("kind").text
        self.expect("=")
        value = self.literal()
        self.expect(";")
        return ParamAst(name, kind, value, span)

    def decl_quality(self) -> QualityAst:
        span = self.next().span
        name = self.ident().text
        self.expect("{")
        self.expect("metric")
        agg = self.ident("aggregator").text
        self.expect("(")
        ntype = self.ident("node type").text
        attr = None
        if self.accept("."):
            attr = self.ident("attribute").text
        where: list[CmpAst] = []
        if self.accept("where"):
            where = self.conjunction()
        self.expect(")")
        self.expect(";")
        self.expect("direction")
        direction = self.ident("minimize or maximize").text
        self.expect(";")
        self.expect("bounds")
        self.expect("[")
        lo = self.number()
        self.expect(",")
        hi = self.number()
        self.expect("]")
        self.expect(";")
        self.expect("}")
        return QualityAst(name, agg, ntype, attr, where, direction, float(lo), float(hi), span)

    def weights(self) -> list[tuple[str, float, Span]]:
        self.expect("{")
        out = []
        while not self.at("}"):
            t = self.ident("quality name")
            self.expect("=")
            out.append((t.text, float(self.number()), t.span))
            self.expect(";")
        self.expect("}")
        return out

    def decl_preferences(self) -> PreferencesAst:
        span = self.next().span
        return PreferencesAst(self.weights(), span)

    def decl_goal(self) -> GoalAst:
        span = self.next().span
        name = self.ident().text
        self.expect("{")
        kind = self.ident("require or forbid").text
        if kind not in ("require", "forbid"):
            self.pos -= 1
            self.fail("'require' or 'forbid'")
        pattern = self.pattern(("}",))
        self.expect("}")
        return GoalAst(name, kind, pattern, span)

    def decl_condition(self) -> ConditionAst:
        span = self.next().span
        name = self.ident().text
        self.expect("priority")
        priority = self.number()
        if not isinstance(priority, int):
            self.fail("integer priority")
        self.expect("lane")
        lane = self.ident("lane").text
        triggers = []
        while self.at("on"):
            tspan = self.next().span
            self.expect("(")
            kind = self.ident("event kind").text
            while self.accept("-"):
                kind += "-" + self.ident("event kind").text
            attr = None
            if self.accept(","):
                attr = self.ident("attribute").text
            self.expect(")")
            triggers.append((kind, attr, tspan))
        self.expect("{")
        pattern = self.pattern(("}",))
        self.expect("}")
        return ConditionAst(name, int(priority), lane, triggers, pattern, span)

    def decl_option(self) -> OptionAst:
        span = self.next().span
        self.in_option = True
        name = self.ident().text
        self.expect("(")
        params = []
        while not self.at(")"):
            p = self.ident("parameter")
            self.expect(":")
            kind = self.ident("kind").text
            default = self.literal() if self.accept("=") else None
            params.append((p.text, kind, default, p.span))
            if not self.accept(","):
                break
        self.expect(")")
        self.expect("{")
        self.expect("pre")
        pre = self.pattern((";",))
        self.expect(";")
        effects: list = []
        compose: list = []
        if self.accept("effect"):
            while True:
                effects.append(self.edit())
                self.accept(",")
                if self.at(";"):
                    break
        elif self.accept("compose"):
            while True:
                t = self.ident("option name")
                compose.append((t.text, t.span))
                self.accept(",")
                if self.at(";"):
                    break
        else:
            self.fail("'effect' or 'compose'")
        self.expect(";")
        self.expect("post")
        post = self.conjunction()
        self.expect(";")
        invariants = []
        while self.accept("invariant"):
            invariants.append(self.pattern((";",)))
            self.expect(";")
        self.expect("cost")
        cost = float(self.number())
        self.expect(";")
        benefit = []
        if self.accept("benefit"):
            benefit = self.weights()
        self.expect("}")
        self.in_option = False
        return OptionAst(name, params, pre, effects, compose, post, invariants, cost, benefit, span)

    def decl_rule(self) -> RuleAst:
        span = self.next().span
        name = self.ident().text
        self.expect(":")
        self.expect("when")
        cond = self.ident("condition name")
        self.expect("do")
        actions = []
        while not self.at(";"):
            opt = self.ident("option name")
            args: list[RawOperand] = []
            if self.accept("("):
                while not self.at(")"):
                    if self.peek().kind == "ident" and self.peek().text not in RESERVED:
                        args.append(Name(self.next().text))
                    else:
                        args.append(Lit(self.literal()))
                    if not self.accept(","):
                        break
                self.expect(")")
            actions.append((opt.text, args, opt.span))
            self.accept(",")
        if not actions:
            self.fail("option name")
        self.expect(";")
        return RuleAst(name, cond.text, actions, span, cond.span)

    # -- patterns and expressions

    def pattern(self, stop: tuple[str, ...]) -> PatternAst:
        p = PatternAst(span=self.peek().span)
        while True:
            t = self.peek()
            if t.is_("not"):
                self.next()
                self.expect("{")
                p.negatives.append(self.pattern(("}",)))
                self.expect("}")
            elif t.is_("where"):
                self.next()
                p.where.extend(self.conjunction())
            elif t.kind == "ident" and t.text not in RESERVED and self.peek(1).is_("-"):
                src = self.next()
                self.expect("-")
                etype = self.ident("edge type").text
                self.expect("->")
                tgt = self.ident("variable").text
                p.edges.append((src.text, etype, tgt, src.span))
            elif t.kind == "ident" and t.text not in RESERVED:
                ntype = self.next()
                anchored = self.accept("@")
                var = self.ident("variable").text
                p.nodes.append((ntype.text, var, anchored, ntype.span))
            else:
                self.fail("pattern clause")
            self.accept(",")
            if any(self.at(s) for s in stop):
                return p

    def conjunction(self) -> list[CmpAst]:
        if self.at("true") and self.peek(1).text not in _CMP_OPS:
            self.next()
            return []
        out = [self.comparison()]
        while self.accept("and"):
            out.append(self.comparison())
        return out

    def comparison(self) -> CmpAst:
        span = self.peek().span
        left = self.operand()
        t = self.peek()
        if t.kind != "op" or t.text not in _CMP_OPS:
            self.fail("comparison operator")
        self.next()
        right = self.operand()
        return CmpAst(t.text, left, right, span)

    def operand(self) -> RawOperand:
        t = self.peek()
        if t.kind == "ident" and t.text not in RESERVED:
            self.next()
            if self.accept("."):
                return Attr(t.text, self.ident("attribute").text)
            return Name(t.text)
        return Lit(self.literal())

    def edit(self) -> tuple[Any, Span]:
        t = self.peek()
        span = t.span
        if self.accept("set"):
            var = self.ident("variable").text
            self.expect(".")
            attr = self.ident("attribute").text
            self.expect("=")
            return SetT(var, attr, self.operand()), span
        if self.accept("add"):
            var = self.ident("variable").text
            self.expect(":")
            ntype = self.ident("node type").text
            self.expect("clone")
            src = self.ident("variable").text
            attrs = []
            if self.accept("{"):
                while not self.at("}"):
                    a = self.ident("attribute").text
                    self.expect("=")
                    attrs.append((a, self.operand()))
                    if not self.accept(","):
                        break
                self.expect("}")
            return AddT(var, ntype, src, tuple(attrs)), span
        if self.accept("remove"):
            return RemoveT(self.ident("variable").text), span
        for word, cls in (("connect", ConnectT), ("disconnect", DisconnectT)):
            if self.accept(word):
                a = self.ident("variable").text
                etype = self.ident("edge type").text
                b = self.ident("variable").text
                return cls(a, etype, b), span
        self.fail("edit (set, add, remove, connect, disconnect)")


def parse(text: str, file_name: str = "<input>") -> FileAst:
    """Parse one ``.adm`` file; raise :class:`AdmError` listing every syntax error."""
    tokens, lex_errors = tokenize(text, file_name)
    p = _Parser(tokens, file_name)
    ast = p.file_ast()
    errors = lex_errors + p.errors
    if errors:
        raise AdmError(sorted(errors, key=lambda d: (d.span.line, d.span.col)))
    return ast
