"""Structural patterns over reflection models and a backtracking matcher.

Bindings are homomorphisms: two variables may bind the same node unless a
predicate such as ``a != b`` says otherwise. Negative sub-patterns reject a
binding when any extension of it matches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator, Mapping

from .expr import Cmp, all_hold, format_conjunction
from .model import ModelError, ReflectionModel


class PatternError(ValueError):
    pass


class UnknownAnchorError(ModelError):
    pass


@dataclass(frozen=True)
class PatternNode:
    var: str
    type: str


@dataclass(frozen=True)
class PatternEdge:
    src: str
    type: str
    tgt: str


@dataclass(frozen=True)
class Pattern:
    nodes: tuple[PatternNode, ...]
    edges: tuple[PatternEdge, ...] = ()
    where: tuple[Cmp, ...] = ()
    anchor: str | None = None
    negatives: tuple["Pattern", ...] = ()

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(n.var for n in self.nodes)

    def var_type(self, var: str) -> str | None:
        for n in self.nodes:
            if n.var == var:
                return n.type
        return None

    def check(self, outer: Mapping[str, str] | None = None) -> None:
        """Raise :class:`PatternError` unless the pattern is well formed."""
        outer = dict(outer or {})
        scope = dict(outer)
        for n in self.nodes:
            if n.var in scope:
                raise PatternError(f"variable {n.var!r} declared twice")
            scope[n.var] = n.type
        for e in self.edges:
            for v in (e.src, e.tgt):
                if v not in scope:
                    raise PatternError(f"edge references undeclared variable {v!r}")
        for c in self.where:
            for v in c.variables():
                if v not in scope:
                    raise PatternError(f"predicate references undeclared variable {v!r}")
        if self.anchor is not None and self.anchor not in scope:
            raise PatternError(f"anchor {self.anchor!r} is not declared")
        for neg in self.negatives:
            if neg.anchor is not None:
                raise PatternError("negative patterns cannot declare an anchor")
            neg.check(scope)

    def substitute(self, values: Mapping[str, Any]) -> "Pattern":
        return Pattern(
            self.nodes,
            self.edges,
            tuple(c.substitute(values) for c in self.where),
            self.anchor,
            tuple(n.substitute(values) for n in self.negatives),
        )

    def params(self) -> set[str]:
        out = set()
        for c in self.where:
            out |= c.params()
        for n in self.negatives:
            out |= n.params()
        return out

    def types(self) -> set[str]:
        out = {n.type for n in self.nodes}
        for neg in self.negatives:
            out |= neg.types()
        return out

    def __str__(self) -> str:
        return format_pattern(self)


def format_pattern(p: Pattern) -> str:
    parts = [f"{n.type} {'@' if p.anchor == n.var else ''}{n.var}" for n in p.nodes]
    parts += [f"{e.src} -{e.type}-> {e.tgt}" for e in p.edges]
    text = ", ".join(parts)
    if p.where:
        text += " where " + format_conjunction(p.where)
    for neg in p.negatives:
        text += " not { " + format_pattern(neg) + " }"
    return text


def binding_key(binding: Mapping[str, str]) -> tuple[str, ...]:
    return tuple(binding[v] for v in sorted(binding))


def _order(var_types: Mapping[str, str], edges, bound: set[str]) -> list[str]:
    order = []
    done = set(bound)
    remaining = [v for v in var_types if v not in done]
    while remaining:
        pick = None
        for v in remaining:
            if any((e.src == v and e.tgt in done) or (e.tgt == v and e.src in done) for e in edges):
                pick = v
                break
        if pick is None:
            pick = remaining[0]
        order.append(pick)
        done.add(pick)
        remaining.remove(pick)
    return order


def _extend(
    model: ReflectionModel,
    var_types: Mapping[str, str],
    edges,
    where,
    negatives,
    binding: dict[str, str],
    params: Mapping[str, Any] | None,
) -> Iterator[dict[str, str]]:
    """Yield every extension of ``binding`` over the unbound variables in ``var_types``."""
    order = _order(var_types, edges, set(binding))
    nodes = model.nodes
    placed = set(binding)
    # a constraint becomes checkable once all of its variables are placed
    edge_at: dict[int, list] = {i: [] for i in range(len(order) + 1)}
    cmp_at: dict[int, list] = {i: [] for i in range(len(order) + 1)}
    step_of = {v: i + 1 for i, v in enumerate(order)}
    for v in placed:
        step_of[v] = 0
    for e in edges:
        edge_at[max(step_of[e.src], step_of[e.tgt])].append(e)
    for c in where:
        cmp_at[max((step_of[v] for v in c.variables()), default=0)].append(c)

    def ok_at(step: int) -> bool:
        for e in edge_at[step]:
            if not model.has_edge(binding[e.src], e.type, binding[e.tgt]):
                return False
        return all_hold(cmp_at[step], binding, nodes, params)

    if not ok_at(0):
        return

    def candidates(var: str) -> list[str]:
        vtype = var_types[var]
        pools = []
        for e in edges:
            if e.tgt == var and e.src in binding:
                pools.append(model.targets(binding[e.src], e.type))
            elif e.src == var and e.tgt in binding:
                pools.append(model.sources(binding[e.tgt], e.type))
        if not pools:
            return model.nodes_of_type(vtype)
        pool = set(pools[0]).intersection(*pools[1:])
        return sorted(n for n in pool if n in nodes and nodes[n].type == vtype)

    def rec(i: int) -> Iterator[dict[str, str]]:
        if i == len(order):
            for neg in negatives:
                if _exists(model, neg, binding, params):
                    return
            yield dict(binding)
            return
        var = order[i]
        for nid in candidates(var):
            binding[var] = nid
            if ok_at(i + 1):
                yield from rec(i + 1)
            del binding[var]

    yield from rec(0)


def _exists(model, neg: Pattern, binding: Mapping[str, str], params) -> bool:
    var_types = {n.var: n.type for n in neg.nodes}
    for _ in _extend(model, var_types, neg.edges, neg.where, neg.negatives, dict(binding), params):
        return True
    return False


def search(
    model: ReflectionModel,
    pattern: Pattern,
    fixed: Mapping[str, str] | None = None,
    params: Mapping[str, Any] | None = None,
) -> list[dict[str, str]]:
    """All bindings of ``pattern`` that agree with ``fixed``, in canonical order."""
    var_types = {n.var: n.type for n in pattern.nodes}
    start: dict[str, str] = {}
    for var, nid in (fixed or {}).items():
        if var not in var_types:
            raise PatternError(f"cannot fix undeclared variable {var!r}")
        node = model.nodes.get(nid)
        if node is None or node.type != var_types[var]:
            return []
        start[var] = nid
    found = list(_extend(model, var_types, pattern.edges, pattern.where, pattern.negatives, start, params))
    found.sort(key=binding_key)
    return found


def match_pattern(
    model: ReflectionModel,
    pattern: Pattern,
    anchor: str | None = None,
    params: Mapping[str, Any] | None = None,
) -> list[dict[str, str]]:
    if anchor is None:
        return search(model, pattern, None, params)
    if not model.has(anchor):
        raise UnknownAnchorError(anchor)
    if pattern.anchor is None:
        raise PatternError("pattern has no anchor variable")
    return search(model, pattern, {pattern.anchor: anchor}, params)
