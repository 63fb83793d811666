"""Comparison expressions shared by patterns, qualities, and option postconditions.

An expression is a conjunction of :class:`Cmp` terms. Operands are literals,
attribute reads on bound pattern variables, identity references to bound
variables, or parameters that are substituted at resolution/candidate time.
"""

from __future__ import annotations

import json
import operator
from dataclasses import dataclass
from typing import Any, Mapping, Union


class UnboundParameter(KeyError):
    pass


@dataclass(frozen=True)
class Lit:
    value: Any

    def __str__(self) -> str:
        return format_literal(self.value)


@dataclass(frozen=True)
class Attr:
    """Attribute read ``var.name``; ``var == ""`` means the implicit node of a quality filter."""

    var: str
    name: str

    def __str__(self) -> str:
        return f"{self.var}.{self.name}" if self.var else self.name


@dataclass(frozen=True)
class Ref:
    """The element id bound to a variable (identity comparison)."""

    var: str

    def __str__(self) -> str:
        return self.var


@dataclass(frozen=True)
class Param:
    name: str

    def __str__(self) -> str:
        return self.name


Operand = Union[Lit, Attr, Ref, Param]

_ORDERING = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
OPERATORS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Cmp:
    op: str
    left: Operand
    right: Operand

    def __post_init__(self) -> None:
        if self.op not in OPERATORS:
            raise ValueError(f"unknown comparison operator {self.op!r}")

    def variables(self) -> set[str]:
        out = set()
        for side in (self.left, self.right):
            if isinstance(side, (Attr, Ref)) and side.var:
                out.add(side.var)
        return out

    def params(self) -> set[str]:
        return {s.name for s in (self.left, self.right) if isinstance(s, Param)}

    def substitute(self, values: Mapping[str, Any]) -> "Cmp":
        """Replace parameters found in ``values`` by literals."""

        def sub(side: Operand) -> Operand:
            if isinstance(side, Param) and side.name in values:
                return Lit(values[side.name])
            return side

        return Cmp(self.op, sub(self.left), sub(self.right))

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


_MISSING = object()


def format_literal(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"unsupported literal {value!r}")


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def compare(op: str, a: Any, b: Any) -> bool:
    """Total comparison: mismatched kinds are unequal and unordered."""
    if a is _MISSING or b is _MISSING:
        return False
    same_kind = (
        (_is_number(a) and _is_number(b))
        or (isinstance(a, str) and isinstance(b, str))
        or (isinstance(a, bool) and isinstance(b, bool))
    )
    if op == "=":
        return same_kind and a == b
    if op == "!=":
        return not same_kind or a != b
    if not same_kind or isinstance(a, bool):
        return False
    return _ORDERING[op](a, b)


def operand_value(side: Operand, binding: Mapping[str, str], nodes: Mapping, params: Mapping[str, Any] | None = None) -> Any:
    if isinstance(side, Lit):
        return side.value
    if isinstance(side, Ref):
        return binding.get(side.var, _MISSING)
    if isinstance(side, Attr):
        node_id = binding.get(side.var)
        node = nodes.get(node_id) if node_id is not None else None
        if node is None:
            return _MISSING
        return node.attrs.get(side.name, _MISSING)
    if params is not None and side.name in params:
        return params[side.name]
    raise UnboundParameter(side.name)


def holds(cmp: Cmp, binding: Mapping[str, str], nodes: Mapping, params: Mapping[str, Any] | None = None) -> bool:
    return compare(
        cmp.op,
        operand_value(cmp.left, binding, nodes, params),
        operand_value(cmp.right, binding, nodes, params),
    )


def all_hold(terms, binding, nodes, params=None) -> bool:
    return all(holds(t, binding, nodes, params) for t in terms)


def format_conjunction(terms) -> str:
    return " and ".join(str(t) for t in terms) if terms else "true"
