"""Reflection models: a typed attributed graph with metamodel conformance,
annotations, reversible transactional edits, and a canonical digest."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

SCALAR_KINDS = ("int", "float", "string", "bool")
MULTIPLICITIES = ("exactly-one", "any")


class ModelError(Exception):
    """Base class for reflection-model errors."""


class StaleOpError(ModelError):
    pass


class TypeViolation(ModelError):
    pass


class TxnClosedError(ModelError):
    pass


class TxnAlreadyOpenError(ModelError):
    pass


class UnknownElementError(ModelError):
    pass


class _Absent:
    def __repr__(self) -> str:
        return "ABSENT"

    def __reduce__(self):
        return "ABSENT"


ABSENT = _Absent()


# -- metamodel ---------------------------------------------------------------


@dataclass(frozen=True)
class AttrDecl:
    kind: str
    enum: tuple | None = None
    min: float | None = None
    max: float | None = None
    min_exclusive: bool = False
    max_exclusive: bool = False
    sensor: bool = False  # owned by the monitor; adaptation must not write it

    def __post_init__(self) -> None:
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown scalar kind {self.kind!r}")

    def kind_ok(self, value: Any) -> bool:
        if self.kind == "bool":
            return isinstance(value, bool)
        if isinstance(value, bool):
            return False
        if self.kind == "int":
            return isinstance(value, int)
        if self.kind == "float":
            return isinstance(value, (int, float))
        return isinstance(value, str)

    def coerce(self, value: Any) -> Any:
        if self.kind == "float" and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value

    def problems(self, value: Any) -> list[str]:
        if not self.kind_ok(value):
            return [f"expected {self.kind}, got {type(value).__name__}"]
        out = []
        if self.enum is not None and value not in self.enum:
            out.append(f"value {value!r} not in {list(self.enum)}")
        if self.min is not None and (value < self.min or (self.min_exclusive and value == self.min)):
            out.append(f"value {value!r} below {'>' if self.min_exclusive else '>='}{self.min}")
        if self.max is not None and (value > self.max or (self.max_exclusive and value == self.max)):
            out.append(f"value {value!r} above {'<' if self.max_exclusive else '<='}{self.max}")
        return out

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.enum is not None:
            d["enum"] = list(self.enum)
        if self.min is not None:
            d["min"] = self.min
        if self.max is not None:
            d["max"] = self.max
        if self.min_exclusive:
            d["minExclusive"] = True
        if self.max_exclusive:
            d["maxExclusive"] = True
        if self.sensor:
            d["sensor"] = True
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttrDecl":
        return cls(
            kind=d["kind"],
            enum=tuple(d["enum"]) if "enum" in d else None,
            min=d.get("min"),
            max=d.get("max"),
            min_exclusive=bool(d.get("minExclusive", False)),
            max_exclusive=bool(d.get("maxExclusive", False)),
            sensor=bool(d.get("sensor", False)),
        )


@dataclass(frozen=True)
class EdgeType:
    name: str
    source: str
    target: str
    multiplicity: str = "any"


class Metamodel:
    """Node types with attribute declarations plus typed edges.

    The engine core only ever talks to a metamodel through this class, so
    any domain can be plugged in by writing the JSON document.
    """

    def __init__(self, node_types: Mapping[str, Mapping[str, AttrDecl]], edge_types: Iterable[EdgeType] = ()):
        self.node_types = {t: dict(attrs) for t, attrs in node_types.items()}
        self.edge_types: dict[str, EdgeType] = {}
        for et in edge_types:
            if et.name in self.edge_types or et.name in self.node_types:
                raise ValueError(f"duplicate type name {et.name!r}")
            if et.source not in self.node_types or et.target not in self.node_types:
                raise ValueError(f"edge type {et.name!r} references undeclared node type")
            if et.multiplicity not in MULTIPLICITIES:
                raise ValueError(f"bad multiplicity {et.multiplicity!r}")
            self.edge_types[et.name] = et

    def attr(self, node_type: str, name: str) -> AttrDecl | None:
        return self.node_types.get(node_type, {}).get(name)

    def sensor_attributes(self, node_type: str) -> set[str]:
        return {n for n, d in self.node_types.get(node_type, {}).items() if d.sensor}

    def to_dict(self) -> dict:
        return {
            "nodeTypes": {t: {n: d.to_dict() for n, d in attrs.items()} for t, attrs in self.node_types.items()},
            "edgeTypes": {
                e.name: {"source": e.source, "target": e.target, "multiplicity": e.multiplicity}
                for e in self.edge_types.values()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Metamodel":
        nodes = {t: {n: AttrDecl.from_dict(a) for n, a in attrs.items()} for t, attrs in d["nodeTypes"].items()}
        edges = [
            EdgeType(name, e["source"], e["target"], e.get("multiplicity", "any"))
            for name, e in d.get("edgeTypes", {}).items()
        ]
        return cls(nodes, edges)

    @classmethod
    def load(cls, path: str | Path) -> "Metamodel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- graph elements and edits -------------------------------------------------


@dataclass
class Node:
    type: str
    attrs: dict[str, Any] = field(default_factory=dict)

    def clone(self) -> "Node":
        return Node(self.type, dict(self.attrs))


@dataclass(frozen=True)
class Edge:
    type: str
    src: str
    tgt: str


def edge_id(src: str, etype: str, tgt: str) -> str:
    """Canonical edge id used by the causal connection and option effects."""
    return f"{src}-{etype}->{tgt}"


@dataclass(frozen=True)
class AddNode:
    id: str
    type: str
    attrs: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RemoveNode:
    id: str
    captured: Node | None = None


@dataclass(frozen=True)
class SetAttr:
    id: str
    name: str
    old: Any = ABSENT
    new: Any = ABSENT


@dataclass(frozen=True)
class AddEdge:
    id: str
    type: str
    src: str
    tgt: str


@dataclass(frozen=True)
class RemoveEdge:
    id: str
    captured: Edge | None = None


EditOp = Union[AddNode, RemoveNode, SetAttr, AddEdge, RemoveEdge]


def inverse(op: EditOp) -> EditOp:
    if isinstance(op, AddNode):
        return RemoveNode(op.id, Node(op.type, dict(op.attrs)))
    if isinstance(op, RemoveNode):
        if op.captured is None:
            raise ValueError("RemoveNode without captured content has no inverse")
        return AddNode(op.id, op.captured.type, dict(op.captured.attrs))
    if isinstance(op, SetAttr):
        return SetAttr(op.id, op.name, op.new, op.old)
    if isinstance(op, AddEdge):
        return RemoveEdge(op.id, Edge(op.type, op.src, op.tgt))
    if isinstance(op, RemoveEdge):
        if op.captured is None:
            raise ValueError("RemoveEdge without captured content has no inverse")
        c = op.captured
        return AddEdge(op.id, c.type, c.src, c.tgt)
    raise TypeError(f"not an edit op: {op!r}")


@dataclass(frozen=True)
class AppliedOp:
    op: EditOp
    inverse: EditOp


@dataclass(frozen=True)
class Violation:
    element_id: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.element_id}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


@dataclass(frozen=True)
class Annotations:
    events: tuple
    results: tuple
    stale: bool


# -- the model ---------------------------------------------------------------


class ReflectionModel:
    def __init__(self, metamodel: Metamodel, mode: str = "descriptive"):
        if mode not in ("descriptive", "prescriptive"):
            raise ValueError(mode)
        self.metamodel = metamodel
        self.mode = mode
        self.nodes: dict[str, Node] = {}
        self.edges: dict[str, Edge] = {}
        self._out: dict[str, dict[str, dict[str, int]]] = {}
        self._in: dict[str, dict[str, dict[str, int]]] = {}
        self._by_type: dict[str, set[str]] = {}
        self._event_ann: dict[str, list] = {}
        self._result_ann: dict[str, list] = {}
        self._open: Transaction | None = None
        self._txn_seq = 0

    # reads

    def has(self, element_id: str) -> bool:
        return element_id in self.nodes or element_id in self.edges

    def nodes_of_type(self, node_type: str) -> list[str]:
        return sorted(self._by_type.get(node_type, ()))

    def targets(self, src: str, etype: str) -> list[str]:
        return sorted(self._out.get(src, {}).get(etype, {}))

    def sources(self, tgt: str, etype: str) -> list[str]:
        return sorted(self._in.get(tgt, {}).get(etype, {}))

    def has_edge(self, src: str, etype: str, tgt: str) -> bool:
        return self._out.get(src, {}).get(etype, {}).get(tgt, 0) > 0

    def find_edge(self, src: str, etype: str, tgt: str) -> str | None:
        if not self.has_edge(src, etype, tgt):
            return None
        cid = edge_id(src, etype, tgt)
        if self.edges.get(cid) == Edge(etype, src, tgt):
            return cid
        for eid in sorted(self.edges):
            if self.edges[eid] == Edge(etype, src, tgt):
                return eid
        return None

    def incident_edges(self, node_id: str) -> list[str]:
        return sorted(eid for eid, e in self.edges.items() if e.src == node_id or e.tgt == node_id)

    @property
    def open_transaction(self) -> "Transaction | None":
        return self._open

    # raw mutation (no validation) used by Transaction

    def _index_edge(self, e: Edge, delta: int) -> None:
        for table, a, b in ((self._out, e.src, e.tgt), (self._in, e.tgt, e.src)):
            bucket = table.setdefault(a, {}).setdefault(e.type, {})
            n = bucket.get(b, 0) + delta
            if n:
                bucket[b] = n
            else:
                del bucket[b]

    def _put_node(self, nid: str, node: Node) -> None:
        self.nodes[nid] = node
        self._by_type.setdefault(node.type, set()).add(nid)

    def _drop_node(self, nid: str) -> Node:
        node = self.nodes.pop(nid)
        self._by_type[node.type].discard(nid)
        return node

    def _put_edge(self, eid: str, e: Edge) -> None:
        self.edges[eid] = e
        self._index_edge(e, +1)

    def _drop_edge(self, eid: str) -> Edge:
        e = self.edges.pop(eid)
        self._index_edge(e, -1)
        return e

    # building without a transaction (fixtures, loaders, monitor projection)

    def add_node(self, nid: str, node_type: str, **attrs: Any) -> None:
        self._raw_apply(self._validate(AddNode(nid, node_type, attrs)))

    def add_edge(self, etype: str, src: str, tgt: str, eid: str | None = None) -> str:
        eid = eid or edge_id(src, etype, tgt)
        self._raw_apply(self._validate(AddEdge(eid, etype, src, tgt)))
        return eid

    # transactions

    def begin_transaction(self) -> "Transaction":
        if self._open is not None:
            raise TxnAlreadyOpenError(f"transaction {self._open.txn_id} is still open")
        self._txn_seq += 1
        txn = Transaction(self._txn_seq, self)
        self._open = txn
        return txn

    def _validate(self, op: EditOp) -> EditOp:
        """Check ``op`` against the current state; return it with captured content filled in."""
        mm = self.metamodel
        if isinstance(op, AddNode):
            if op.id in self.nodes or op.id in self.edges:
                raise StaleOpError(f"element {op.id!r} already exists")
            if op.type not in mm.node_types:
                raise TypeViolation(f"unknown node type {op.type!r}")
            attrs = {}
            for name, value in op.attrs.items():
                decl = mm.attr(op.type, name)
                if decl is None:
                    raise TypeViolation(f"{op.type} has no attribute {name!r}")
                if not decl.kind_ok(value):
                    raise TypeViolation(f"{op.id}.{name}: expected {decl.kind}, got {value!r}")
                attrs[name] = decl.coerce(value)
            return AddNode(op.id, op.type, attrs)
        if isinstance(op, RemoveNode):
            node = self.nodes.get(op.id)
            if node is None:
                raise StaleOpError(f"no node {op.id!r}")
            return RemoveNode(op.id, node.clone())
        if isinstance(op, SetAttr):
            node = self.nodes.get(op.id)
            if node is None:
                raise StaleOpError(f"no node {op.id!r}")
            new = op.new
            if new is not ABSENT:
                decl = mm.attr(node.type, op.name)
                if decl is None:
                    raise TypeViolation(f"{node.type} has no attribute {op.name!r}")
                if not decl.kind_ok(new):
                    raise TypeViolation(f"{op.id}.{op.name}: expected {decl.kind}, got {new!r}")
                new = decl.coerce(new)
            return SetAttr(op.id, op.name, node.attrs.get(op.name, ABSENT), new)
        if isinstance(op, AddEdge):
            if op.id in self.edges or op.id in self.nodes:
                raise StaleOpError(f"element {op.id!r} already exists")
            et = mm.edge_types.get(op.type)
            if et is None:
                raise TypeViolation(f"unknown edge type {op.type!r}")
            for end, want in ((op.src, et.source), (op.tgt, et.target)):
                node = self.nodes.get(end)
                if node is None:
                    raise StaleOpError(f"edge endpoint {end!r} missing")
                if node.type != want:
                    raise TypeViolation(f"{op.type} endpoint {end!r} must be {want}, is {node.type}")
            return op
        if isinstance(op, RemoveEdge):
            e = self.edges.get(op.id)
            if e is None:
                raise StaleOpError(f"no edge {op.id!r}")
            return RemoveEdge(op.id, e)
        raise TypeError(f"not an edit op: {op!r}")

    def _raw_apply(self, op: EditOp) -> None:
        if isinstance(op, AddNode):
            self._put_node(op.id, Node(op.type, dict(op.attrs)))
        elif isinstance(op, RemoveNode):
            self._drop_node(op.id)
        elif isinstance(op, SetAttr):
            attrs = self.nodes[op.id].attrs
            if op.new is ABSENT:
                attrs.pop(op.name, None)
            else:
                attrs[op.name] = op.new
        elif isinstance(op, AddEdge):
            self._put_edge(op.id, Edge(op.type, op.src, op.tgt))
        else:
            self._drop_edge(op.id)

    # annotations (never part of the digest)

    def annotate_event(self, event) -> None:
        if not self.has(event.element_id):
            raise UnknownElementError(event.element_id)
        self._event_ann.setdefault(event.element_id, []).append(event)

    def annotate_result(self, result) -> None:
        anchor = result.anchor_element_id
        if anchor is None or not self.has(anchor):
            raise UnknownElementError(anchor)
        self._result_ann.setdefault(anchor, []).append(result)

    def read_annotations(self, element_id: str) -> Annotations:
        events = tuple(self._event_ann.get(element_id, ()))
        results = tuple(self._result_ann.get(element_id, ()))
        if not events and not results and not self.has(element_id):
            raise UnknownElementError(element_id)
        return Annotations(events, results, stale=not self.has(element_id))

    def clear_annotations(self) -> None:
        self._event_ann.clear()
        self._result_ann.clear()

    # copying and (de)serialization

    def copy(self) -> "ReflectionModel":
        """Deep copy of the domain content; annotations and transactions are not copied."""
        m = ReflectionModel(self.metamodel, self.mode)
        for nid, node in self.nodes.items():
            m._put_node(nid, node.clone())
        for eid, e in self.edges.items():
            m._put_edge(eid, e)
        return m

    def to_dict(self) -> dict:
        return {
            "nodes": {nid: {"type": n.type, "attrs": dict(sorted(n.attrs.items()))} for nid, n in sorted(self.nodes.items())},
            "edges": {eid: {"type": e.type, "src": e.src, "tgt": e.tgt} for eid, e in sorted(self.edges.items())},
        }

    @classmethod
    def from_dict(cls, metamodel: Metamodel, d: Mapping, mode: str = "descriptive") -> "ReflectionModel":
        m = cls(metamodel, mode)
        for nid, n in d.get("nodes", {}).items():
            m.add_node(nid, n["type"], **n.get("attrs", {}))
        for eid, e in d.get("edges", {}).items():
            m.add_edge(e["type"], e["src"], e["tgt"], eid=eid)
        return m

    def __repr__(self) -> str:
        return f"<ReflectionModel {self.mode} nodes={len(self.nodes)} edges={len(self.edges)}>"


class Transaction:
    """An ordered log of applied edits on one model.

    ``savepoint``/``rollback_to`` undo a suffix of the log, which is what the
    planner uses to back out of a search branch without discarding the path.
    """

    def __init__(self, txn_id: int, model: ReflectionModel):
        self.txn_id = txn_id
        self.model = model
        self.ops: list[EditOp] = []
        self.status = "open"
        # (candidate, full binding) per applied adaptation option; filled by the change module
        self.applications: list[tuple] = []

    def _require_open(self) -> None:
        if self.status != "open":
            raise TxnClosedError(f"transaction {self.txn_id} is {self.status}")

    def apply_edit(self, op: EditOp) -> AppliedOp:
        self._require_open()
        full = self.model._validate(op)
        self.model._raw_apply(full)
        self.ops.append(full)
        return AppliedOp(full, inverse(full))

    def savepoint(self) -> tuple[int, int]:
        self._require_open()
        return (len(self.ops), len(self.applications))

    def rollback_to(self, savepoint: tuple[int, int]) -> None:
        self._require_open()
        n_ops, n_apps = savepoint
        while len(self.ops) > n_ops:
            self.model._raw_apply(inverse(self.ops.pop()))
        del self.applications[n_apps:]

    def commit(self) -> tuple[EditOp, ...]:
        self._require_open()
        self.status = "committed"
        self.model._open = None
        return tuple(self.ops)

    def rollback(self) -> None:
        self._require_open()
        self.rollback_to((0, 0))
        self.status = "rolledBack"
        self.model._open = None


def begin_transaction(model: ReflectionModel) -> Transaction:
    return model.begin_transaction()


def apply_edit(txn: Transaction, op: EditOp) -> AppliedOp:
    return txn.apply_edit(op)


def commit(txn: Transaction) -> tuple[EditOp, ...]:
    return txn.commit()


def rollback(txn: Transaction) -> None:
    txn.rollback()


# -- conformance -------------------------------------------------------------


def validate_conformance(model: ReflectionModel, mm: Metamodel | None = None) -> list[Violation]:
    mm = mm or model.metamodel
    out: list[Violation] = []
    for nid in sorted(model.nodes):
        node = model.nodes[nid]
        decls = mm.node_types.get(node.type)
        if decls is None:
            out.append(Violation(nid, "unknown node type", node.type))
            continue
        for name in sorted(decls):
            if name not in node.attrs:
                out.append(Violation(nid, "missing attribute", name))
        for name in sorted(node.attrs):
            decl = decls.get(name)
            if decl is None:
                out.append(Violation(nid, "undeclared attribute", name))
                continue
            for p in decl.problems(node.attrs[name]):
                out.append(Violation(nid, "attribute domain", f"{name}: {p}"))
    out_count: dict[tuple[str, str], int] = {}
    for eid in sorted(model.edges):
        e = model.edges[eid]
        et = mm.edge_types.get(e.type)
        if et is None:
            out.append(Violation(eid, "unknown edge type", e.type))
            continue
        if e.src not in model.nodes or e.tgt not in model.nodes:
            out.append(Violation(eid, "dangling edge", f"{e.src} -> {e.tgt}"))
            continue
        if model.nodes[e.src].type != et.source or model.nodes[e.tgt].type != et.target:
            out.append(Violation(eid, "edge endpoint type", f"{e.type} expects {et.source} -> {et.target}"))
            continue
        out_count[(e.src, e.type)] = out_count.get((e.src, e.type), 0) + 1
    for et in sorted(mm.edge_types.values(), key=lambda t: t.name):
        if et.multiplicity != "exactly-one":
            continue
        for nid in model.nodes_of_type(et.source):
            n = out_count.get((nid, et.name), 0)
            if n != 1:
                out.append(Violation(nid, "multiplicity", f"{et.name}: expected exactly one, found {n}"))
    return out


# -- digest ------------------------------------------------------------------


def _frame(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def _scalar(v: Any) -> bytes:
    if isinstance(v, bool):
        return b"b" + (b"1" if v else b"0")
    if isinstance(v, int):
        return b"i" + str(v).encode()
    if isinstance(v, float):
        return b"f" + v.hex().encode()
    if isinstance(v, str):
        return b"s" + v.encode("utf-8")
    raise TypeError(f"unsupported attribute value {v!r}")


def canonical_bytes(model: ReflectionModel) -> bytes:
    parts = [_frame(b"amrt-model-v1"), _frame(str(len(model.nodes)).encode())]
    for nid in sorted(model.nodes):
        node = model.nodes[nid]
        parts += [_frame(nid.encode()), _frame(node.type.encode()), _frame(str(len(node.attrs)).encode())]
        for name in sorted(node.attrs):
            parts += [_frame(name.encode()), _frame(_scalar(node.attrs[name]))]
    parts.append(_frame(str(len(model.edges)).encode()))
    for eid in sorted(model.edges):
        e = model.edges[eid]
        parts += [_frame(eid.encode()), _frame(e.type.encode()), _frame(e.src.encode()), _frame(e.tgt.encode())]
    return b"".join(parts)


def snapshot_digest(model: ReflectionModel) -> bytes:
    """SHA-256 over the canonical serialization; mode and annotations are excluded."""
    return hashlib.sha256(canonical_bytes(model)).digest()
