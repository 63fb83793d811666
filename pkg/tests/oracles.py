"""Independent oracles and random instance generators for the test suite.

Nothing here calls the matcher, the planner's search, or the utility code
of the package; the oracles recompute from plain data.
"""

from __future__ import annotations

import itertools
import math
import random

from amrt.expr import Attr, Cmp, Lit, Ref
from amrt.model import AddEdge, AddNode, AttrDecl, EdgeType, Metamodel, ReflectionModel, RemoveEdge, RemoveNode, SetAttr
from amrt.system import ChangeEvent
from amrt.pattern import Pattern, PatternEdge, PatternNode

# -- utility oracle for the shop fixture ---------------------------------------


def shop_utility(components: dict[str, tuple[str, float]], w_perf: float = 0.4, w_avail: float = 0.6) -> float:
    """components: id -> (state, rt). perf: avg rt of RUNNING, minimize over [0, 1000]; avail: share RUNNING."""
    running = [rt for state, rt in components.values() if state == "RUNNING"]
    avg = sum(running) / len(running) if running else 1000.0
    perf = 1.0 - min(1.0, max(0.0, avg / 1000.0))
    avail = len(running) / len(components) if components else 0.0
    return w_perf * perf + w_avail * avail


def sim_rt(base_rt: float, server_load: float, capacity: float) -> float:
    return base_rt * (1.0 + server_load / capacity)


# -- generic metamodel and random models ----------------------------------------

GENERIC = Metamodel(
    {
        "A": {"x": AttrDecl("int", min=0, max=9), "s": AttrDecl("string", enum=("p", "q", "r"))},
        "B": {"x": AttrDecl("int", min=0, max=9), "flag": AttrDecl("bool")},
    },
    [EdgeType("e", "A", "B"), EdgeType("f", "A", "A"), EdgeType("g", "B", "A")],
)
ATTRS = {"A": ("x", "s"), "B": ("x", "flag")}


def random_value(rng: random.Random, ntype: str, attr: str):
    if attr == "x":
        return rng.randint(0, 9)
    if attr == "s":
        return rng.choice("pqr")
    return rng.random() < 0.5


def random_model(rng: random.Random, max_nodes: int = 12, edge_p: float = 0.2) -> ReflectionModel:
    m = ReflectionModel(GENERIC)
    n = rng.randint(0, max_nodes)
    for i in range(n):
        t = rng.choice("AB")
        m.add_node(f"n{i:02d}", t, **{a: random_value(rng, t, a) for a in ATTRS[t]})
    ids = sorted(m.nodes)
    for a in ids:
        for b in ids:
            for et in GENERIC.edge_types.values():
                if m.nodes[a].type == et.source and m.nodes[b].type == et.target and rng.random() < edge_p:
                    m.add_edge(et.name, a, b)
    return m


def random_op(rng: random.Random, model: ReflectionModel, serial: int, max_nodes: int | None = None):
    """An op that is valid on ``model`` (or None if nothing applies).

    With ``max_nodes`` set, a full model gets a removal instead of a new node.
    """
    nodes, edges = sorted(model.nodes), sorted(model.edges)
    roll = rng.random()
    full = max_nodes is not None and len(nodes) >= max_nodes
    if full and roll < 0.25:
        roll = 0.9
    if (roll < 0.25 or not nodes) and not full:
        t = rng.choice("AB")
        attrs = {a: random_value(rng, t, a) for a in ("x", "s" if t == "A" else "flag")}
        return AddNode(f"new{serial}", t, attrs)
    if roll < 0.5:
        nid = rng.choice(nodes)
        t = model.nodes[nid].type
        attr = rng.choice(["x", "s"] if t == "A" else ["x", "flag"])
        return SetAttr(nid, attr, new=random_value(rng, t, attr))
    if roll < 0.7:
        src = rng.choice(nodes)
        et = rng.choice([e for e in GENERIC.edge_types.values()])
        tgts = [n for n in nodes if model.nodes[n].type == et.target]
        if model.nodes[src].type != et.source or not tgts:
            return None
        return AddEdge(f"e{serial}", et.name, src, rng.choice(tgts))
    if roll < 0.85 and edges:
        return RemoveEdge(rng.choice(edges))
    nid = rng.choice(nodes)
    if model.incident_edges(nid):
        return RemoveEdge(model.incident_edges(nid)[0])
    return RemoveNode(nid)


def event_for(op, serial: int, tick: int) -> ChangeEvent:
    """The monitor event an applied op would produce."""
    if isinstance(op, SetAttr):
        return ChangeEvent(serial, tick, "attr-changed", op.id, op.name, op.old, op.new)
    kind = {AddNode: "node-added", RemoveNode: "node-removed", AddEdge: "edge-added", RemoveEdge: "edge-removed"}[type(op)]
    return ChangeEvent(serial, tick, kind, op.id)


def _random_cmp(rng: random.Random, var_types: dict[str, str]) -> Cmp:
    v = rng.choice(sorted(var_types))
    t = var_types[v]
    roll = rng.random()
    if roll < 0.15 and len(var_types) > 1:
        w = rng.choice([u for u in sorted(var_types) if u != v])
        return Cmp(rng.choice(["=", "!="]), Ref(v), Ref(w))
    if roll < 0.3 and len(var_types) > 1:
        w = rng.choice([u for u in sorted(var_types) if u != v])
        return Cmp(rng.choice(["=", "!=", "<", ">="]), Attr(v, "x"), Attr(w, "x"))
    attr = rng.choice(ATTRS[t])
    if attr == "x":
        return Cmp(rng.choice(["=", "!=", "<", "<=", ">", ">="]), Attr(v, "x"), Lit(rng.randint(0, 9)))
    if attr == "s":
        return Cmp(rng.choice(["=", "!="]), Attr(v, "s"), Lit(rng.choice("pqr")))
    return Cmp("=", Attr(v, "flag"), Lit(rng.random() < 0.5))


def _random_edges(rng: random.Random, var_types: dict[str, str], k: int, scope: dict[str, str]) -> list[PatternEdge]:
    out = []
    allvars = dict(scope, **var_types)
    for _ in range(k):
        et = rng.choice(sorted(GENERIC.edge_types))
        e = GENERIC.edge_types[et]
        srcs = [v for v, t in allvars.items() if t == e.source]
        tgts = [v for v, t in allvars.items() if t == e.target]
        if not srcs or not tgts:
            continue
        s, g = rng.choice(sorted(srcs)), rng.choice(sorted(tgts))
        if s not in var_types and g not in var_types:
            continue
        out.append(PatternEdge(s, et, g))
    return out


def random_pattern(rng: random.Random, max_vars: int = 3, anchored: bool = False, negatives: bool = True) -> Pattern:
    nv = rng.randint(1, max_vars)
    var_types = {f"v{i}": rng.choice("AB") for i in range(nv)}
    edges = _random_edges(rng, var_types, rng.randint(0, nv), {})
    where = [_random_cmp(rng, var_types) for _ in range(rng.randint(0, 2))]
    negs = []
    if negatives and rng.random() < 0.3:
        nt = {"w0": rng.choice("AB")}
        nedges = _random_edges(rng, nt, 1 + rng.randint(0, 1), var_types)
        nwhere = [_random_cmp(rng, dict(var_types, **nt))] if rng.random() < 0.5 else []
        nwhere = [c for c in nwhere if "w0" in c.variables()]
        negs.append(Pattern(tuple(PatternNode(v, t) for v, t in nt.items()), tuple(nedges), tuple(nwhere)))
    anchor = rng.choice(sorted(var_types)) if anchored else None
    nodes = tuple(PatternNode(v, t) for v, t in var_types.items())
    return Pattern(nodes, tuple(dict.fromkeys(edges)), tuple(where), anchor, tuple(negs))


# -- brute-force matcher -------------------------------------------------------


def _kind(v):
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, (int, float)):
        return "num"
    return "str"


def _value(side, binding, model):
    if isinstance(side, Lit):
        return side.value
    if isinstance(side, Ref):
        return binding[side.var]
    return model.nodes[binding[side.var]].attrs.get(side.name)


def _cmp_holds(c: Cmp, binding, model) -> bool:
    a, b = _value(c.left, binding, model), _value(c.right, binding, model)
    if a is None or b is None:
        return False
    if _kind(a) != _kind(b):
        return c.op == "!="
    if c.op == "=":
        return a == b
    if c.op == "!=":
        return a != b
    if _kind(a) == "bool":
        return False
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[c.op]


def _edge_set(model):
    return {(e.src, e.type, e.tgt) for e in model.edges.values()}


def brute_force_matches(model: ReflectionModel, pattern: Pattern, fixed: dict | None = None, outer: dict | None = None) -> list[dict]:
    outer = dict(outer or {})
    edges = _edge_set(model)
    pools = []
    for n in pattern.nodes:
        if fixed and n.var in fixed:
            nid = fixed[n.var]
            pools.append([nid] if nid in model.nodes and model.nodes[nid].type == n.type else [])
        else:
            pools.append(sorted(nid for nid, node in model.nodes.items() if node.type == n.type))
    out = []
    for combo in itertools.product(*pools):
        b = dict(outer)
        b.update({n.var: nid for n, nid in zip(pattern.nodes, combo)})
        if not all((b[e.src], e.type, b[e.tgt]) in edges for e in pattern.edges):
            continue
        if not all(_cmp_holds(c, b, model) for c in pattern.where):
            continue
        if any(brute_force_matches(model, neg, outer=b) for neg in pattern.negatives):
            continue
        out.append({n.var: b[n.var] for n in pattern.nodes})
    return out


def binding_set(bindings) -> set:
    return {tuple(sorted(b.items())) for b in bindings}


def fsum_costs(costs) -> float:
    return math.fsum(costs)
