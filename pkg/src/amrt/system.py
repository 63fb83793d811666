"""Deterministic simulated component system and its causal connection to a
reflection model.

Monitor direction: :func:`monitor_sync` diffs the system projection against
the descriptive model, applies the differences and annotates one event per
difference. Execute direction: :func:`execute_sync` turns a committed model
delta into system commands.
"""

from __future__ import annotations

import copy
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Union

from .model import (
    AddEdge,
    AddNode,
    EditOp,
    Metamodel,
    ReflectionModel,
    RemoveEdge,
    RemoveNode,
    SetAttr,
    edge_id,
    validate_conformance,
)

RUNNING = "RUNNING"
FAILED = "FAILED"
EVENT_KINDS = ("attr-changed", "node-added", "node-removed", "edge-added", "edge-removed")


class SimError(Exception):
    pass


class UnknownTargetError(SimError):
    pass


class InvalidCommandError(SimError):
    pass


class AlreadyFailedError(InvalidCommandError):
    pass


class UnmappableDeltaError(SimError):
    pass


class ProjectionError(SimError):
    """The projected model does not conform; simulator and metamodel disagree."""


@dataclass(frozen=True)
class ChangeEvent:
    event_id: int
    tick: int
    kind: str
    element_id: str
    attribute: str | None = None
    old: Any = None
    new: Any = None
    source: str = "system"

    def to_dict(self) -> dict:
        d = {"eventId": self.event_id, "tick": self.tick, "kind": self.kind, "elementId": self.element_id, "source": self.source}
        if self.kind == "attr-changed":
            d.update(attribute=self.attribute, old=self.old, new=self.new)
        return d


@dataclass(frozen=True)
class Restart:
    component: str


@dataclass(frozen=True)
class AddReplica:
    component: str
    new_id: str


@dataclass(frozen=True)
class RemoveReplica:
    component: str


@dataclass(frozen=True)
class Migrate:
    component: str
    server: str


@dataclass(frozen=True)
class SetLoadRouting:
    src: str
    tgt: str
    action: str  # "add" | "remove"


Command = Union[Restart, AddReplica, RemoveReplica, Migrate, SetLoadRouting]


def command_to_dict(cmd: Command) -> dict:
    return {"command": type(cmd).__name__, **asdict(cmd)}


@dataclass
class Component:
    ctype: str
    state: str
    base_rt: float
    load: float
    host: str
    rt: float = 0.0


@dataclass
class WorkloadSchedule:
    loads: dict[int, dict[str, float]] = field(default_factory=dict)
    faults: list[tuple[int, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if any(t < 0 for t in self.loads) or any(t < 0 for t, _ in self.faults):
            raise ValueError("schedule ticks must be non-negative")

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkloadSchedule":
        loads = {int(t): {c: float(v) for c, v in entries.items()} for t, entries in d.get("loads", {}).items()}
        faults = [(int(t), c) for t, c in d.get("faults", [])]
        return cls(loads, faults)

    def to_dict(self) -> dict:
        return {
            "loads": {str(t): dict(sorted(e.items())) for t, e in sorted(self.loads.items())},
            "faults": [[t, c] for t, c in self.faults],
        }


class SimSystem:
    def __init__(
        self,
        servers: Mapping[str, float],
        components: Mapping[str, Component],
        connections: Iterable[tuple[str, str]] = (),
        seed: int = 0,
        load_noise: float = 0.0,
    ):
        self.servers = dict(servers)
        self.components = {cid: copy.copy(c) for cid, c in components.items()}
        self.connections = set(connections)
        self.clock = 0
        self.seed = seed
        self.load_noise = load_noise
        self.rng = random.Random(seed)
        self.next_event_id = 1
        for cid, c in self.components.items():
            if c.host not in self.servers:
                raise ValueError(f"component {cid!r} hosted on unknown server {c.host!r}")
        for a, b in self.connections:
            if a not in self.components or b not in self.components:
                raise ValueError(f"connection {a}->{b} references unknown component")
        self._recompute_rt([], "system")

    @classmethod
    def from_dict(cls, d: Mapping, seed: int = 0, load_noise: float = 0.0) -> "SimSystem":
        servers = {sid: float(s["capacity"]) for sid, s in d["servers"].items()}
        comps = {
            cid: Component(c["ctype"], c.get("state", RUNNING), float(c["baseRt"]), float(c.get("load", 0.0)), c["host"])
            for cid, c in d["components"].items()
        }
        conns = [tuple(p) for p in d.get("connections", [])]
        return cls(servers, comps, conns, seed=seed, load_noise=load_noise)

    def to_dict(self) -> dict:
        return {
            "clock": self.clock,
            "servers": {sid: {"capacity": cap} for sid, cap in sorted(self.servers.items())},
            "components": {
                cid: {"ctype": c.ctype, "state": c.state, "baseRt": c.base_rt, "load": c.load, "host": c.host, "rt": c.rt}
                for cid, c in sorted(self.components.items())
            },
            "connections": sorted([a, b] for a, b in self.connections),
        }

    # event helpers

    def _event(self, kind: str, element_id: str, source: str, attribute=None, old=None, new=None) -> ChangeEvent:
        ev = ChangeEvent(self.next_event_id, self.clock, kind, element_id, attribute, old, new, source)
        self.next_event_id += 1
        return ev

    def _set(self, cid: str, attr: str, value: Any, events: list, source: str) -> None:
        c = self.components[cid]
        old = getattr(c, attr)
        if old != value:
            setattr(c, attr, value)
            events.append(self._event("attr-changed", cid, source, attr, old, value))

    def replicas(self, ctype: str, running_only: bool = True) -> list[str]:
        return sorted(
            cid for cid, c in self.components.items() if c.ctype == ctype and (not running_only or c.state == RUNNING)
        )

    def server_load(self, sid: str) -> float:
        return sum(c.load for _, c in sorted(self.components.items()) if c.host == sid and c.state == RUNNING)

    def _recompute_rt(self, events: list, source: str) -> None:
        loads = {sid: self.server_load(sid) for sid in self.servers}
        for cid in sorted(self.components):
            c = self.components[cid]
            rt = c.base_rt * (1.0 + loads[c.host] / self.servers[c.host]) if c.state == RUNNING else 0.0
            self._set(cid, "rt", rt, events, source)

    def _spread(self, amount: float, ctype: str, exclude: str, events: list, source: str) -> None:
        """Give ``amount`` of load to the other RUNNING replicas of ``ctype`` in equal shares."""
        peers = [p for p in self.replicas(ctype) if p != exclude]
        if not peers or amount == 0:
            return
        share = amount / len(peers)
        for p in peers:
            self._set(p, "load", self.components[p].load + share, events, source)

    def _fail(self, cid: str, events: list, source: str) -> None:
        c = self.components[cid]
        self._set(cid, "state", FAILED, events, source)
        load = c.load
        self._set(cid, "load", 0.0, events, source)
        self._spread(load, c.ctype, cid, events, source)

    def _rebalance(self, ctype: str, events: list, source: str) -> None:
        group = self.replicas(ctype)
        if not group:
            return
        total = sum(self.components[p].load for p in group)
        share = total / len(group)
        for p in group:
            self._set(p, "load", share, events, source)


def tick(sys: SimSystem, schedule: WorkloadSchedule) -> list[ChangeEvent]:
    """Advance the clock by one tick: workload, scheduled faults, response times."""
    sys.clock += 1
    t = sys.clock
    events: list[ChangeEvent] = []
    for cid, load in sorted(schedule.loads.get(t, {}).items()):
        c = sys.components.get(cid)
        if c is None:
            continue
        if c.state == FAILED:
            sys._spread(float(load), c.ctype, cid, events, "system")
        else:
            sys._set(cid, "load", float(load), events, "system")
    if sys.load_noise:
        for cid in sorted(sys.components):
            c = sys.components[cid]
            if c.state == RUNNING:
                jitter = 1.0 + sys.rng.uniform(-sys.load_noise, sys.load_noise)
                sys._set(cid, "load", max(0.0, c.load * jitter), events, "system")
    for ft, cid in schedule.faults:
        if ft == t and cid in sys.components and sys.components[cid].state == RUNNING:
            sys._fail(cid, events, "system")
    sys._recompute_rt(events, "system")
    return events


def inject_fault(sys: SimSystem, component_id: str) -> ChangeEvent:
    """Flip a RUNNING component to FAILED; loads and response times follow on the next tick."""
    c = sys.components.get(component_id)
    if c is None:
        raise UnknownTargetError(component_id)
    if c.state == FAILED:
        raise AlreadyFailedError(component_id)
    events: list[ChangeEvent] = []
    sys._set(component_id, "state", FAILED, events, "system")
    return events[0]


def execute_command(sys: SimSystem, cmd: Command) -> list[ChangeEvent]:
    events: list[ChangeEvent] = []
    src = "adaptation"
    if isinstance(cmd, Restart):
        c = sys.components.get(cmd.component)
        if c is None:
            raise UnknownTargetError(cmd.component)
        if c.state == RUNNING:
            raise InvalidCommandError(f"{cmd.component} is already running")
        sys._set(cmd.component, "state", RUNNING, events, src)
    elif isinstance(cmd, AddReplica):
        c = sys.components.get(cmd.component)
        if c is None:
            raise UnknownTargetError(cmd.component)
        if cmd.new_id in sys.components or cmd.new_id in sys.servers:
            raise InvalidCommandError(f"id {cmd.new_id!r} already in use")
        sys.components[cmd.new_id] = Component(c.ctype, RUNNING, c.base_rt, 0.0, c.host, c.rt)
        events.append(sys._event("node-added", cmd.new_id, src))
        events.append(sys._event("edge-added", edge_id(cmd.new_id, "deployedOn", c.host), src))
        sys._rebalance(c.ctype, events, src)
    elif isinstance(cmd, RemoveReplica):
        c = sys.components.get(cmd.component)
        if c is None:
            raise UnknownTargetError(cmd.component)
        if len(sys.replicas(c.ctype, running_only=False)) < 2:
            raise InvalidCommandError(f"{cmd.component} is the last instance of {c.ctype}")
        for a, b in sorted(sys.connections):
            if cmd.component in (a, b):
                sys.connections.discard((a, b))
                events.append(sys._event("edge-removed", edge_id(a, "connects", b), src))
        events.append(sys._event("edge-removed", edge_id(cmd.component, "deployedOn", c.host), src))
        load = c.load if c.state == RUNNING else 0.0
        del sys.components[cmd.component]
        events.append(sys._event("node-removed", cmd.component, src))
        sys._spread(load, c.ctype, cmd.component, events, src)
    elif isinstance(cmd, Migrate):
        c = sys.components.get(cmd.component)
        if c is None:
            raise UnknownTargetError(cmd.component)
        if cmd.server not in sys.servers:
            raise UnknownTargetError(cmd.server)
        if cmd.server == c.host:
            raise InvalidCommandError(f"{cmd.component} already on {cmd.server}")
        events.append(sys._event("edge-removed", edge_id(cmd.component, "deployedOn", c.host), src))
        c.host = cmd.server
        events.append(sys._event("edge-added", edge_id(cmd.component, "deployedOn", c.host), src))
    elif isinstance(cmd, SetLoadRouting):
        for end in (cmd.src, cmd.tgt):
            if end not in sys.components:
                raise UnknownTargetError(end)
        pair = (cmd.src, cmd.tgt)
        eid = edge_id(cmd.src, "connects", cmd.tgt)
        if cmd.action == "add":
            if pair in sys.connections:
                raise InvalidCommandError(f"{eid} already routed")
            sys.connections.add(pair)
            events.append(sys._event("edge-added", eid, src))
        elif cmd.action == "remove":
            if pair not in sys.connections:
                raise InvalidCommandError(f"{eid} not routed")
            sys.connections.discard(pair)
            events.append(sys._event("edge-removed", eid, src))
        else:
            raise InvalidCommandError(f"unknown routing action {cmd.action!r}")
    else:
        raise InvalidCommandError(f"unknown command {cmd!r}")
    return events


# -- causal connection ---------------------------------------------------------


def project(sys: SimSystem, metamodel: Metamodel) -> ReflectionModel:
    """The reflection model the monitor should see for ``sys``."""
    m = ReflectionModel(metamodel)
    for sid, cap in sorted(sys.servers.items()):
        m.add_node(sid, "Server", capacity=cap)
    for cid, c in sorted(sys.components.items()):
        m.add_node(cid, "Component", ctype=c.ctype, state=c.state, rt=c.rt, load=c.load)
    for cid, c in sorted(sys.components.items()):
        m.add_edge("deployedOn", cid, c.host)
    for a, b in sorted(sys.connections):
        m.add_edge("connects", a, b)
    return m


def monitor_sync(sys: SimSystem, model: ReflectionModel) -> list[ChangeEvent]:
    if model.mode != "descriptive":
        raise ValueError("monitor_sync needs a descriptive model")
    if model.open_transaction is not None:
        raise ValueError("monitor_sync with an open transaction")
    target = project(sys, model.metamodel)
    problems = validate_conformance(target)
    if problems:
        raise ProjectionError("; ".join(str(p) for p in problems))
    events: list[ChangeEvent] = []

    def note(kind, eid, attribute=None, old=None, new=None):
        ev = sys._event(kind, eid, "system", attribute, old, new)
        events.append(ev)
        model.annotate_event(ev)

    for eid in sorted(set(model.edges) - set(target.edges)):
        note("edge-removed", eid)
        model._drop_edge(eid)
    for eid in sorted(set(model.edges) & set(target.edges)):
        if model.edges[eid] != target.edges[eid]:
            note("edge-removed", eid)
            model._drop_edge(eid)
    for nid in sorted(set(model.nodes) - set(target.nodes)):
        note("node-removed", nid)
        model._drop_node(nid)
    for nid in sorted(target.nodes):
        want = target.nodes[nid]
        have = model.nodes.get(nid)
        if have is None:
            model._put_node(nid, want.clone())
            note("node-added", nid)
            continue
        for name in sorted(set(have.attrs) | set(want.attrs)):
            old, new = have.attrs.get(name), want.attrs.get(name)
            if old != new or type(old) is not type(new):
                if new is None:
                    del have.attrs[name]
                else:
                    have.attrs[name] = new
                note("attr-changed", nid, name, old, new)
    for eid in sorted(target.edges):
        if eid not in model.edges:
            model._put_edge(eid, target.edges[eid])
            note("edge-added", eid)
    return events


def _replica_source(sys: SimSystem, new_id: str, ctype: Any) -> str:
    base = new_id.split("#", 1)[0]
    if base in sys.components and (ctype is None or sys.components[base].ctype == ctype):
        return base
    for cid in sorted(sys.components):
        if cid.startswith(base + "#") and (ctype is None or sys.components[cid].ctype == ctype):
            return cid
    raise UnmappableDeltaError(f"no replica source for {new_id!r}")


def translate_delta(delta: Iterable[EditOp], sys: SimSystem) -> list[Command]:
    """Map a committed delta to commands, dry-running them on a copy of ``sys``.

    Raises :class:`UnmappableDeltaError` for ops with no command equivalent
    and propagates :class:`SimError` for commands the system would reject.
    """
    ops = list(delta)
    shadow = copy.deepcopy(sys)
    removed = {op.id for op in ops if isinstance(op, RemoveNode)}
    commands: list[Command] = []
    new_nodes: dict[str, AddNode] = {}
    detached: dict[str, str] = {}

    def emit(cmd: Command) -> None:
        execute_command(shadow, cmd)
        commands.append(cmd)

    for op in ops:
        if isinstance(op, SetAttr):
            if op.name == "state" and op.old == FAILED and op.new == RUNNING and op.id not in new_nodes:
                emit(Restart(op.id))
                continue
            raise UnmappableDeltaError(f"write to {op.id}.{op.name} has no command equivalent")
        if isinstance(op, AddNode):
            if op.type != "Component":
                raise UnmappableDeltaError(f"cannot create {op.type} {op.id!r}")
            new_nodes[op.id] = op
            continue
        if isinstance(op, AddEdge) and op.type == "deployedOn":
            if op.src in new_nodes:
                add = new_nodes.pop(op.src)
                source = _replica_source(shadow, op.src, add.attrs.get("ctype"))
                emit(AddReplica(source, op.src))
                if shadow.components[op.src].host != op.tgt:
                    emit(Migrate(op.src, op.tgt))
            elif op.src in detached:
                detached.pop(op.src)
                emit(Migrate(op.src, op.tgt))
            else:
                raise UnmappableDeltaError(f"{op.id}: second host for {op.src}")
            continue
        if isinstance(op, RemoveEdge) and op.captured is not None and op.captured.type == "deployedOn":
            detached[op.captured.src] = op.captured.tgt
            continue
        if isinstance(op, RemoveNode):
            detached.pop(op.id, None)
            emit(RemoveReplica(op.id))
            continue
        if isinstance(op, AddEdge) and op.type == "connects":
            emit(SetLoadRouting(op.src, op.tgt, "add"))
            continue
        if isinstance(op, RemoveEdge) and op.captured is not None and op.captured.type == "connects":
            if op.captured.src in removed or op.captured.tgt in removed:
                continue
            emit(SetLoadRouting(op.captured.src, op.captured.tgt, "remove"))
            continue
        raise UnmappableDeltaError(f"no command for {op!r}")
    if new_nodes:
        raise UnmappableDeltaError(f"new components without a host: {sorted(new_nodes)}")
    if detached:
        raise UnmappableDeltaError(f"components left without a host: {sorted(detached)}")
    return commands


def execute_sync(delta: Iterable[EditOp], sys: SimSystem, events: list | None = None) -> list[Command]:
    """Translate and execute a committed delta; adaptation events are appended to ``events``."""
    commands = translate_delta(delta, sys)
    for cmd in commands:
        out = execute_command(sys, cmd)
        if events is not None:
            events.extend(out)
    return commands
