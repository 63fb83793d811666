"""Static checks on a resolved adaptation model.

Diagnostics are data: nothing here raises on a bad model.
"""

from __future__ import annotations

from collections import Counter
from itertools import combinations

from ..bundle import AdaptationModel
from ..change import AddT, CycleDetected, ChangeError, SetT, expand_composite
from ..objectives import WEIGHT_TOLERANCE
from .diagnostics import NO_SPAN, Diagnostic


def _span(bundle: AdaptationModel, key: str):
    return bundle.spans.get(key, NO_SPAN)


def _writes(bundle: AdaptationModel, option_id: str) -> set[tuple[str, str]]:
    table = bundle.option_table
    try:
        leaves = expand_composite(table[option_id], table)
    except (ChangeError, KeyError):
        return set()
    out: set[tuple[str, str]] = set()
    for leaf in leaves:
        out |= table[leaf].writes()
    return out


def static_check(bundle: AdaptationModel) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def err(code, msg, key):
        diags.append(Diagnostic("error", code, msg, _span(bundle, key)))

    def warn(code, msg, key):
        diags.append(Diagnostic("warning", code, msg, _span(bundle, key)))

    table = bundle.option_table
    qualities = {q.quality_id for q in bundle.qualities}
    conditions = {c.condition_id for c in bundle.conditions}

    # dangling references (bundles can also be built without the resolver)
    for qid in bundle.preferences:
        if qid not in qualities:
            err("unknown-id", f"weight for unknown quality {qid!r}", "preferences")
    for r in bundle.rules:
        if r.condition_id not in conditions:
            err("unknown-id", f"rule {r.rule_id} names unknown condition {r.condition_id!r}", f"rule:{r.rule_id}")
        for a in r.actions:
            if a.option_id not in table:
                err("unknown-id", f"rule {r.rule_id} names unknown option {a.option_id!r}", f"rule:{r.rule_id}")
    for o in bundle.options:
        for sub in o.compose:
            if sub not in table:
                err("unknown-id", f"option {o.option_id} composes unknown option {sub!r}", f"option:{o.option_id}")

    if bundle.preferences:
        total = sum(bundle.preferences.values())
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            err("weight-sum", f"preference weights sum to {total!r}, expected 1", "preferences")
        for qid, w in bundle.preferences.items():
            if not 0.0 <= w <= 1.0:
                err("weight-range", f"weight {qid}={w} outside [0, 1]", "preferences")

    counts = Counter(c.priority for c in bundle.conditions)
    for c in bundle.conditions:
        if counts[c.priority] > 1:
            err("duplicate-priority", f"condition {c.condition_id} shares priority {c.priority}", f"condition:{c.condition_id}")

    for o in bundle.options:
        if o.compose:
            try:
                expand_composite(o, table)
            except CycleDetected as exc:
                err("composite-cycle", f"composite cycle: {exc}", f"option:{o.option_id}")
            except ChangeError:
                pass

    mm = bundle.metamodel
    if mm is not None:
        for o in bundle.options:
            var_types = {n.var: n.type for n in o.pre.nodes}
            for t in o.effect:
                if isinstance(t, AddT):
                    var_types[t.var] = t.type
                    written = [(t.type, n) for n, _ in t.attrs]
                elif isinstance(t, SetT):
                    written = [(var_types.get(t.var), t.attr)]
                else:
                    continue
                for ntype, attr in written:
                    decl = mm.attr(ntype, attr) if ntype else None
                    if decl is not None and decl.sensor:
                        err("sensor-write", f"option {o.option_id} writes sensor-owned {ntype}.{attr}", f"option:{o.option_id}")

    by_condition: dict[str, list] = {}
    for r in bundle.rules:
        if r.enabled:
            by_condition.setdefault(r.condition_id, []).append(r)
    for cid, rules in by_condition.items():
        for a, b in combinations(rules, 2):
            wa = set().union(*(_writes(bundle, x.option_id) for x in a.actions if x.option_id in table))
            wb = set().union(*(_writes(bundle, x.option_id) for x in b.actions if x.option_id in table))
            shared = sorted(wa & wb)
            if shared:
                what = ", ".join(f"{v}.{n}" for v, n in shared)
                warn("rule-overlap", f"rules {a.rule_id} and {b.rule_id} on {cid} both write {what}", f"rule:{b.rule_id}")

    reachable: set[str] = set()
    for r in bundle.rules:
        for a in r.actions:
            if a.option_id not in table:
                continue
            reachable.add(a.option_id)
            try:
                reachable |= set(expand_composite(table[a.option_id], table))
            except ChangeError:
                pass
    eligible = {o.option_id for o in bundle.planner_options()}
    for o in bundle.options:
        if o.option_id not in reachable and o.option_id not in eligible:
            warn("unreachable-option", f"option {o.option_id} is used by no rule and the planner cannot supply its parameters", f"option:{o.option_id}")
    return diags
