"""Canonical ``.adm`` text for a resolved bundle.

Declarations come out grouped by kind (params, qualities, preferences,
goals, conditions, options, rules). Parameter uses were replaced by their
values during resolution, so they are printed as literals.
"""

from __future__ import annotations

from ..bundle import AdaptationModel
from ..expr import format_conjunction, format_literal
from ..pattern import format_pattern


def _num(x: float) -> str:
    return format_literal(x)


def _weights(items) -> str:
    return "{ " + " ".join(f"{k} = {_num(v)};" for k, v in items) + " }"


def serialize(bundle: AdaptationModel) -> str:
    out = [f"adaptation {bundle.name};", ""]
    for p in bundle.params:
        out.append(f"param {p.name}: {p.kind} = {format_literal(p.value)};")
    for q in bundle.qualities:
        target = q.node_type + (f".{q.attribute}" if q.attribute else "")
        if q.where:
            target += " where " + format_conjunction(q.where)
        out.append(f"quality {q.quality_id} {{")
        out.append(f"  metric {q.aggregator}({target});")
        out.append(f"  direction {q.direction};")
        out.append(f"  bounds [{_num(q.lo)}, {_num(q.hi)}];")
        out.append("}")
    if bundle.preferences:
        out.append("preferences " + _weights(bundle.preferences.items()))
    for g in bundle.goals:
        out.append(f"goal {g.goal_id} {{ {g.kind} {format_pattern(g.pattern)} }}")
    for c in bundle.conditions:
        head = f"condition {c.condition_id} priority {c.priority} lane {c.lane}"
        for t in c.triggers:
            head += f" on ({t.kind}" + (f", {t.attribute}" if t.attribute else "") + ")"
        out.append(f"{head} {{ {format_pattern(c.pattern)} }}")
    for o in bundle.options:
        params = ", ".join(
            f"{p.name}: {p.kind}" + ("" if p.default is None else f" = {format_literal(p.default)}") for p in o.params
        )
        out.append(f"option {o.option_id}({params}) {{")
        out.append(f"  pre {format_pattern(o.pre)};")
        if o.compose:
            out.append("  compose " + " ".join(o.compose) + ";")
        else:
            out.append("  effect " + ", ".join(str(t) for t in o.effect) + ";")
        out.append(f"  post {format_conjunction(o.post)};")
        for inv in o.invariants:
            out.append(f"  invariant {format_pattern(inv)};")
        out.append(f"  cost {_num(o.cost)};")
        if o.benefit:
            out.append("  benefit " + _weights(o.benefit.items()))
        out.append("}")
    for r in bundle.rules:
        actions = []
        for a in r.actions:
            text = a.option_id
            if a.args:
                # positional, in the option's parameter order
                opt = bundle.option_table.get(a.option_id)
                given = dict(a.args)
                names = [p.name for p in opt.params] if opt else sorted(given)
                vals = []
                for n in names:
                    if n not in given:
                        break
                    vals.append(format_literal(given[n]))
                text += "(" + ", ".join(vals) + ")"
            actions.append(text)
        out.append(f"rule {r.rule_id}: when {r.condition_id} do {' '.join(actions)};")
    return "\n".join(out) + "\n"
