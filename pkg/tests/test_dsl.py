from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amrt.change import AddT, ConnectT, SetT
from amrt.dsl import AdmError, load_bundle, parse, resolve, serialize, static_check
from amrt.dsl.lexer import tokenize
from amrt.expr import Lit, Param

from conftest import DATA, shop_metamodel

HEAD = "adaptation X;\n"


def errors(text: str, mm) -> list[tuple[str, int, int]]:
    with pytest.raises(AdmError) as exc:
        resolve(parse(HEAD + text, "f.adm"), mm)
    return [(d.code, d.span.line, d.span.col) for d in exc.value.diagnostics]


def checked(text: str, mm) -> list[tuple[str, str]]:
    return [(d.severity, d.code) for d in static_check(resolve(parse(HEAD + text, "f.adm"), mm))]


def test_shipped_files_are_clean(mm):
    for names in (["shop_core.adm"], ["shop_core.adm", "shop_rules.adm"], ["shop_core.adm", "shop_rules.adm", "overload.adm"]):
        bundle = load_bundle([DATA / n for n in names], mm)
        assert [d for d in static_check(bundle) if d.severity == "error"] == []


def test_bundle_contents(bundle):
    assert bundle.name == "ShopCore"
    assert [c.condition_id for c in bundle.conditions] == ["FailedComp", "HighRT"]
    assert [o.option_id for o in bundle.options] == ["RestartComponent", "AddReplica"]
    assert [r.rule_id for r in bundle.rules] == ["RestartFailed"]
    high = bundle.conditions[1]
    # the global parameter is folded into the predicate
    assert high.pattern.where[0].right == Lit(500.0)
    replica = bundle.options[1]
    assert isinstance(replica.effect[0], AddT) and isinstance(replica.effect[1], ConnectT)


def test_lexer_tokens():
    toks, errs = tokenize('c -deployedOn-> s where c.rt >= 1.5 // note\n"x"', "f")
    assert errs == []
    assert [t.text for t in toks][:8] == ["c", "-", "deployedOn", "->", "s", "where", "c", "."]
    assert toks[-2].kind == "str" and toks[-1].kind == "eof"


def test_syntax_error_positions(mm):
    assert errors("param A: float = 1.0\nparam B: int = 2;", mm) == [("syntax", 3, 1)]
    assert errors('condition C priority 1 lane fast { Component c where c.rt > 1 $ }', mm) == [("syntax", 2, 63)]


def test_recovery_reports_every_declaration(mm):
    text = "param A float = 1.0;\ncondition C priority x lane fast { Component c }\nrule R: when do;"
    assert [e[:2] for e in errors(text, mm)] == [("syntax", 2), ("syntax", 3), ("syntax", 4)]


def test_resolution_errors(mm):
    assert errors("condition C priority 1 lane fast { Robot r }", mm) == [("unknown-type", 2, 36)]
    assert errors("condition C priority 1 lane fast { Component c where c.speed > 1 }", mm)[0][0] == "unknown-attribute"
    assert errors("condition C priority 1 lane fast { Component c where c.rt > LIMIT }", mm)[0][0] == "unknown-id"
    assert errors('condition C priority 1 lane fast { Component c where c.rt > "x" }', mm)[0][0] == "kind-mismatch"
    dup = "condition C priority 1 lane fast { Component c }\ncondition C priority 2 lane fast { Component c }"
    assert errors(dup, mm)[0][0] == "duplicate-id"
    assert [e[0] for e in errors("rule R: when Nope do Nothing;", mm)] == ["unknown-id", "unknown-id"]


def test_effect_outside_option(mm):
    assert errors('condition C priority 1 lane fast { Component c }\neffect set c.state = "RUNNING";', mm)[0][0] == "side-effect"


def test_static_checks(mm):
    assert checked("condition C priority 1 lane fast { Component c }\ncondition D priority 1 lane slow { Server s }", mm) == [
        ("error", "duplicate-priority"),
        ("error", "duplicate-priority"),
    ]
    assert checked("option A() { pre Component @c; effect set c.rt = 1.0; post true; cost 1; }", mm) == [("error", "sensor-write")]
    weights = "quality q { metric avg(Component.rt); direction minimize; bounds [0, 10]; }\npreferences { q = 0.5; }"
    assert checked(weights, mm) == [("error", "weight-sum")]
    cycle = "option A() { pre Component @c; compose B; post true; cost 0; }\noption B() { pre Component @c; compose A; post true; cost 0; }"
    assert ("error", "composite-cycle") in checked(cycle, mm)
    lonely = 'option A(k: float) { pre Component @c; effect set c.state = "RUNNING"; post true; cost 1; }'
    assert checked(lonely, mm) == [("warning", "unreachable-option")]


def test_rule_overlap_warning(mm):
    text = """
condition F priority 1 lane fast { Component @c where c.state = "FAILED" }
option Up() { pre Component @c; effect set c.state = "RUNNING"; post true; cost 1; }
option Down() { pre Component @c; effect set c.state = "FAILED"; post true; cost 1; }
rule R1: when F do Up;
rule R2: when F do Down;
"""
    assert checked(text, mm) == [("warning", "rule-overlap")]


def test_option_parameters_and_rule_arguments(mm):
    text = """
param DEFAULT_STATE: string = "RUNNING";
condition F priority 1 lane fast { Component @c where c.state = "FAILED" }
option SetState(s: string) { pre Component @c; effect set c.state = s; post c.state = s; cost 1; }
option Revive(s: string = "RUNNING") { pre Component @c where c.state != s; effect set c.state = s; post true; cost 1; }
rule R: when F do SetState(DEFAULT_STATE);
"""
    b = resolve(parse(HEAD + text, "f.adm"), mm)
    set_state, revive = b.options
    assert set_state.effect == (SetT("c", "state", Param("s")),)
    assert b.rules[0].actions[0].args == (("s", "RUNNING"),)
    assert [o.option_id for o in b.planner_options()] == ["Revive"]
    assert static_check(b) == []


def test_param_override(mm):
    b = load_bundle([DATA / "shop_core.adm"], mm, overrides={"MAX_RT": 300.0})
    assert b.conditions[1].pattern.where[0].right == Lit(300.0)


def test_diagnostic_format(mm):
    with pytest.raises(AdmError) as exc:
        resolve(parse(HEAD + "condition C priority 1 lane fast { Robot r }", "shop.adm"), mm)
    assert str(exc.value.diagnostics[0]) == "shop.adm:2:36: error: unknown node type 'Robot'"


def test_serialize_round_trip_shipped(mm):
    b = load_bundle([DATA / n for n in ("shop_core.adm", "shop_rules.adm", "overload.adm")], mm)
    text = serialize(b)
    again = resolve(parse(text, "rt.adm"), mm)
    assert again == b
    assert serialize(again) == text


# -- generated bundles ---------------------------------------------------------------

STATES = ('"RUNNING"', '"FAILED"')


def _cmp(rng: random.Random, comps: list[str], params: list[str]) -> str:
    c = rng.choice(comps)
    roll = rng.random()
    if roll < 0.3:
        return f"{c}.state {rng.choice(['=', '!='])} {rng.choice(STATES)}"
    if roll < 0.5 and params:
        return f"{c}.rt {rng.choice(['<', '>='])} {rng.choice(params)}"
    if roll < 0.7 and len(comps) > 1:
        a, b = rng.sample(comps, 2)
        return f"{a} != {b}"
    return f"{c}.rt {rng.choice(['>', '<=', '='])} {rng.randrange(0, 1000, 50)}.0"


def _pattern(rng: random.Random, params: list[str], anchored: bool) -> tuple[str, list[str]]:
    comps = [f"c{i}" for i in range(rng.randint(1, 2))]
    parts = [f"Component {'@' if anchored and i == 0 else ''}{v}" for i, v in enumerate(comps)]
    if rng.random() < 0.5:
        parts.append("Server s")
        parts.append(f"{comps[0]} -deployedOn-> s")
    text = ", ".join(parts)
    conds = [_cmp(rng, comps, params) for _ in range(rng.randint(0, 2))]
    if conds:
        text += " where " + " and ".join(conds)
    if rng.random() < 0.2:
        text += f" not {{ Component z, {comps[0]} -connects-> z where z.state = \"FAILED\" }}"
    return text, comps


def random_adm(rng: random.Random) -> str:
    params = [f"P{i}" for i in range(rng.randint(0, 2))]
    out = [HEAD]
    out += [f"param {p}: float = {rng.randrange(100, 900, 100)}.0;" for p in params]
    out.append('quality perf { metric avg(Component.rt where state = "RUNNING"); direction minimize; bounds [0, 1000]; }')
    out.append('quality avail { metric fraction(Component where state = "RUNNING"); direction maximize; bounds [0, 1]; }')
    w = rng.choice([0.25, 0.5, 0.75])
    out.append(f"preferences {{ perf = {w}; avail = {1 - w}; }}")
    if rng.random() < 0.5:
        out.append('goal NoFailed { forbid Component c where c.state = "FAILED" }')
    conds = []
    for i in range(rng.randint(1, 3)):
        body, _ = _pattern(rng, params, anchored=True)
        trig = rng.choice(["", " on (attr-changed, state)", " on (node-added) on (attr-changed, rt)"])
        out.append(f"condition K{i} priority {i * 10} lane {rng.choice(['fast', 'slow'])}{trig} {{ {body} }}")
        conds.append(f"K{i}")
    opts = []
    for i in range(rng.randint(1, 3)):
        body, comps = _pattern(rng, params, anchored=True)
        c = comps[0]
        effect = rng.choice(
            [
                f'set {c}.state = "RUNNING"',
                f"add r : Component clone {c}, connect r deployedOn s" if "Server s" in body else f'set {c}.state = "FAILED"',
                f"remove {c}",
            ]
        )
        post = "true" if not effect.startswith("set") else effect[4:]
        inv = " invariant Component a where a.state = \"FAILED\";" if rng.random() < 0.3 else ""
        benefit = f" benefit {{ avail = {rng.choice([0.1, 0.3])}; }}" if rng.random() < 0.5 else ""
        out.append(f"option O{i}() {{ pre {body}; effect {effect}; post {post};{inv} cost {rng.choice([0, 1, 2.5])};{benefit} }}")
        opts.append(f"O{i}")
    if len(opts) > 1 and rng.random() < 0.5:
        out.append(f"option Both() {{ pre Component @c0; compose {opts[0]}, {opts[1]}; post true; cost 3; }}")
    for i in range(rng.randint(0, 2)):
        out.append(f"rule R{i}: when {rng.choice(conds)} do {rng.choice(opts)};")
    return "\n".join(out) + "\n"


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_serialize_round_trip_generated(seed):
    mm = shop_metamodel()
    text = random_adm(random.Random(seed))
    bundle = resolve(parse(text, "gen.adm"), mm)
    printed = serialize(bundle)
    again = resolve(parse(printed, "printed.adm"), mm)
    assert again == bundle
    assert serialize(again) == printed
