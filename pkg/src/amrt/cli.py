"""Command line: ``amrt run``, ``amrt check``, ``amrt assess``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .assessment import APPROACHES, default_matrix, render_assessment
from .dsl import AdmError, load_bundle, static_check
from .engine import ENGINE_MODES
from .model import Metamodel
from .scenario import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, ConfigError, ScenarioConfig, run_scenario


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amrt", description="Self-adaptation runtime over a reflection model.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario and write its trace")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--trace", type=Path, help="JSONL trace output (default: stdout)")
    run.add_argument("--engine", choices=ENGINE_MODES)
    run.add_argument("--ticks", type=int)
    run.add_argument("--seed", type=int)

    check = sub.add_parser("check", help="parse, resolve and statically check .adm files")
    check.add_argument("adm", nargs="+", type=Path)
    check.add_argument("--metamodel", required=True, type=Path)

    assess = sub.add_parser("assess", help="print the requirement assessment matrix")
    assess.add_argument("--approach", choices=APPROACHES)
    assess.add_argument("--format", choices=("text", "csv"), default="text")
    return p


def _run(args) -> int:
    try:
        cfg = ScenarioConfig.load(args.scenario)
        if args.engine is not None:
            cfg.engine = args.engine
        if args.ticks is not None:
            cfg.ticks = args.ticks
        if args.seed is not None:
            cfg.seed = args.seed
        outcome = run_scenario(cfg, args.trace)
    except ConfigError as exc:
        print(f"amrt run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for d in outcome.diagnostics:
        print(d, file=sys.stderr)
    if args.trace is None:
        sys.stdout.write(outcome.text)
    else:
        print(json.dumps(outcome.summary, sort_keys=True), file=sys.stderr)
    return outcome.exit_code


def _check(args) -> int:
    for path in [args.metamodel, *args.adm]:
        if not path.is_file():
            print(f"amrt check: missing file {path}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        mm = Metamodel.load(args.metamodel)
    except (ValueError, KeyError) as exc:
        print(f"amrt check: bad metamodel: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        diags = static_check(load_bundle(args.adm, mm))
    except AdmError as exc:
        diags = exc.diagnostics
    for d in diags:
        print(d)
    return EXIT_CHECK if any(d.severity == "error" for d in diags) else EXIT_OK


def _assess(args) -> int:
    approaches = (args.approach,) if args.approach else APPROACHES
    sys.stdout.write(render_assessment(default_matrix(), args.format, approaches))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "check": _check, "assess": _assess}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
