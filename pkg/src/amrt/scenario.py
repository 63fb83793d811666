"""Scenario files, the end-to-end runner, and the JSONL trace."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any

from .dsl import AdmError, load_bundle, static_check
from .engine import ENGINE_MODES, EngineState, FeedbackLoop, PlannerConfig
from .model import Metamodel
from .objectives import measure, utility
from .system import FAILED, ProjectionError, SimSystem, WorkloadSchedule, project

SCHEMA_VERSION = 1
TRACE_KINDS = ("event", "evaluation", "adaptation", "decision", "swap", "summary")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    metamodel_path: Path
    system: dict
    workload: WorkloadSchedule
    adm: list[Path]
    engine: str = "both"
    ticks: int = 20
    seed: int = 0
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    hot_swap: list[tuple[int, list[Path]]] = field(default_factory=list)
    load_noise: float = 0.0

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "ScenarioConfig":
        if d.get("schemaVersion") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schemaVersion {d.get('schemaVersion')!r}")
        try:
            cfg = cls(
                metamodel_path=base / d["metamodel"],
                system=d["system"],
                workload=WorkloadSchedule.from_dict(d.get("workload", {})),
                adm=[base / p for p in d["adm"]],
                engine=d.get("engine", "both"),
                ticks=int(d.get("ticks", 20)),
                seed=int(d.get("seed", 0)),
                planner=PlannerConfig.from_dict(d.get("planner", {})),
                hot_swap=[(int(h["tick"]), [base / p for p in h["adm"]]) for h in d.get("hotSwap", [])],
                load_noise=float(d.get("loadNoise", 0.0)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario: {exc!r}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def validate(self) -> None:
        if self.ticks < 1:
            raise ConfigError("ticks must be >= 1")
        if self.engine not in ENGINE_MODES:
            raise ConfigError(f"unknown engine {self.engine!r}")
        for p in [self.metamodel_path, *self.adm, *(q for _, ps in self.hot_swap for q in ps)]:
            if not p.is_file():
                raise ConfigError(f"missing file {p}")
        comps = self.system.get("components", {})
        servers = self.system.get("servers", {})
        for cid, c in comps.items():
            if c.get("host") not in servers:
                raise ConfigError(f"{cid}: unknown host {c.get('host')!r}")
        for a, b in self.system.get("connections", []):
            if a not in comps or b not in comps:
                raise ConfigError(f"connection {a}->{b} names an unknown component")
        for t, cid in self.workload.faults:
            if cid not in comps:
                raise ConfigError(f"fault at tick {t} names unknown component {cid!r}")
        for t, entries in self.workload.loads.items():
            for cid in entries:
                if cid not in comps:
                    raise ConfigError(f"load at tick {t} names unknown component {cid!r}")


def trace_line(tick: int, kind: str, payload: dict) -> str:
    return json.dumps({"tick": tick, "kind": kind, "payload": payload}, sort_keys=True, separators=(",", ":"))


@dataclass
class ScenarioOutcome:
    exit_code: int
    lines: list[str]
    summary: dict
    diagnostics: list = field(default_factory=list)

    @property
    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)


class _Recorder:
    """Collects trace lines and tracks failures and their repairs."""

    def __init__(self) -> None:
        self.lines: list[str] = []
        self.failed: dict[str, int] = {}
        self.repairs: list[dict[str, Any]] = []
        self.adaptations = 0

    def __call__(self, tick: int, kind: str, payload: dict) -> None:
        assert kind in TRACE_KINDS
        self.lines.append(trace_line(tick, kind, payload))
        if kind == "event" and payload.get("attribute") == "state" and payload.get("new") == FAILED:
            self.failed.setdefault(payload["elementId"], tick)
        elif kind == "adaptation":
            self.adaptations += 1
            for cmd in payload["commands"]:
                cid = cmd.get("component")
                if cmd["command"] == "Restart" and cid in self.failed:
                    failed_at = self.failed.pop(cid)
                    self.repairs.append({"element": cid, "failedAt": failed_at, "repairedAt": tick, "engine": payload["engine"]})


def _latency(repairs, engine: str) -> float | None:
    values = [r["repairedAt"] - r["failedAt"] for r in repairs if r["engine"] == engine]
    return fmean(values) if values else None


def run_scenario(config: ScenarioConfig, trace_path: str | Path | None = None) -> ScenarioOutcome:
    config.validate()
    mm = Metamodel.load(config.metamodel_path)
    try:
        bundle = load_bundle(config.adm, mm)
        swaps = {t: load_bundle(paths, mm) for t, paths in config.hot_swap}
    except AdmError as exc:
        return ScenarioOutcome(EXIT_CONFIG, [], {"error": "invalid adaptation model"}, exc.diagnostics)
    errors = [d for d in static_check(bundle) if d.severity == "error"]
    if errors:
        return ScenarioOutcome(EXIT_CONFIG, [], {"error": "invalid adaptation model"}, errors)

    sys = SimSystem.from_dict(config.system, seed=config.seed, load_noise=config.load_noise)
    model = project(sys, mm)
    rec = _Recorder()
    state = EngineState(bundle, config.planner, config.engine, trace=rec)
    loop = FeedbackLoop(sys, model, state, config.workload, swaps)
    exit_code = EXIT_OK
    note = None
    try:
        loop.run(config.ticks)
    except ProjectionError as exc:
        exit_code, note = EXIT_ABORT, f"monitor projection failed: {exc}"

    am = state.adaptation_model
    summary: dict[str, Any] = {
        "ticks": sys.clock,
        "finalUtility": utility(model, am.qualities, am.preferences),
        "qualities": {q.quality_id: measure(model, q) for q in am.qualities},
        "adaptations": rec.adaptations,
        "decisions": len(state.history),
        "repairs": rec.repairs,
        "unrepaired": sorted(rec.failed),
        "meanCoupledLatency": _latency(rec.repairs, "coupled"),
        "meanDecoupledLatency": _latency(rec.repairs, "decoupled"),
    }
    if note:
        summary["aborted"] = note
    rec(sys.clock, "summary", summary)
    outcome = ScenarioOutcome(exit_code, rec.lines, summary)
    if trace_path is not None:
        Path(trace_path).write_text(outcome.text, encoding="utf-8")
    return outcome
