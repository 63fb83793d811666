"""Requirement assessment matrix: two published approaches plus this runtime.

Support levels: ``--`` none, ``M`` medium, ``F`` full. For the self column,
medium means the feature exists with a documented restriction.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping


class SupportLevel(enum.Enum):
    NONE = "--"
    MEDIUM = "M"
    FULL = "F"

    @classmethod
    def parse(cls, text: str) -> "SupportLevel":
        for level in cls:
            if level.value == text.strip():
                return level
        raise ValueError(f"unknown support level {text!r}")


class AssessmentError(KeyError):
    pass


APPROACHES = ("stitch", "story-diagrams", "self")
CATEGORIES = ("functional-LR", "non-functional-LR", "FR")
LEGEND = "legend: -- = no support, M = medium support, F = full support"


@dataclass(frozen=True)
class Requirement:
    req_id: str
    name: str
    category: str
    summary: str


# (id, name, category, summary, stitch, story diagrams)
_PUBLISHED = [
    ("LR-Goals", "Goals", "functional-LR", "state what the system should achieve", "--", "F"),
    ("LR-QualityDimensions", "Quality Dimensions", "functional-LR", "measurable qualities of the system", "F", "F"),
    ("LR-Preferences", "Preferences", "functional-LR", "relative weight of the qualities", "F", "F"),
    ("LR-ReflectionModels", "Access to Reflection Models", "functional-LR", "read the runtime model of the system", "M", "F"),
    ("LR-Events", "Events", "functional-LR", "react to changes reported by the monitor", "M", "F"),
    ("LR-EvaluationConditions", "Evaluation Conditions", "functional-LR", "checks that reveal a need to adapt", "F", "F"),
    ("LR-EvaluationResults", "Evaluation Results", "functional-LR", "outcomes of checks available to later steps", "--", "F"),
    ("LR-AdaptationOptions", "Adaptation Options", "functional-LR", "the possible changes to the configuration", "F", "F"),
    ("LR-AdaptationConditions", "Adaptation Conditions", "functional-LR", "when an option may be applied", "F", "F"),
    ("LR-CostsBenefits", "Costs and Benefits", "functional-LR", "price and payoff of each option", "F", "F"),
    ("LR-History", "History", "functional-LR", "record of past decisions", "M", "F"),
    ("LR-Modularity", "Modularity", "non-functional-LR", "models built from separate parts", "M", "F"),
    ("LR-Parameters", "Parameters", "non-functional-LR", "named values that tune a model", "M", "F"),
    ("LR-Reusability", "Reusability", "non-functional-LR", "parts usable in more than one model", "M", "M"),
    ("LR-SideEffects", "Side Effects", "non-functional-LR", "separate pure checks from changes", "--", "M"),
    ("LR-Formality", "Formality", "non-functional-LR", "precise semantics open to validation", "--", "M"),
    ("LR-EaseOfUse", "Ease of Use", "non-functional-LR", "declarative and approachable notation", "M", "F"),
    ("FR-Consistency", "Consistency", "FR", "changes keep the model and system valid", "M", "F"),
    ("FR-Reversibility", "Reversibility", "FR", "tentative changes can be undone", "--", "M"),
    ("FR-TimeScales", "Time Scales", "FR", "analysis at different rates", "--", "F"),
    ("FR-Incrementality", "Incrementality", "FR", "work proportional to what changed", "--", "M"),
    ("FR-Priorities", "Priorities", "FR", "ordering among competing concerns", "--", "F"),
    ("FR-Flexibility", "Flexibility", "FR", "models change while the loop runs", "--", "F"),
]

# Self column: level plus the evidence (test module or documented restriction).
_SELF = {
    "LR-Goals": ("F", "tests/test_objectives.py: require/forbid goals"),
    "LR-QualityDimensions": ("F", "tests/test_objectives.py: aggregated qualities"),
    "LR-Preferences": ("F", "tests/test_objectives.py: weight validation and utility"),
    "LR-ReflectionModels": ("F", "tests/test_model.py and tests/test_pattern.py"),
    "LR-Events": ("F", "tests/test_system.py: monitor events drive evaluation"),
    "LR-EvaluationConditions": ("F", "tests/test_evaluation.py"),
    "LR-EvaluationResults": ("F", "tests/test_evaluation.py: results annotate the model"),
    "LR-AdaptationOptions": ("F", "tests/test_change.py"),
    "LR-AdaptationConditions": ("F", "tests/test_change.py: preconditions and postconditions"),
    "LR-CostsBenefits": ("F", "tests/test_planner.py: cost-weighted scoring"),
    "LR-History": ("M", "tests/test_engine.py: recorded and queryable, not used for decisions"),
    "LR-Modularity": ("F", "tests/test_dsl.py: multi-file bundles"),
    "LR-Parameters": ("F", "tests/test_dsl.py: global and option parameters"),
    "LR-Reusability": ("M", "tests/test_dsl.py: files are reused by reference only, no templates"),
    "LR-SideEffects": ("F", "tests/test_dsl.py and the global purity guard"),
    "LR-Formality": ("M", "tests/test_dsl.py: static checks only, no model checking"),
    "LR-EaseOfUse": ("F", "src/amrt/data/*.adm"),
    "FR-Consistency": ("F", "tests/test_engine.py: consistency gate"),
    "FR-Reversibility": ("F", "tests/test_model.py: transaction rollback"),
    "FR-TimeScales": ("F", "tests/test_engine.py: fast and slow lanes"),
    "FR-Incrementality": ("F", "tests/test_evaluation.py: incremental equals full"),
    "FR-Priorities": ("F", "tests/test_engine.py: priority-ordered firing"),
    "FR-Flexibility": ("F", "tests/test_scenario.py: hot swap"),
}


@dataclass(frozen=True)
class AssessmentMatrix:
    requirements: tuple[Requirement, ...]
    cells: Mapping[tuple[str, str], tuple[SupportLevel, str]]

    def __post_init__(self) -> None:
        ids = {r.req_id for r in self.requirements}
        for approach, rid in self.cells:
            if approach not in APPROACHES or rid not in ids:
                raise AssessmentError(f"cell for unknown ({approach}, {rid})")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AssessmentMatrix):
            return NotImplemented
        return self.requirements == other.requirements and dict(self.cells) == dict(other.cells)

    def requirement(self, req_id: str) -> Requirement:
        for r in self.requirements:
            if r.req_id == req_id:
                return r
        raise AssessmentError(f"unknown requirement {req_id!r}")


def default_matrix() -> AssessmentMatrix:
    reqs = tuple(Requirement(i, n, c, s) for i, n, c, s, _, _ in _PUBLISHED)
    cells: dict[tuple[str, str], tuple[SupportLevel, str]] = {}
    for rid, _, _, _, stitch, sd in _PUBLISHED:
        cells["stitch", rid] = (SupportLevel.parse(stitch), "published assessment")
        cells["story-diagrams", rid] = (SupportLevel.parse(sd), "published assessment")
        level, why = _SELF[rid]
        cells["self", rid] = (SupportLevel.parse(level), why)
    return AssessmentMatrix(reqs, MappingProxyType(cells))


def assessment_lookup(matrix: AssessmentMatrix, approach: str, req_id: str) -> SupportLevel:
    if approach not in APPROACHES:
        raise AssessmentError(f"unknown approach {approach!r}")
    matrix.requirement(req_id)
    return matrix.cells[approach, req_id][0]


def render_assessment(matrix: AssessmentMatrix, fmt: str = "text", approaches: tuple[str, ...] = APPROACHES) -> str:
    for a in approaches:
        if a not in APPROACHES:
            raise AssessmentError(f"unknown approach {a!r}")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["requirement", "name", "category", "summary", *approaches, *(f"{a}-rationale" for a in approaches)])
        for r in matrix.requirements:
            cells = [matrix.cells[a, r.req_id] for a in approaches]
            w.writerow([r.req_id, r.name, r.category, r.summary, *(c[0].value for c in cells), *(c[1] for c in cells)])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    width = max(len(r.req_id) for r in matrix.requirements)
    head = f"{'requirement':<{width}}  " + "  ".join(f"{a:<14}" for a in approaches)
    lines = [head, "-" * len(head)]
    category = None
    for r in matrix.requirements:
        if r.category != category:
            category = r.category
            lines.append(f"[{category}]")
        levels = "  ".join(f"{matrix.cells[a, r.req_id][0].value:<14}" for a in approaches)
        lines.append(f"{r.req_id:<{width}}  {levels}".rstrip())
    lines.append(LEGEND)
    if "self" in approaches:
        lines.append("")
        lines.append("self rationale:")
        lines += [f"  {r.req_id}: {matrix.cells['self', r.req_id][1]}" for r in matrix.requirements]
    return "\n".join(lines) + "\n"


def parse_assessment_csv(text: str) -> AssessmentMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    approaches = [h for h in header[4:] if not h.endswith("-rationale")]
    reqs, cells = [], {}
    for row in body:
        rid, name, cat, summary = row[:4]
        reqs.append(Requirement(rid, name, cat, summary))
        levels = row[4 : 4 + len(approaches)]
        whys = row[4 + len(approaches) :]
        for a, lv, why in zip(approaches, levels, whys):
            cells[a, rid] = (SupportLevel.parse(lv), why)
    return AssessmentMatrix(tuple(reqs), MappingProxyType(cells))
