from __future__ import annotations

from pathlib import Path

import pytest

from amrt.assessment import (
    APPROACHES,
    AssessmentError,
    AssessmentMatrix,
    SupportLevel,
    assessment_lookup,
    default_matrix,
    parse_assessment_csv,
    render_assessment,
)

ROOT = Path(__file__).parent.parent

# Published cells in the row-major order of the original three-column table:
# (requirement, stitch, story diagrams).
PUBLISHED = """
LR-Goals -- F | LR-Events M F | LR-AdaptationConditions F F
LR-QualityDimensions F F | LR-EvaluationConditions F F | LR-CostsBenefits F F
LR-Preferences F F | LR-EvaluationResults -- F | LR-History M F
LR-ReflectionModels M F | LR-AdaptationOptions F F
LR-Modularity M F | LR-Parameters M F | LR-Reusability M M
LR-SideEffects -- M | LR-Formality -- M | LR-EaseOfUse M F
FR-Consistency M F | FR-Reversibility -- M | FR-TimeScales -- F
FR-Incrementality -- M | FR-Priorities -- F | FR-Flexibility -- F
"""


def published_cells() -> dict[tuple[str, str], str]:
    out = {}
    for chunk in PUBLISHED.replace("\n", "|").split("|"):
        if chunk.strip():
            rid, stitch, sd = chunk.split()
            out["stitch", rid] = stitch
            out["story-diagrams", rid] = sd
    return out


def test_published_cells_match():
    expected = published_cells()
    assert len(expected) == 46
    m = default_matrix()
    got = {(a, r): assessment_lookup(m, a, r).value for a, r in expected}
    assert got == expected


def test_every_requirement_has_three_cells():
    m = default_matrix()
    assert len(m.requirements) == 23
    assert len(m.cells) == 69
    cats = [r.category for r in m.requirements]
    assert cats == sorted(cats, key=("functional-LR", "non-functional-LR", "FR").index)


def test_self_column_cites_existing_evidence():
    m = default_matrix()
    for r in m.requirements:
        _, why = m.cells["self", r.req_id]
        path = why.split(":")[0].split(" and ")[0]
        assert list(ROOT.glob(path)), (r.req_id, why)


def test_medium_self_cells_state_a_restriction():
    m = default_matrix()
    medium = [r.req_id for r in m.requirements if m.cells["self", r.req_id][0] is SupportLevel.MEDIUM]
    assert medium == ["LR-History", "LR-Reusability", "LR-Formality"]
    for rid in medium:
        assert ":" in m.cells["self", rid][1]


def test_csv_round_trip():
    m = default_matrix()
    text = render_assessment(m, "csv")
    assert parse_assessment_csv(text) == m
    assert render_assessment(parse_assessment_csv(text), "csv") == text


def test_text_rendering():
    text = render_assessment(default_matrix(), approaches=("stitch", "story-diagrams"))
    lines = text.splitlines()
    assert lines[0].split() == ["requirement", "stitch", "story-diagrams"]
    assert "[non-functional-LR]" in lines
    assert lines[-1].startswith("legend:")
    assert "self rationale:" not in text
    row = next(line for line in lines if line.startswith("LR-Goals"))
    assert row.split() == ["LR-Goals", "--", "F"]


def test_lookup_errors():
    m = default_matrix()
    with pytest.raises(AssessmentError):
        assessment_lookup(m, "rainbow", "LR-Goals")
    with pytest.raises(AssessmentError):
        assessment_lookup(m, "stitch", "LR-Nope")
    with pytest.raises(AssessmentError):
        render_assessment(m, approaches=("acme",))
    with pytest.raises(ValueError):
        render_assessment(m, "xml")
    with pytest.raises(ValueError):
        SupportLevel.parse("P")


def test_matrix_rejects_stray_cells():
    m = default_matrix()
    with pytest.raises(AssessmentError):
        AssessmentMatrix(m.requirements, {("stitch", "LR-Nope"): (SupportLevel.FULL, "")})


def test_approaches_fixed():
    assert APPROACHES == ("stitch", "story-diagrams", "self")
