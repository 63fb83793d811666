from __future__ import annotations

from pathlib import Path

import pytest

from amrt import guard
from amrt.dsl import load_bundle
from amrt.model import Metamodel, ReflectionModel

DATA = Path(__file__).resolve().parents[1] / "src" / "amrt" / "data"

# Every evaluate_* and plan() call in the suite is checked for purity, and
# every gated commit for conformance.
guard.enable()


def shop_metamodel() -> Metamodel:
    return Metamodel.load(DATA / "shop_metamodel.json")


def m0(mm: Metamodel | None = None) -> ReflectionModel:
    m = ReflectionModel(mm or shop_metamodel())
    m.add_node("S1", "Server", capacity=100.0)
    for cid, ctype, rt in (("C1", "Shop", 200.0), ("C2", "Auth", 300.0), ("C3", "DB", 250.0)):
        m.add_node(cid, "Component", ctype=ctype, state="RUNNING", rt=rt, load=10.0)
        m.add_edge("deployedOn", cid, "S1")
    m.add_edge("connects", "C1", "C2")
    m.add_edge("connects", "C2", "C3")
    return m


def shop_bundle(*names: str):
    return load_bundle([DATA / n for n in (names or ("shop_core.adm", "shop_rules.adm"))], shop_metamodel())


@pytest.fixture
def mm() -> Metamodel:
    return shop_metamodel()


@pytest.fixture
def model(mm) -> ReflectionModel:
    return m0(mm)


@pytest.fixture
def bundle():
    return shop_bundle()


@pytest.fixture(scope="session", autouse=True)
def _purity_was_checked():
    yield
    assert guard.enabled()


# criterion number -> PASS/FAIL line, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
