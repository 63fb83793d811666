"""Opt-in runtime assertions: read-only operations leave the model digest
unchanged, and gated commits leave the model conformant.

Enabled by ``AMRT_CHECK_PURITY=1`` or :func:`enable`; the test suite turns
it on for the whole session.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from .model import ReflectionModel, snapshot_digest, validate_conformance


class PurityViolation(AssertionError):
    pass


class GateViolation(AssertionError):
    pass


_enabled = os.environ.get("AMRT_CHECK_PURITY") == "1"
stats = {"pure_checks": 0, "commit_checks": 0}


def enable(flag: bool = True) -> None:
    global _enabled
    _enabled = flag


def enabled() -> bool:
    return _enabled


@contextmanager
def pure(model: ReflectionModel, what: str):
    if not _enabled:
        yield
        return
    before = snapshot_digest(model)
    yield
    if snapshot_digest(model) != before:
        raise PurityViolation(f"{what} changed the model digest")
    stats["pure_checks"] += 1


def check_commit(model: ReflectionModel, invariant_matches=()) -> None:
    if not _enabled:
        return
    problems = validate_conformance(model)
    if problems:
        raise GateViolation(f"committed model does not conform: {problems}")
    if any(invariant_matches):
        raise GateViolation("committed model violates an option invariant")
    stats["commit_checks"] += 1
