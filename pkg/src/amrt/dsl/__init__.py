"""The ``.adm`` adaptation-model language."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping, Sequence

from ..bundle import AdaptationModel
from ..model import Metamodel
from .checker import static_check
from .diagnostics import AdmError, Diagnostic, Span
from .parser import FileAst, parse
from .resolver import resolve
from .serializer import serialize

__all__ = [
    "AdmError",
    "Diagnostic",
    "FileAst",
    "Span",
    "load_bundle",
    "parse",
    "resolve",
    "serialize",
    "static_check",
]


def load_bundle(paths: Sequence[str | Path], metamodel: Metamodel, overrides: Mapping[str, Any] | None = None) -> AdaptationModel:
    """Parse and resolve ``.adm`` files; syntax errors from all files are reported together."""
    asts, errors = [], []
    for path in paths:
        try:
            asts.append(parse(Path(path).read_text(encoding="utf-8"), str(path)))
        except AdmError as exc:
            errors += exc.diagnostics
    if errors:
        raise AdmError(errors)
    return resolve(asts, metamodel, overrides)
