from __future__ import annotations

import re
from dataclasses import dataclass

from .diagnostics import Diagnostic, Span

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|<=|>=|!=|[-{}()\[\];:,.=<>@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num | str | ident | op | eof
    text: str
    span: Span

    def is_(self, text: str) -> bool:
        return self.kind in ("ident", "op") and self.text == text


def tokenize(text: str, file: str = "<input>") -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    errors: list[Diagnostic] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        span = Span(file, line, pos - line_start + 1)
        if m is None:
            errors.append(Diagnostic("error", "syntax", f"unexpected character {text[pos]!r}", span))
            pos += 1
            continue
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tokens.append(Token(kind, chunk, span))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + chunk.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", Span(file, line, pos - line_start + 1)))
    return tokens, errors
