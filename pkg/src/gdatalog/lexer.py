"""Tokenizer shared by the program, query and event parsers."""

from __future__ import annotations

import json
import re
from typing import NamedTuple

from .errors import ParseError

IDENT = "identifier"
INT = "integer"
REAL = "real"
STRING = "string"
EOF = "end of input"

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<real>\d+\.\d+(?:[eE][+-]?\d+)?)
  | (?P<int>\d+)
  | (?P<dstring>"(?:[^"\\\n]|\\.)*")
  | (?P<sstring>'(?:[^'\\\n]|\\.)*')
  | (?P<ident>(?:[^\W\d]|°)(?:\w|°)*)
  | (?P<op>:-|<=|>=|!=|<>|≤|≥|≠|[()\[\],.=<>+\-*/×÷−:#;])
    """,
    re.VERBOSE,
)

_OP_ALIASES = {"≤": "<=", "≥": ">=", "≠": "!=", "<>": "!=", "×": "*", "÷": "/", "−": "-"}


class Token(NamedTuple):
    kind: str
    text: str
    value: object
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "real":
            tokens.append(Token(REAL, s, float(s), line, col))
        elif kind == "int":
            tokens.append(Token(INT, s, int(s), line, col))
        elif kind == "dstring":
            tokens.append(Token(STRING, s, _decode_string(s, line, col), line, col))
        elif kind == "sstring":
            inner = s[1:-1].replace("\\'", "'").replace('"', '\\"')
            tokens.append(Token(STRING, s, _decode_string('"' + inner + '"', line, col), line, col))
        elif kind == "ident":
            tokens.append(Token(IDENT, s, s, line, col))
        elif kind == "op":
            op = _OP_ALIASES.get(s, s)
            tokens.append(Token(op, s, op, line, col))
        newlines = s.count("\n")
        if newlines:
            line += newlines
            line_start = pos + s.rindex("\n") + 1
        pos = m.end()
    col = pos - line_start + 1
    tokens.append(Token(EOF, "", None, line, col))
    return tokens


def _decode_string(s: str, line: int, col: int) -> str:
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        raise ParseError(f"invalid escape in string literal {s}", line, col) from None


class TokenStream:
    """Cursor over a token list with expected-set bookkeeping for errors."""

    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self._expected: set[str] = set()

    @property
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def peek_at(self, offset: int) -> Token:
        i = min(self.pos + offset, len(self.tokens) - 1)
        return self.tokens[i]

    def at(self, *kinds: str) -> bool:
        self._expected.update(kinds)
        return self.peek.kind in kinds

    def at_keyword(self, *words: str) -> bool:
        self._expected.update(w.upper() for w in words)
        tok = self.peek
        return tok.kind == IDENT and tok.text.upper() in {w.upper() for w in words}

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != EOF:
            self.pos += 1
        self._expected.clear()
        return tok

    def accept(self, *kinds: str) -> Token | None:
        if self.at(*kinds):
            return self.advance()
        return None

    def accept_keyword(self, *words: str) -> Token | None:
        if self.at_keyword(*words):
            return self.advance()
        return None

    def expect(self, *kinds: str) -> Token:
        if self.at(*kinds):
            return self.advance()
        self.fail()

    def expect_keyword(self, word: str) -> Token:
        if self.at_keyword(word):
            return self.advance()
        self.fail()

    def fail(self, message: str | None = None):
        tok = self.peek
        what = "end of input" if tok.kind == EOF else f"token {tok.text!r}"
        raise ParseError(message or f"unexpected {what}", tok.line, tok.column,
                         frozenset(self._expected))
