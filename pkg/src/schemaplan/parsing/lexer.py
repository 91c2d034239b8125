"""Offset-preserving tokenizer for the supported SQL subset.

Comments and whitespace are skipped; string literals and dollar-quoted
bodies become single tokens, so their contents are never mistaken for
identifiers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import SqlSyntaxError

IDENT = "ident"
NUMBER = "number"
STRING = "string"
OP = "op"
DOLLAR = "dollar"

_MULTI_OPS = ("::", ":=", "<=", ">=", "<>", "!=", "||")
_IDENT_START = re.compile(r"[A-Za-z_]")
_IDENT_BODY = re.compile(r"[A-Za-z0-9_$]")
_DOLLAR_TAG = re.compile(r"\$[A-Za-z_]*\$")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str  # identifiers: case-folded unless quoted
    start: int
    end: int
    quoted: bool = False

    @property
    def upper(self) -> str:
        return self.text.upper()

    def is_kw(self, *words: str) -> bool:
        return self.kind == IDENT and not self.quoted and self.upper in words


def tokenize(text: str, base: int = 0) -> list[Token]:
    """Tokenize text; offsets are shifted by base for absolute addressing."""
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "-" and text.startswith("--", i):
            nl = text.find("\n", i)
            i = n if nl == -1 else nl + 1
            continue
        if ch == "/" and text.startswith("/*", i):
            close = text.find("*/", i + 2)
            if close == -1:
                raise SqlSyntaxError("unterminated block comment", span=(base + i, base + n))
            i = close + 2
            continue
        if ch == "'":
            j = i + 1
            while j < n:
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        j += 2
                        continue
                    break
                j += 1
            if j >= n:
                raise SqlSyntaxError("unterminated string literal", span=(base + i, base + n))
            tokens.append(Token(STRING, text[i : j + 1], base + i, base + j + 1))
            i = j + 1
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while j < n:
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            if j >= n:
                raise SqlSyntaxError("unterminated quoted identifier", span=(base + i, base + n))
            tokens.append(Token(IDENT, "".join(buf), base + i, base + j + 1, quoted=True))
            i = j + 1
            continue
        if ch == "$":
            m = _DOLLAR_TAG.match(text, i)
            if m:
                tag = m.group(0)
                close = text.find(tag, m.end())
                if close == -1:
                    raise SqlSyntaxError("unterminated dollar-quoted body", span=(base + i, base + n))
                tokens.append(Token(DOLLAR, text[i : close + len(tag)], base + i, base + close + len(tag)))
                i = close + len(tag)
                continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            tokens.append(Token(NUMBER, text[i:j], base + i, base + j))
            i = j
            continue
        if _IDENT_START.match(ch):
            j = i + 1
            while j < n and _IDENT_BODY.match(text[j]):
                j += 1
            raw = text[i:j]
            tokens.append(Token(IDENT, raw.lower(), base + i, base + j))
            i = j
            continue
        for op in _MULTI_OPS:
            if text.startswith(op, i):
                tokens.append(Token(OP, op, base + i, base + len(op) + i))
                i += len(op)
                break
        else:
            tokens.append(Token(OP, ch, base + i, base + i + 1))
            i += 1
    return tokens


class TokenStream:
    """Cursor over a token list with small lookahead helpers."""

    def __init__(self, tokens: list[Token], text_end: int):
        self.tokens = tokens
        self.pos = 0
        self.text_end = text_end

    def peek(self, offset: int = 0) -> Token | None:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise SqlSyntaxError("unexpected end of statement", span=(self.text_end, self.text_end))
        self.pos += 1
        return tok

    def accept_kw(self, *words: str) -> Token | None:
        tok = self.peek()
        if tok is not None and tok.is_kw(*words):
            self.pos += 1
            return tok
        return None

    def expect_kw(self, *words: str) -> Token:
        tok = self.accept_kw(*words)
        if tok is None:
            got = self.peek()
            where = (got.start, got.end) if got else (self.text_end, self.text_end)
            raise SqlSyntaxError(
                f"expected {' or '.join(words)}, got {got.text if got else 'end of input'}",
                span=where,
            )
        return tok

    def accept_op(self, op: str) -> Token | None:
        tok = self.peek()
        if tok is not None and tok.kind == OP and tok.text == op:
            self.pos += 1
            return tok
        return None

    def expect_op(self, op: str) -> Token:
        tok = self.accept_op(op)
        if tok is None:
            got = self.peek()
            where = (got.start, got.end) if got else (self.text_end, self.text_end)
            raise SqlSyntaxError(
                f"expected '{op}', got {got.text if got else 'end of input'}", span=where
            )
        return tok

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != IDENT:
            where = (tok.start, tok.end) if tok else (self.text_end, self.text_end)
            raise SqlSyntaxError("expected identifier", span=where)
        self.pos += 1
        return tok
