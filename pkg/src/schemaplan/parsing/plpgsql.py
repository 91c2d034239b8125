"""Procedure body parsing.

Understands DECLARE blocks, embedded SQL statements, assignments, RETURN,
and IF/ELSIF/ELSE conditions. Anything else is scanned for identifiers so
references are still reified even where the statement structure is not
modeled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SqlSyntaxError
from ..model import Span
from .lexer import IDENT, OP, Token, tokenize
from .queries import IdentUse, ParsedClause, ParsedQuery, parse_query
from ..model import ClauseKind

_QUERY_HEADS = ("SELECT", "INSERT", "UPDATE", "DELETE", "WITH")
_SKIP_HEADS = ("END", "ELSE", "BEGIN", "LOOP", "EXIT", "CONTINUE")


@dataclass
class ParsedBody:
    variables: list[tuple[str, str, Span]] = field(default_factory=list)
    queries: list[ParsedQuery] = field(default_factory=list)
    loose_uses: list[IdentUse] = field(default_factory=list)


def parse_body(text: str) -> ParsedBody:
    tokens = tokenize(text)
    body = ParsedBody()
    i = 0
    if i < len(tokens) and tokens[i].is_kw("DECLARE"):
        begin_at = next((k for k, t in enumerate(tokens) if t.is_kw("BEGIN")), None)
        if begin_at is None:
            raise SqlSyntaxError("procedure body lacks BEGIN", span=(0, len(text)))
        _parse_declarations(tokens[1:begin_at], body)
        i = begin_at
    if i < len(tokens) and tokens[i].is_kw("BEGIN"):
        i += 1
    statements = _split_statements(tokens[i:])
    for stmt in statements:
        _dispatch(stmt, body)
    return body


def _parse_declarations(tokens: list[Token], body: ParsedBody) -> None:
    for entry in _split_on_semicolon(tokens):
        if not entry:
            continue
        name_tok = entry[0]
        if name_tok.kind != IDENT:
            raise SqlSyntaxError("expected variable name", span=(name_tok.start, name_tok.end))
        assign_at = next(
            (k for k, t in enumerate(entry) if t.kind == OP and t.text in (":=", "=")), None
        )
        type_tokens = entry[1:assign_at] if assign_at else entry[1:]
        if not type_tokens:
            raise SqlSyntaxError("variable lacks a type", span=(name_tok.start, name_tok.end))
        type_text = " ".join(t.text for t in type_tokens)
        body.variables.append((name_tok.text, type_text, Span(name_tok.start, name_tok.end)))
        if assign_at is not None:
            _scan_loose(entry[assign_at + 1 :], body)


def _split_on_semicolon(tokens: list[Token]) -> list[list[Token]]:
    parts: list[list[Token]] = []
    cur: list[Token] = []
    depth = 0
    for tok in tokens:
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
        if depth == 0 and tok.kind == OP and tok.text == ";":
            parts.append(cur)
            cur = []
            continue
        cur.append(tok)
    if cur:
        parts.append(cur)
    return parts


_split_statements = _split_on_semicolon


def _dispatch(stmt: list[Token], body: ParsedBody) -> None:
    if not stmt:
        return
    head = stmt[0]
    if head.is_kw(*_QUERY_HEADS):
        body.queries.append(parse_query(stmt))
        return
    if head.is_kw("RETURN", "PERFORM", "RAISE"):
        _scan_loose(stmt[1:], body)
        return
    if head.is_kw("IF", "ELSIF", "WHILE"):
        then_at = next(
            (k for k, t in enumerate(stmt) if t.is_kw("THEN", "LOOP") and _depth(stmt, k) == 0),
            len(stmt),
        )
        _scan_loose(stmt[1:then_at], body)
        if then_at < len(stmt):
            _dispatch(stmt[then_at + 1 :], body)
        return
    if head.is_kw(*_SKIP_HEADS):
        if len(stmt) > 1 and stmt[1].is_kw("IF", "LOOP"):
            _dispatch(stmt[2:], body)
        elif head.is_kw("ELSE"):
            _dispatch(stmt[1:], body)
        return
    if len(stmt) >= 2 and stmt[1].kind == OP and stmt[1].text in (":=", "="):
        _scan_loose([stmt[0]], body)
        _scan_loose(stmt[2:], body)
        return
    _scan_loose(stmt, body)


def _depth(tokens: list[Token], idx: int) -> int:
    depth = 0
    for t in tokens[:idx]:
        if t.kind == OP and t.text == "(":
            depth += 1
        elif t.kind == OP and t.text == ")":
            depth -= 1
    return depth


def _scan_loose(tokens: list[Token], body: ParsedBody) -> None:
    from .queries import _scan_expression  # shared expression walker

    bucket = ParsedClause(ClauseKind.WHERE, Span(0, 0))
    _scan_expression(bucket, tokens)
    body.loose_uses.extend(bucket.uses)
    body.queries.extend(bucket.subqueries)
