"""CRUD query decomposition into clauses, sources, and identifier uses.

The parser is purely syntactic: it splits a query into clause segments,
records every identifier occurrence with its span and syntactic role, and
leaves binding to the resolver. Spans are relative to the source text of
the root entity (view query or procedure body).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SqlSyntaxError
from ..model import ClauseKind, QueryKind, Span
from .lexer import IDENT, NUMBER, OP, STRING, Token

# Words never treated as column/variable references in expressions.
EXPR_KEYWORDS = {
    "AND", "OR", "NOT", "NULL", "TRUE", "FALSE", "IN", "IS", "LIKE", "ILIKE",
    "SIMILAR", "BETWEEN", "EXISTS", "CASE", "WHEN", "THEN", "ELSE", "END",
    "AS", "DISTINCT", "ASC", "DESC", "ALL", "ANY", "SOME", "ESCAPE", "BY",
    "NULLS", "FIRST", "LAST", "COLLATE", "ON", "USING", "VALUES", "ROW",
    "ROWS", "ONLY", "NEXT", "INTERVAL", "CURRENT_DATE", "CURRENT_TIMESTAMP",
    "CURRENT_TIME", "LOCALTIME", "LOCALTIMESTAMP", "DEFAULT",
}

# Built-in functions that never become stored-procedure calls.
BUILTIN_FUNCTIONS = {
    "abs", "array_agg", "avg", "bool_and", "bool_or", "btrim", "cast", "ceil",
    "ceiling", "char_length", "coalesce", "concat", "count", "current_database",
    "current_schema", "currval", "date_part", "date_trunc", "every", "extract",
    "floor", "generate_series", "greatest", "initcap", "json_agg", "justify_days",
    "least", "left", "length", "lower", "lpad", "ltrim", "max", "md5", "min",
    "mod", "nextval", "now", "nullif", "position", "power", "random", "rank",
    "regexp_replace", "replace", "right", "round", "row_number", "rpad", "rtrim",
    "setval", "split_part", "sqrt", "string_agg", "strpos", "substr", "substring",
    "sum", "to_char", "to_date", "to_number", "to_timestamp", "translate", "trim",
    "trunc", "upper",
}

_JOIN_INTRO = {"JOIN", "LEFT", "RIGHT", "FULL", "INNER", "CROSS", "OUTER"}
_SET_OPS = {"UNION": ClauseKind.UNION, "INTERSECT": ClauseKind.INTERSECT, "EXCEPT": ClauseKind.EXCEPT}


@dataclass(frozen=True)
class IdentPart:
    name: str
    quoted: bool
    span: Span


@dataclass
class IdentUse:
    """One identifier occurrence: a dotted chain plus its syntactic role."""

    use: str  # source | call | value | cast | wildcard | into_target |
    #           insert_table | insert_col | set_col | update_table
    parts: list[IdentPart]
    arg_count: int | None = None  # calls only


@dataclass
class SelectItem:
    span: Span
    output_name: str | None
    name_span: Span | None  # token that names the output column
    alias_name: str | None = None
    alias_span: Span | None = None

    def to_json(self) -> dict:
        return {
            "span": [self.span.start, self.span.end],
            "output": self.output_name,
            "alias": self.alias_name,
        }


@dataclass
class SourceDecl:
    """One FROM/JOIN/UPDATE/INSERT source with the name it binds in scope."""

    bind_name: str
    parts: list[IdentPart] | None  # None for derived tables
    derived_index: int | None = None  # index into the owning clause's subqueries
    is_call: bool = False


@dataclass
class ParsedClause:
    kind: ClauseKind
    span: Span
    uses: list[IdentUse] = field(default_factory=list)
    items: list[SelectItem] | None = None
    subqueries: list["ParsedQuery"] = field(default_factory=list)
    sources: list[SourceDecl] = field(default_factory=list)
    cte_names: list[str] = field(default_factory=list)


@dataclass
class ParsedQuery:
    kind: QueryKind
    span: Span
    clauses: list[ParsedClause] = field(default_factory=list)

    def clause(self, kind: ClauseKind) -> ParsedClause | None:
        for cl in self.clauses:
            if cl.kind == kind:
                return cl
        return None

    def all_sources(self) -> list[tuple[ParsedClause, SourceDecl]]:
        out = []
        for cl in self.clauses:
            for src in cl.sources:
                out.append((cl, src))
        return out


def parse_query(tokens: list[Token]) -> ParsedQuery:
    if not tokens:
        raise SqlSyntaxError("empty query")
    head = tokens[0]
    if head.is_kw("SELECT") or head.is_kw("WITH"):
        kind = QueryKind.SELECT
    elif head.is_kw("INSERT"):
        kind = QueryKind.INSERT
    elif head.is_kw("UPDATE"):
        kind = QueryKind.UPDATE
    elif head.is_kw("DELETE"):
        kind = QueryKind.DELETE
    else:
        raise SqlSyntaxError(f"not a query: {head.text}", span=(head.start, head.end))
    span = Span(tokens[0].start, tokens[-1].end)
    query = ParsedQuery(kind, span)
    for seg_kind, seg in _split_clauses(tokens, kind):
        query.clauses.append(_parse_clause(seg_kind, seg))
    return query


def _split_clauses(tokens: list[Token], kind: QueryKind) -> list[tuple[ClauseKind, list[Token]]]:
    segments: list[tuple[ClauseKind, list[Token]]] = []
    depth = 0
    current_kind: ClauseKind | None = None
    current: list[Token] = []
    in_from = False

    def flush():
        nonlocal current
        if current_kind is not None and current:
            segments.append((current_kind, current))
        current = []

    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        boundary: ClauseKind | None = None
        if depth == 0 and tok.kind == IDENT and not tok.quoted:
            up = tok.upper
            if up == "WITH" and not segments and current_kind is None:
                boundary = ClauseKind.WITH
            elif up == "SELECT":
                boundary = ClauseKind.SELECT
            elif up == "FROM":
                boundary = ClauseKind.FROM
            elif up == "WHERE":
                boundary = ClauseKind.WHERE
            elif up == "GROUP":
                boundary = ClauseKind.GROUP_BY
            elif up == "ORDER":
                boundary = ClauseKind.ORDER_BY
            elif up == "HAVING":
                boundary = ClauseKind.HAVING
            elif up == "LIMIT":
                boundary = ClauseKind.LIMIT
            elif up == "OFFSET":
                boundary = ClauseKind.OFFSET
            elif up == "FETCH":
                boundary = ClauseKind.FETCH
            elif up == "RETURNING":
                boundary = ClauseKind.RETURNING
            elif up == "INTO" and current_kind == ClauseKind.SELECT:
                boundary = ClauseKind.INTO
            elif up in _SET_OPS:
                boundary = _SET_OPS[up]
            elif up == "SET" and kind == QueryKind.UPDATE:
                boundary = ClauseKind.SET
            elif up == "INSERT" and current_kind is None:
                boundary = ClauseKind.INSERT
            elif up == "UPDATE" and current_kind in (None, ClauseKind.WITH):
                boundary = ClauseKind.UPDATE
            elif up == "DELETE" and current_kind in (None, ClauseKind.WITH):
                boundary = ClauseKind.DELETE
            elif up in _JOIN_INTRO and in_from and _is_join_phrase(tokens, i):
                boundary = ClauseKind.JOIN
        if boundary is not None:
            flush()
            current_kind = boundary
            in_from = boundary in (ClauseKind.FROM, ClauseKind.JOIN)
        if current_kind is None:
            raise SqlSyntaxError(
                f"unexpected token {tok.text!r} before any clause", span=(tok.start, tok.end)
            )
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
        current.append(tok)
        i += 1
    flush()
    allowed = _allowed_clauses(kind)
    for seg_kind, seg in segments:
        if seg_kind not in allowed:
            raise SqlSyntaxError(
                f"{seg_kind.value} clause not allowed in {kind.value} query",
                span=(seg[0].start, seg[0].end),
            )
    return segments


def _allowed_clauses(kind: QueryKind):
    from ..model import CLAUSE_CONTAINMENT

    return CLAUSE_CONTAINMENT[kind]


def _is_join_phrase(tokens: list[Token], i: int) -> bool:
    j = i
    while j < len(tokens) and tokens[j].is_kw(*_JOIN_INTRO):
        if tokens[j].is_kw("JOIN"):
            return True
        j += 1
    return False


def _parse_clause(kind: ClauseKind, tokens: list[Token]) -> ParsedClause:
    span = Span(tokens[0].start, tokens[-1].end)
    clause = ParsedClause(kind, span)
    body = tokens[1:]  # drop the clause keyword
    if kind == ClauseKind.GROUP_BY or kind == ClauseKind.ORDER_BY:
        if body and body[0].is_kw("BY"):
            body = body[1:]
        _scan_expression(clause, body)
    elif kind == ClauseKind.SELECT:
        if body and body[0].is_kw("DISTINCT"):
            body = body[1:]
        _parse_select_items(clause, body)
    elif kind == ClauseKind.FROM:
        _parse_source_list(clause, body)
    elif kind == ClauseKind.JOIN:
        _parse_join(clause, tokens)
    elif kind == ClauseKind.INTO:
        for chunk in _split_top_level(body, ","):
            chain = _read_chain_tokens(chunk)
            if chain:
                clause.uses.append(IdentUse("into_target", chain))
    elif kind == ClauseKind.UPDATE:
        chain = _read_chain_tokens(body)
        if not chain:
            raise SqlSyntaxError("UPDATE requires a target table", span=(span.start, span.end))
        clause.uses.append(IdentUse("update_table", chain))
        clause.sources.append(SourceDecl(chain[-1].name, chain))
    elif kind == ClauseKind.SET:
        for chunk in _split_top_level(body, ","):
            eq = next((k for k, t in enumerate(chunk) if t.kind == OP and t.text == "="), None)
            if eq is None:
                _scan_expression(clause, chunk)
                continue
            lhs = _read_chain_tokens(chunk[:eq])
            if lhs:
                clause.uses.append(IdentUse("set_col", lhs))
            _scan_expression(clause, chunk[eq + 1 :])
    elif kind == ClauseKind.INSERT:
        _parse_insert(clause, body)
    elif kind == ClauseKind.WITH:
        _parse_with(clause, body)
    elif kind in (ClauseKind.UNION, ClauseKind.INTERSECT, ClauseKind.EXCEPT):
        if body and body[0].is_kw("ALL", "DISTINCT"):
            body = body[1:]
        clause.subqueries.append(parse_query(body))
    elif kind == ClauseKind.DELETE:
        pass  # bare keyword
    else:  # WHERE, HAVING, LIMIT, OFFSET, FETCH, RETURNING
        _scan_expression(clause, body)
    return clause


def _parse_with(clause: ParsedClause, body: list[Token]) -> None:
    for chunk in _split_top_level(body, ","):
        if len(chunk) < 4:
            raise SqlSyntaxError("malformed WITH binding", span=(clause.span.start, clause.span.end))
        name_tok = chunk[0]
        if not chunk[1].is_kw("AS"):
            raise SqlSyntaxError("expected AS in WITH binding", span=(chunk[1].start, chunk[1].end))
        inner = _strip_parens(chunk[2:])
        sub = parse_query(inner)
        clause.cte_names.append(name_tok.text)
        clause.subqueries.append(sub)


def _parse_insert(clause: ParsedClause, body: list[Token]) -> None:
    i = 0
    if i < len(body) and body[i].is_kw("INTO"):
        i += 1
    chain, i, _ = _read_chain(body, i)
    if not chain:
        raise SqlSyntaxError("INSERT requires a target table", span=(clause.span.start, clause.span.end))
    clause.uses.append(IdentUse("insert_table", chain))
    clause.sources.append(SourceDecl(chain[-1].name, chain))
    if i < len(body) and body[i].kind == OP and body[i].text == "(":
        group, i = _read_paren_group(body, i)
        for chunk in _split_top_level(group, ","):
            col = _read_chain_tokens(chunk)
            if col:
                clause.uses.append(IdentUse("insert_col", col))
    if i < len(body) and body[i].is_kw("VALUES"):
        _scan_expression(clause, body[i + 1 :])
    elif i < len(body) and (body[i].is_kw("SELECT") or body[i].is_kw("WITH")):
        clause.subqueries.append(parse_query(body[i:]))
    elif i < len(body):
        _scan_expression(clause, body[i:])


def _parse_join(clause: ParsedClause, tokens: list[Token]) -> None:
    i = 0
    while i < len(tokens) and tokens[i].is_kw(*_JOIN_INTRO):
        i += 1
    on_at = next(
        (
            k
            for k, t in enumerate(tokens)
            if t.is_kw("ON") and _depth_at(tokens, k) == 0
        ),
        len(tokens),
    )
    _parse_source_list(clause, tokens[i:on_at])
    if on_at < len(tokens):
        _scan_expression(clause, tokens[on_at + 1 :])


def _depth_at(tokens: list[Token], idx: int) -> int:
    depth = 0
    for t in tokens[:idx]:
        if t.kind == OP and t.text == "(":
            depth += 1
        elif t.kind == OP and t.text == ")":
            depth -= 1
    return depth


def _parse_source_list(clause: ParsedClause, body: list[Token]) -> None:
    for chunk in _split_top_level(body, ","):
        if not chunk:
            continue
        if chunk[0].kind == OP and chunk[0].text == "(":
            group, rest_at = _read_paren_group(chunk, 0)
            sub = parse_query(group)
            idx = len(clause.subqueries)
            clause.subqueries.append(sub)
            alias = _read_alias(chunk[rest_at:])
            if alias is None:
                raise SqlSyntaxError(
                    "derived table requires an alias", span=(chunk[0].start, chunk[-1].end)
                )
            clause.sources.append(SourceDecl(alias, None, derived_index=idx))
            continue
        chain, i, _ = _read_chain(chunk, 0)
        if not chain:
            continue
        is_call = i < len(chunk) and chunk[i].kind == OP and chunk[i].text == "("
        argc = None
        if is_call:
            group, i = _read_paren_group(chunk, i)
            argc = len(_split_top_level(group, ",")) if group else 0
            _scan_expression(clause, group)
        alias = _read_alias(chunk[i:]) or chain[-1].name
        clause.uses.append(
            IdentUse("source", chain)
            if not is_call
            else IdentUse("call", chain, arg_count=argc)
        )
        clause.sources.append(SourceDecl(alias, chain, is_call=is_call))


def _read_alias(tokens: list[Token]) -> str | None:
    toks = list(tokens)
    if toks and toks[0].is_kw("AS"):
        toks = toks[1:]
    if len(toks) == 1 and toks[0].kind == IDENT and not toks[0].is_kw(*EXPR_KEYWORDS):
        return toks[0].text
    return None


def _parse_select_items(clause: ParsedClause, body: list[Token]) -> None:
    clause.items = []
    for chunk in _split_top_level(body, ","):
        if not chunk:
            continue
        item_span = Span(chunk[0].start, chunk[-1].end)
        expr = list(chunk)
        alias_name = alias_span = None
        if len(expr) >= 2 and expr[-2].is_kw("AS") and expr[-1].kind == IDENT:
            alias_name = expr[-1].text
            alias_span = Span(expr[-1].start, expr[-1].end)
            expr = expr[:-2]
        elif (
            len(expr) >= 2
            and expr[-1].kind == IDENT
            and not expr[-1].is_kw(*EXPR_KEYWORDS)
            and (expr[-2].kind in (IDENT, NUMBER, STRING) or expr[-2].text in (")", "*"))
            and not (expr[-2].kind == OP and expr[-2].text == ".")
            and not _chain_continues(expr)
        ):
            alias_name = expr[-1].text
            alias_span = Span(expr[-1].start, expr[-1].end)
            expr = expr[:-1]
        _scan_expression(clause, expr)
        output_name, name_span = _output_name(expr)
        if alias_name is not None:
            output_name, name_span = alias_name, alias_span
        clause.items.append(
            SelectItem(item_span, output_name, name_span, alias_name, alias_span)
        )


def _chain_continues(expr: list[Token]) -> bool:
    # 'a.b' must not read its terminal as an alias for 'a'.
    return (
        len(expr) >= 2
        and expr[-1].kind == IDENT
        and expr[-2].kind == OP
        and expr[-2].text == "."
    )


def _output_name(expr: list[Token]) -> tuple[str | None, Span | None]:
    toks = _strip_outer_parens(expr)
    while len(toks) >= 2 and toks[-2].kind == OP and toks[-2].text == "::":
        toks = _strip_outer_parens(toks[:-2])
    if not toks:
        return None, None
    if all(
        (t.kind == IDENT) if k % 2 == 0 else (t.kind == OP and t.text == ".")
        for k, t in enumerate(toks)
    ) and len(toks) % 2 == 1:
        last = toks[-1]
        return last.text, Span(last.start, last.end)
    if toks[-1].kind == OP and toks[-1].text == ")":
        head, _, _ = _read_chain(toks, 0)
        if head:
            return head[-1].name, None
    return None, None


def _strip_outer_parens(tokens: list[Token]) -> list[Token]:
    toks = list(tokens)
    while (
        len(toks) >= 2
        and toks[0].kind == OP
        and toks[0].text == "("
        and toks[-1].kind == OP
        and toks[-1].text == ")"
        and _matches_outer(toks)
    ):
        toks = toks[1:-1]
    return toks


def _matches_outer(tokens: list[Token]) -> bool:
    depth = 0
    for i, t in enumerate(tokens):
        if t.kind == OP and t.text == "(":
            depth += 1
        elif t.kind == OP and t.text == ")":
            depth -= 1
            if depth == 0:
                return i == len(tokens) - 1
    return False


def _strip_parens(tokens: list[Token]) -> list[Token]:
    if (
        tokens
        and tokens[0].kind == OP
        and tokens[0].text == "("
        and _matches_outer(tokens)
    ):
        return tokens[1:-1]
    return tokens


def _split_top_level(tokens: list[Token], sep: str) -> list[list[Token]]:
    parts: list[list[Token]] = []
    cur: list[Token] = []
    depth = 0
    for tok in tokens:
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
        if depth == 0 and tok.kind == OP and tok.text == sep:
            parts.append(cur)
            cur = []
            continue
        cur.append(tok)
    if cur:
        parts.append(cur)
    return parts


def _read_chain(tokens: list[Token], i: int) -> tuple[list[IdentPart], int, bool]:
    """Read a dotted identifier chain; the flag reports a trailing '.*'."""
    parts: list[IdentPart] = []
    while i < len(tokens) and tokens[i].kind == IDENT:
        tok = tokens[i]
        parts.append(IdentPart(tok.text, tok.quoted, Span(tok.start, tok.end)))
        if i + 1 < len(tokens) and tokens[i + 1].kind == OP and tokens[i + 1].text == ".":
            i += 2
            if i < len(tokens) and tokens[i].kind == OP and tokens[i].text == "*":
                star = tokens[i]
                parts.append(IdentPart("*", False, Span(star.start, star.end)))
                return parts, i + 1, True
        else:
            i += 1
            break
    return parts, i, False


def _read_chain_tokens(tokens: list[Token]) -> list[IdentPart]:
    chain, _, _ = _read_chain(tokens, 0)
    return chain


def _read_paren_group(tokens: list[Token], i: int) -> tuple[list[Token], int]:
    assert tokens[i].kind == OP and tokens[i].text == "("
    depth = 0
    for j in range(i, len(tokens)):
        if tokens[j].kind == OP and tokens[j].text == "(":
            depth += 1
        elif tokens[j].kind == OP and tokens[j].text == ")":
            depth -= 1
            if depth == 0:
                return tokens[i + 1 : j], j + 1
    raise SqlSyntaxError("unbalanced parentheses", span=(tokens[i].start, tokens[i].end))


def _scan_expression(clause: ParsedClause, tokens: list[Token]) -> None:
    """Collect identifier uses from an arbitrary expression token run."""
    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        if tok.kind == OP and tok.text == "(":
            group, nxt = _read_paren_group(tokens, i)
            if group and (group[0].is_kw("SELECT") or group[0].is_kw("WITH")):
                clause.subqueries.append(parse_query(group))
            else:
                _scan_expression(clause, group)
            i = nxt
            continue
        if tok.kind == OP and tok.text == "::":
            if i + 1 < n and tokens[i + 1].kind == IDENT:
                t = tokens[i + 1]
                clause.uses.append(
                    IdentUse("cast", [IdentPart(t.text, t.quoted, Span(t.start, t.end))])
                )
                i += 2
                # swallow type parameters like varchar(10)
                if i < n and tokens[i].kind == OP and tokens[i].text == "(":
                    _, i = _read_paren_group(tokens, i)
                continue
            i += 1
            continue
        if tok.kind == IDENT:
            if not tok.quoted and tok.upper in EXPR_KEYWORDS:
                i += 1
                continue
            chain, nxt, star = _read_chain(tokens, i)
            if star:
                clause.uses.append(IdentUse("wildcard", chain))
                i = nxt
                continue
            if nxt < n and tokens[nxt].kind == OP and tokens[nxt].text == "(":
                group, after = _read_paren_group(tokens, nxt)
                argc = len(_split_top_level(group, ",")) if group else 0
                clause.uses.append(IdentUse("call", chain, arg_count=argc))
                _scan_expression(clause, group)
                i = after
                continue
            clause.uses.append(IdentUse("value", chain))
            i = nxt
            continue
        if tok.kind == OP and tok.text == "*":
            prev = tokens[i - 1] if i > 0 else None
            if prev is None or (prev.kind == OP and prev.text in (",", "(")):
                clause.uses.append(
                    IdentUse("wildcard", [IdentPart("*", False, Span(tok.start, tok.end))])
                )
            i += 1
            continue
        i += 1
        continue
