"""Dump parsing: statement splitting and the supported DDL grammar.

Supported statements: CREATE SCHEMA; CREATE TABLE with column and table
constraints; ALTER TABLE ADD CONSTRAINT; CREATE [OR REPLACE] VIEW;
CREATE [OR REPLACE] FUNCTION ... AS $$...$$ LANGUAGE plpgsql;
CREATE TRIGGER ... EXECUTE PROCEDURE f(). Anything else is reported as an
unsupported statement.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import SchemaPlanError, SqlSyntaxError, UnsupportedStatement
from ..model import (
    DEFAULT_NAMESPACE,
    Column,
    Constraint,
    ConstraintKind,
    EntityPath,
    Namespace,
    Parameter,
    SchemaModel,
    Span,
    StoredProcedure,
    Table,
    Trigger,
    View,
    normalize_type,
)
from .builder import build_source_structure
from .lexer import DOLLAR, IDENT, OP, Token, TokenStream, tokenize


@dataclass
class RawStatement:
    text: str
    start: int  # offset of first token in the dump
    tokens: list[Token]


@dataclass
class DumpDocument:
    text: str
    statements: list[RawStatement]
    dialect: str = "postgres-subset"


@dataclass
class ParseDiagnostic:
    severity: str  # error | warning
    message: str
    span: tuple[int, int] | None = None

    def to_json(self) -> dict:
        out = {"severity": self.severity, "message": self.message}
        if self.span:
            out["span"] = list(self.span)
        return out


def split_statements(text: str) -> DumpDocument:
    tokens = tokenize(text)
    statements: list[RawStatement] = []
    current: list[Token] = []
    for tok in tokens:
        if tok.kind == OP and tok.text == ";":
            if current:
                stmt_text = text[current[0].start : tok.start]
                statements.append(RawStatement(stmt_text, current[0].start, current))
                current = []
            continue
        current.append(tok)
    if current:
        stmt_text = text[current[0].start : current[-1].end]
        statements.append(RawStatement(stmt_text, current[0].start, current))
    return DumpDocument(text, statements)


def parse_dump(text: str) -> tuple[SchemaModel | None, list[ParseDiagnostic]]:
    """Build an unresolved model from a dump; errors abort construction."""
    diags: list[ParseDiagnostic] = []
    try:
        doc = split_statements(text)
    except SqlSyntaxError as err:
        return None, [ParseDiagnostic("error", err.message, err.span)]
    model = SchemaModel(provenance_text=text)
    model.add(Namespace(DEFAULT_NAMESPACE))
    for stmt in doc.statements:
        try:
            _parse_statement(model, stmt)
        except UnsupportedStatement as err:
            diags.append(ParseDiagnostic("error", err.message, err.span))
        except SchemaPlanError as err:
            diags.append(ParseDiagnostic("error", err.message, err.span))
        except ValueError as err:
            diags.append(
                ParseDiagnostic("error", str(err), (stmt.start, stmt.start + len(stmt.text)))
            )
    if any(d.severity == "error" for d in diags):
        return None, diags
    return model, diags


def _parse_statement(model: SchemaModel, stmt: RawStatement) -> None:
    ts = TokenStream(stmt.tokens, stmt.start + len(stmt.text))
    head = ts.peek()
    if head is None:
        return
    if head.is_kw("CREATE"):
        ts.next()
        if ts.accept_kw("SCHEMA"):
            name = ts.expect_ident().text
            if model.get(EntityPath((name,))) is None:
                model.add(Namespace(name))
            return
        if ts.accept_kw("TABLE"):
            _parse_create_table(model, ts, stmt)
            return
        or_replace = False
        if ts.accept_kw("OR"):
            ts.expect_kw("REPLACE")
            or_replace = True
        if ts.accept_kw("VIEW"):
            _parse_create_view(model, ts, stmt, or_replace)
            return
        if ts.accept_kw("FUNCTION"):
            _parse_create_function(model, ts, stmt, or_replace)
            return
        if ts.accept_kw("TRIGGER") and not or_replace:
            _parse_create_trigger(model, ts, stmt)
            return
        raise UnsupportedStatement(
            f"unsupported CREATE statement: {stmt.text.split()[1] if len(stmt.text.split()) > 1 else ''}",
            span=(head.start, head.end),
        )
    if head.is_kw("ALTER"):
        ts.next()
        if ts.accept_kw("TABLE"):
            _parse_alter_table_add_constraint(model, ts, stmt)
            return
        raise UnsupportedStatement("only ALTER TABLE ADD CONSTRAINT is supported", span=(head.start, head.end))
    raise UnsupportedStatement(f"unsupported statement: {head.text}", span=(head.start, head.end))


def _qualified_name(ts: TokenStream) -> EntityPath:
    first = ts.expect_ident()
    if ts.accept_op("."):
        second = ts.expect_ident()
        return EntityPath((first.text, second.text))
    return EntityPath((DEFAULT_NAMESPACE, first.text))


def _ensure_namespace(model: SchemaModel, path: EntityPath) -> None:
    ns = path.segments[0]
    if model.get(EntityPath((ns,))) is None:
        model.add(Namespace(ns))


# -- CREATE TABLE -----------------------------------------------------------

_COLUMN_CONSTRAINT_WORDS = ("NOT", "NULL", "DEFAULT", "PRIMARY", "UNIQUE", "CHECK", "REFERENCES", "CONSTRAINT")
_TYPE_EXTRA_WORDS = {"varying", "precision", "zone", "time", "with", "without"}


def _parse_create_table(model: SchemaModel, ts: TokenStream, stmt: RawStatement) -> None:
    path = _qualified_name(ts)
    _ensure_namespace(model, path)
    table = model.add(Table(path))
    ts.expect_op("(")
    body, closing = _balanced_region(ts)
    items = _split_commas(body)
    used_names: set[str] = set()
    ordinal = 0
    for item in items:
        if not item:
            continue
        first = item[0]
        if first.is_kw("PRIMARY", "UNIQUE", "FOREIGN", "CHECK", "CONSTRAINT"):
            _add_table_constraint(model, table.path, item, stmt, used_names)
        else:
            ordinal += 1
            _add_column(model, table.path, item, stmt, used_names, ordinal)
    rest = ts.peek()
    if rest is not None:
        raise SqlSyntaxError("trailing tokens after CREATE TABLE", span=(rest.start, rest.end))


def _balanced_region(ts: TokenStream) -> tuple[list[Token], Token]:
    depth = 1
    body: list[Token] = []
    while True:
        tok = ts.next()
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
            if depth == 0:
                return body, tok
        body.append(tok)


def _split_commas(tokens: list[Token]) -> list[list[Token]]:
    parts: list[list[Token]] = []
    cur: list[Token] = []
    depth = 0
    for tok in tokens:
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
        if depth == 0 and tok.kind == OP and tok.text == ",":
            parts.append(cur)
            cur = []
            continue
        cur.append(tok)
    if cur:
        parts.append(cur)
    return parts


def _unique_name(base: str, used: set[str]) -> str:
    name = base
    n = 1
    while name in used:
        n += 1
        name = f"{base}_{n}"
    used.add(name)
    return name


def _fragment(stmt: RawStatement, first: Token, last: Token) -> str:
    return stmt.text[first.start - stmt.start : last.end - stmt.start]


def _add_column(
    model: SchemaModel,
    table: EntityPath,
    tokens: list[Token],
    stmt: RawStatement,
    used_names: set[str],
    ordinal: int,
) -> None:
    name_tok = tokens[0]
    if name_tok.kind != IDENT:
        raise SqlSyntaxError("expected column name", span=(name_tok.start, name_tok.end))
    i = 1
    type_tokens: list[Token] = []
    while i < len(tokens):
        tok = tokens[i]
        if tok.kind == IDENT and not tok.quoted and tok.upper in _COLUMN_CONSTRAINT_WORDS:
            break
        type_tokens.append(tok)
        i += 1
    if not type_tokens:
        raise SqlSyntaxError("column lacks a type", span=(name_tok.start, name_tok.end))
    declared = _fragment(stmt, type_tokens[0], type_tokens[-1])
    col_path = table.child(name_tok.text)
    model.add(Column(col_path, declared, ordinal))
    table_name = table.name
    while i < len(tokens):
        tok = tokens[i]
        if tok.is_kw("NOT") and i + 1 < len(tokens) and tokens[i + 1].is_kw("NULL"):
            frag = _fragment(stmt, tok, tokens[i + 1])
            name = _unique_name(f"{table_name}_{name_tok.text}_notnull", used_names)
            model.add(
                Constraint(table.child(name), ConstraintKind.NOT_NULL, [name_tok.text], frag)
            )
            i += 2
        elif tok.is_kw("DEFAULT"):
            expr_tokens, i = _constraint_expression(tokens, i + 1)
            frag_first = tok
            frag_last = expr_tokens[-1] if expr_tokens else tok
            frag = _fragment(stmt, frag_first, frag_last)
            expr = _fragment(stmt, expr_tokens[0], expr_tokens[-1]) if expr_tokens else ""
            name = _unique_name(f"{table_name}_{name_tok.text}_default", used_names)
            model.add(
                Constraint(
                    table.child(name), ConstraintKind.DEFAULT, [name_tok.text], frag, expression=expr
                )
            )
        elif tok.is_kw("PRIMARY"):
            if i + 1 >= len(tokens) or not tokens[i + 1].is_kw("KEY"):
                raise SqlSyntaxError("expected PRIMARY KEY", span=(tok.start, tok.end))
            frag = _fragment(stmt, tok, tokens[i + 1])
            name = _unique_name(f"{table_name}_pkey", used_names)
            model.add(
                Constraint(table.child(name), ConstraintKind.PRIMARY_KEY, [name_tok.text], frag)
            )
            i += 2
        elif tok.is_kw("UNIQUE"):
            frag = _fragment(stmt, tok, tok)
            name = _unique_name(f"{table_name}_{name_tok.text}_key", used_names)
            model.add(
                Constraint(table.child(name), ConstraintKind.UNIQUE, [name_tok.text], frag)
            )
            i += 1
        elif tok.is_kw("CHECK"):
            i, constraint = _read_check(model, table, tokens, i, stmt, used_names, f"{table_name}_{name_tok.text}_check")
        elif tok.is_kw("REFERENCES"):
            i, constraint = _read_references(
                model, table, [name_tok.text], tokens, i, stmt, used_names, f"{table_name}_{name_tok.text}_fkey", tok
            )
        else:
            raise SqlSyntaxError(f"unsupported column option {tok.text!r}", span=(tok.start, tok.end))


def _constraint_expression(tokens: list[Token], i: int) -> tuple[list[Token], int]:
    """Read DEFAULT's expression: one value or call, or a parenthesized run."""
    out: list[Token] = []
    depth = 0
    while i < len(tokens):
        tok = tokens[i]
        if depth == 0 and tok.kind == IDENT and not tok.quoted and tok.upper in _COLUMN_CONSTRAINT_WORDS and out:
            break
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
        out.append(tok)
        i += 1
    return out, i


def _read_check(model, table, tokens, i, stmt, used_names, default_name, explicit_name=None):
    check_tok = tokens[i]
    i += 1
    if i >= len(tokens) or tokens[i].text != "(":
        raise SqlSyntaxError("CHECK requires a parenthesized expression", span=(check_tok.start, check_tok.end))
    depth = 0
    start = i
    while i < len(tokens):
        if tokens[i].kind == OP and tokens[i].text == "(":
            depth += 1
        elif tokens[i].kind == OP and tokens[i].text == ")":
            depth -= 1
            if depth == 0:
                break
        i += 1
    frag = _fragment(stmt, check_tok, tokens[i])
    inner = tokens[start + 1 : i]
    expr = _fragment(stmt, inner[0], inner[-1]) if inner else ""
    name = _unique_name(explicit_name or default_name, used_names)
    constraint = model.add(
        Constraint(table.child(name), ConstraintKind.CHECK, [], frag, expression=expr)
    )
    return i + 1, constraint


def _read_references(model, table, columns, tokens, i, stmt, used_names, default_name, first_tok, explicit_name=None):
    i += 1
    chain = [tokens[i]]
    i += 1
    if i < len(tokens) and tokens[i].kind == OP and tokens[i].text == ".":
        i += 1
        chain.append(tokens[i])
        i += 1
    if len(chain) == 2:
        ref_table = EntityPath((chain[0].text, chain[1].text))
    else:
        ref_table = EntityPath((DEFAULT_NAMESPACE, chain[0].text))
    ref_columns: list[str] = []
    last = chain[-1]
    if i < len(tokens) and tokens[i].kind == OP and tokens[i].text == "(":
        depth = 0
        while i < len(tokens):
            tok = tokens[i]
            if tok.kind == OP and tok.text == "(":
                depth += 1
            elif tok.kind == OP and tok.text == ")":
                depth -= 1
                if depth == 0:
                    last = tok
                    i += 1
                    break
            elif tok.kind == IDENT:
                ref_columns.append(tok.text)
            i += 1
    frag = _fragment(stmt, first_tok, last)
    name = _unique_name(explicit_name or default_name, used_names)
    constraint = model.add(
        Constraint(
            table.child(name),
            ConstraintKind.FOREIGN_KEY,
            columns,
            frag,
            ref_table=ref_table,
            ref_columns=ref_columns,
        )
    )
    return i, constraint


def _add_table_constraint(
    model: SchemaModel,
    table: EntityPath,
    tokens: list[Token],
    stmt: RawStatement,
    used_names: set[str],
) -> None:
    i = 0
    explicit_name = None
    if tokens[i].is_kw("CONSTRAINT"):
        explicit_name = tokens[i + 1].text
        i += 2
    first_tok = tokens[i]
    table_name = table.name
    if tokens[i].is_kw("PRIMARY"):
        cols, last = _column_list(tokens, i + 2)
        frag = _fragment(stmt, first_tok, last)
        name = _unique_name(explicit_name or f"{table_name}_pkey", used_names)
        model.add(Constraint(table.child(name), ConstraintKind.PRIMARY_KEY, cols, frag))
    elif tokens[i].is_kw("UNIQUE"):
        cols, last = _column_list(tokens, i + 1)
        frag = _fragment(stmt, first_tok, last)
        name = _unique_name(explicit_name or f"{table_name}_{'_'.join(cols)}_key", used_names)
        model.add(Constraint(table.child(name), ConstraintKind.UNIQUE, cols, frag))
    elif tokens[i].is_kw("FOREIGN"):
        cols, last_idx = _column_list_idx(tokens, i + 2)
        ref_at = next(k for k in range(last_idx, len(tokens)) if tokens[k].is_kw("REFERENCES"))
        _read_references(
            model,
            table,
            cols,
            tokens,
            ref_at,
            stmt,
            used_names,
            f"{table_name}_{'_'.join(cols)}_fkey",
            first_tok,
            explicit_name,
        )
    elif tokens[i].is_kw("CHECK"):
        _read_check(
            model, table, tokens, i, stmt, used_names, f"{table_name}_check", explicit_name
        )
    else:
        raise SqlSyntaxError(
            f"unsupported table constraint {tokens[i].text!r}",
            span=(tokens[i].start, tokens[i].end),
        )


def _column_list(tokens: list[Token], i: int) -> tuple[list[str], Token]:
    cols, idx = _column_list_idx(tokens, i)
    return cols, tokens[idx - 1]


def _column_list_idx(tokens: list[Token], i: int) -> tuple[list[str], int]:
    if i >= len(tokens) or tokens[i].text != "(":
        raise SqlSyntaxError("expected column list", span=(tokens[i - 1].start, tokens[i - 1].end))
    cols: list[str] = []
    i += 1
    while i < len(tokens) and tokens[i].text != ")":
        if tokens[i].kind == IDENT:
            cols.append(tokens[i].text)
        i += 1
    return cols, i + 1


# -- ALTER TABLE ADD CONSTRAINT ----------------------------------------------


def _parse_alter_table_add_constraint(model: SchemaModel, ts: TokenStream, stmt: RawStatement) -> None:
    path = _qualified_name(ts)
    table = model.require(path)
    ts.expect_kw("ADD")
    ts.expect_kw("CONSTRAINT")
    name = ts.expect_ident().text
    rest = ts.tokens[ts.pos :]
    used = {c.name for c in model.constraints_of(table.path)}
    _add_table_constraint(
        model, table.path, [_kw_token("CONSTRAINT", rest[0]), _name_token(name, rest[0])] + rest, stmt, used
    )


def _kw_token(word: str, like: Token) -> Token:
    return Token(IDENT, word.lower(), like.start, like.start)


def _name_token(name: str, like: Token) -> Token:
    return Token(IDENT, name, like.start, like.start)


# -- CREATE VIEW -------------------------------------------------------------


def _parse_create_view(model: SchemaModel, ts: TokenStream, stmt: RawStatement, or_replace: bool) -> None:
    path = _qualified_name(ts)
    _ensure_namespace(model, path)
    ts.expect_kw("AS")
    first = ts.peek()
    if first is None:
        raise SqlSyntaxError("view lacks a query", span=(stmt.start, stmt.start + len(stmt.text)))
    query_text = stmt.text[first.start - stmt.start :]
    existing = model.get(path)
    if existing is not None:
        if not or_replace:
            raise SqlSyntaxError(f"view {path} already exists", span=(first.start, first.end))
        for child in model.descendants_of(path):
            model.discard(child.path)
        model.discard(path)
    view = model.add(View(path, query_text))
    build_source_structure(model, view.path)


# -- CREATE FUNCTION -----------------------------------------------------------


def _parse_create_function(model: SchemaModel, ts: TokenStream, stmt: RawStatement, or_replace: bool) -> None:
    base_path = _qualified_name(ts)
    ts.expect_op("(")
    params: list[tuple[str, str]] = []
    depth = 1
    current: list[Token] = []
    while depth > 0:
        tok = ts.next()
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
            if depth == 0:
                break
        if depth == 1 and tok.kind == OP and tok.text == ",":
            params.append(_parse_param(current, len(params)))
            current = []
        else:
            current.append(tok)
    if current:
        params.append(_parse_param(current, len(params)))
    ts.expect_kw("RETURNS")
    ret_tokens: list[Token] = []
    while not (ts.peek() and ts.peek().is_kw("AS")):
        ret_tokens.append(ts.next())
    ts.expect_kw("AS")
    body_tok = ts.next()
    if body_tok.kind != DOLLAR:
        raise SqlSyntaxError("function body must be dollar-quoted", span=(body_tok.start, body_tok.end))
    tag_len = body_tok.text.index("$", 1) + 1
    body = body_tok.text[tag_len : len(body_tok.text) - tag_len]
    ts.expect_kw("LANGUAGE")
    language = ts.expect_ident().text
    if language != "plpgsql":
        raise UnsupportedStatement(
            f"unsupported procedure language {language!r}", span=(body_tok.start, body_tok.end)
        )
    return_type = stmt.text[ret_tokens[0].start - stmt.start : ret_tokens[-1].end - stmt.start] if ret_tokens else ""
    sig = ",".join(normalize_type(t) for _, t in params)
    path = EntityPath(base_path.segments[:-1] + (f"{base_path.segments[-1]}({sig})",))
    _ensure_namespace(model, path)
    existing = model.get(path)
    if existing is not None:
        if not or_replace:
            raise SqlSyntaxError(f"function {path} already exists", span=(stmt.start, stmt.start))
        for child in model.descendants_of(path):
            model.discard(child.path)
        model.discard(path)
    proc = model.add(StoredProcedure(path, params, return_type.strip(), language, body))
    for ordinal, (pname, ptype) in enumerate(params, start=1):
        model.add(Parameter(path.child(pname), ptype, ordinal))
    build_source_structure(model, proc.path)


def _parse_param(tokens: list[Token], index: int) -> tuple[str, str]:
    toks = list(tokens)
    if toks and toks[0].is_kw("IN", "OUT", "INOUT"):
        toks = toks[1:]
    if not toks:
        raise SqlSyntaxError("empty parameter")
    if len(toks) == 1:
        return (f"${index + 1}", toks[0].text)
    name = toks[0].text
    type_text = " ".join(t.text for t in toks[1:])
    return (name, type_text)


# -- CREATE TRIGGER -------------------------------------------------------------


def _parse_create_trigger(model: SchemaModel, ts: TokenStream, stmt: RawStatement) -> None:
    name = ts.expect_ident().text
    table_path: EntityPath | None = None
    proc_name: tuple[str, ...] | None = None
    while not ts.at_end():
        tok = ts.next()
        if tok.is_kw("ON") and table_path is None:
            first = ts.expect_ident()
            if ts.accept_op("."):
                second = ts.expect_ident()
                table_path = EntityPath((first.text, second.text))
            else:
                table_path = EntityPath((DEFAULT_NAMESPACE, first.text))
        elif tok.is_kw("EXECUTE"):
            ts.expect_kw("PROCEDURE", "FUNCTION")
            first = ts.expect_ident()
            if ts.accept_op("."):
                second = ts.expect_ident()
                proc_name = (first.text, second.text)
            else:
                proc_name = (first.text,)
            if ts.accept_op("("):
                depth = 1
                while depth > 0 and not ts.at_end():
                    t = ts.next()
                    if t.kind == OP and t.text == "(":
                        depth += 1
                    elif t.kind == OP and t.text == ")":
                        depth -= 1
    if table_path is None or proc_name is None:
        raise SqlSyntaxError(
            "trigger must name a table and a procedure", span=(stmt.start, stmt.start + len(stmt.text))
        )
    trig_path = EntityPath((table_path.segments[0], name))
    # The procedure path is bound during reference resolution.
    model.add(Trigger(trig_path, table_path, None, stmt.text))
