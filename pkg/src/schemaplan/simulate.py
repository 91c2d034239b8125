"""Patch simulation: apply a generated patch statement by statement.

Verifies what the RDBMS would enforce: every statement applies cleanly,
no statement leaves a checked entity with a dangling reference, and after
the final statement every reference resolves, procedure bodies included.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SchemaPlanError, SqlSyntaxError
from .model import (
    Column,
    Constraint,
    EntityKind,
    EntityPath,
    SchemaModel,
    StoredProcedure,
    Trigger,
    View,
    normalize_type,
)
from .operators import EvolutionOperator, OpKind, apply_to_model
from .parsing.ddl import RawStatement, _add_table_constraint, _parse_statement
from .parsing.lexer import OP, Token, TokenStream, tokenize
from .parsing.resolver import resolve_entity
from .patch import SqlPatch, normalize_sql


@dataclass
class Violation:
    index: int
    statement: str
    message: str

    def to_json(self) -> dict:
        return {"statement": self.index, "sql": normalize_sql(self.statement), "message": self.message}


@dataclass
class SimulationReport:
    violations: list[Violation] = field(default_factory=list)
    final_model: SchemaModel | None = None
    statements: int = 0

    @property
    def clean(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "clean": self.clean,
            "statements": self.statements,
            "violations": [v.to_json() for v in self.violations],
        }


def simulate_patch(patch: SqlPatch | str, model: SchemaModel) -> SimulationReport:
    text = patch.text() if isinstance(patch, SqlPatch) else patch
    report = SimulationReport()
    current = model.copy()
    statements = _split(text)
    report.statements = len(statements)
    for index, stmt in enumerate(statements):
        head = stmt.strip().split(None, 1)[0].upper() if stmt.strip() else ""
        if head in ("BEGIN", "ROLLBACK", "COMMIT", ""):
            continue
        try:
            current = _apply_statement(current, stmt)
        except SchemaPlanError as err:
            report.violations.append(Violation(index, stmt, err.message))
            continue
        for message in _checked_dangling(current):
            report.violations.append(Violation(index, stmt, message))
    _rebind_procedures(current)
    for ref in current.references:
        if not ref.resolved:
            report.violations.append(
                Violation(
                    len(statements),
                    "<end of patch>",
                    f"unresolved reference in {ref.root} at {ref.span.start}-{ref.span.end}",
                )
            )
    report.final_model = current
    return report


def _rebind_procedures(model: SchemaModel) -> None:
    """Procedure bodies are late-bound: resolve them against the final state."""
    for proc in model.procedures():
        if any(not r.resolved for r in model.references if r.root == proc.path):
            resolve_entity(model, proc.path)


def _split(text: str) -> list[str]:
    from .parsing.ddl import split_statements

    return [s.text for s in split_statements(text).statements]


def _checked_dangling(model: SchemaModel) -> list[str]:
    out = []
    for ref in model.references:
        if ref.resolved:
            continue
        root = model.get(ref.root)
        if root is None or root.kind == EntityKind.STORED_PROCEDURE:
            continue
        out.append(f"dangling reference in {ref.root} at {ref.span.start}-{ref.span.end}")
    return out


def _apply_statement(model: SchemaModel, stmt: str) -> SchemaModel:
    tokens = tokenize(stmt)
    ts = TokenStream(tokens, len(stmt))
    head = ts.next()
    if head.is_kw("CREATE"):
        return _apply_create(model, stmt, tokens)
    if head.is_kw("DROP"):
        return _apply_drop(model, ts)
    if head.is_kw("ALTER"):
        return _apply_alter(model, ts, stmt)
    raise SqlSyntaxError(f"unsupported patch statement: {head.text}")


def _apply_create(model: SchemaModel, stmt: str, tokens: list[Token]) -> SchemaModel:
    out = model.copy()
    raw = RawStatement(stmt, 0, tokenize(stmt))
    _parse_statement(out, raw)
    root = _created_root(out, model)
    if root is not None:
        diags = resolve_entity(out, root)
        errors = [d for d in diags if d.severity == "error"]
        entity = out.get(root)
        if errors and entity is not None and entity.kind != EntityKind.STORED_PROCEDURE:
            raise SchemaPlanError(f"created entity does not resolve: {errors[0].message}")
    return out


def _created_root(after: SchemaModel, before: SchemaModel):
    new_roots = [
        e.path
        for e in after.entities.values()
        if str(e.path) not in before.entities
        and e.kind in (EntityKind.VIEW, EntityKind.STORED_PROCEDURE, EntityKind.TRIGGER, EntityKind.TABLE)
    ]
    if new_roots:
        return new_roots[0]
    # CREATE OR REPLACE over an existing entity: find the changed source
    for entity in after.entities.values():
        if entity.kind in (EntityKind.VIEW, EntityKind.STORED_PROCEDURE):
            old = before.get(entity.path)
            if old is not None and getattr(old, "source_text", None) != getattr(entity, "source_text", None):
                return entity.path
    return None


def _qualified_path(ts: TokenStream) -> EntityPath:
    first = ts.expect_ident()
    if ts.accept_op("."):
        second = ts.expect_ident()
        return EntityPath((first.text, second.text))
    return EntityPath(("public", first.text))


def _proc_path(model: SchemaModel, ts: TokenStream) -> EntityPath:
    base = _qualified_path(ts)
    sig = None
    if ts.accept_op("("):
        types = []
        current: list[str] = []
        while True:
            tok = ts.next()
            if tok.kind == OP and tok.text == ")":
                if current:
                    types.append(" ".join(current))
                break
            if tok.kind == OP and tok.text == ",":
                types.append(" ".join(current))
                current = []
            else:
                current.append(tok.text)
        sig = ",".join(normalize_type(t) for t in types if t.strip())
    if sig is not None:
        return EntityPath(base.segments[:-1] + (f"{base.name}({sig})",))
    candidates = [p for p in model.procedures() if p.path.segments[:-1] == base.segments[:-1] and p.name == base.name]
    if len(candidates) == 1:
        return candidates[0].path
    return base


def _apply_drop(model: SchemaModel, ts: TokenStream) -> SchemaModel:
    what = ts.next()
    if what.is_kw("TABLE"):
        return apply_to_model(EvolutionOperator(OpKind.REMOVE_TABLE, target=_qualified_path(ts)), model)
    if what.is_kw("VIEW"):
        return apply_to_model(EvolutionOperator(OpKind.REMOVE_VIEW, target=_qualified_path(ts)), model)
    if what.is_kw("FUNCTION"):
        return apply_to_model(EvolutionOperator(OpKind.REMOVE_PROCEDURE, target=_proc_path(model, ts)), model)
    if what.is_kw("TRIGGER"):
        name = ts.expect_ident().text
        ts.expect_kw("ON")
        table = _qualified_path(ts)
        trig_path = EntityPath((table.segments[0], name))
        return apply_to_model(EvolutionOperator(OpKind.REMOVE_TRIGGER, target=trig_path), model)
    raise SqlSyntaxError(f"unsupported DROP {what.text}")


def _apply_alter(model: SchemaModel, ts: TokenStream, stmt: str) -> SchemaModel:
    what = ts.next()
    if what.is_kw("TABLE"):
        path = _qualified_path(ts)
        return _apply_alter_table(model, ts, path, stmt)
    if what.is_kw("VIEW"):
        path = _qualified_path(ts)
        if ts.accept_kw("RENAME"):
            ts.expect_kw("TO")
            return apply_to_model(
                EvolutionOperator(OpKind.RENAME_VIEW, target=path, args={"new_name": ts.expect_ident().text}),
                model,
            )
        ts.expect_kw("SET")
        ts.expect_kw("SCHEMA")
        return apply_to_model(
            EvolutionOperator(OpKind.MOVE_VIEW, target=path, args={"namespace": ts.expect_ident().text}),
            model,
        )
    if what.is_kw("FUNCTION"):
        path = _proc_path(model, ts)
        if ts.accept_kw("RENAME"):
            ts.expect_kw("TO")
            return apply_to_model(
                EvolutionOperator(OpKind.RENAME_PROCEDURE, target=path, args={"new_name": ts.expect_ident().text}),
                model,
            )
        ts.expect_kw("SET")
        ts.expect_kw("SCHEMA")
        return apply_to_model(
            EvolutionOperator(OpKind.MOVE_PROCEDURE, target=path, args={"namespace": ts.expect_ident().text}),
            model,
        )
    raise SqlSyntaxError(f"unsupported ALTER {what.text}")


def _apply_alter_table(model: SchemaModel, ts: TokenStream, path: EntityPath, stmt: str) -> SchemaModel:
    current = model
    while True:
        action = ts.next()
        if action.is_kw("RENAME"):
            if ts.accept_kw("COLUMN"):
                old = ts.expect_ident().text
                ts.expect_kw("TO")
                new = ts.expect_ident().text
                current = apply_to_model(
                    EvolutionOperator(OpKind.RENAME_COLUMN, target=path.child(old), args={"new_name": new}),
                    current,
                )
            else:
                ts.expect_kw("TO")
                current = apply_to_model(
                    EvolutionOperator(OpKind.RENAME_TABLE, target=path, args={"new_name": ts.expect_ident().text}),
                    current,
                )
        elif action.is_kw("SET"):
            ts.expect_kw("SCHEMA")
            current = apply_to_model(
                EvolutionOperator(OpKind.MOVE_TABLE, target=path, args={"namespace": ts.expect_ident().text}),
                current,
            )
        elif action.is_kw("DROP"):
            if ts.accept_kw("COLUMN"):
                current = apply_to_model(
                    EvolutionOperator(OpKind.REMOVE_COLUMN, target=path.child(ts.expect_ident().text)),
                    current,
                )
            else:
                ts.expect_kw("CONSTRAINT")
                current = apply_to_model(
                    EvolutionOperator(OpKind.REMOVE_CONSTRAINT, target=path.child(ts.expect_ident().text)),
                    current,
                )
        elif action.is_kw("ADD"):
            if ts.accept_kw("COLUMN"):
                name = ts.expect_ident().text
                type_tokens = []
                while ts.peek() is not None and not (ts.peek().kind == OP and ts.peek().text == ","):
                    type_tokens.append(ts.next().text)
                current = apply_to_model(
                    EvolutionOperator(
                        OpKind.ADD_COLUMN,
                        target=path.child(name),
                        args={"type": " ".join(type_tokens) or "text"},
                    ),
                    current,
                )
            else:
                rest = ts.tokens[ts.pos - 1 :]
                stop = next(
                    (k for k, t in enumerate(rest) if t.kind == OP and t.text == "," and _depth(rest, k) == 0),
                    len(rest),
                )
                out = current.copy()
                used = {c.name for c in out.constraints_of(path)}
                raw = RawStatement(stmt, 0, tokenize(stmt))
                _add_table_constraint(out, path, rest[1 : stop], raw, used)
                new_names = {c.name for c in out.constraints_of(path)} - used
                for name in new_names:
                    diags = resolve_entity(out, path.child(name))
                    errors = [d for d in diags if d.severity == "error"]
                    if errors:
                        raise SchemaPlanError(f"constraint does not resolve: {errors[0].message}")
                current = out
                for _ in range(stop - 1):
                    if not ts.at_end():
                        ts.next()
        elif action.is_kw("ALTER"):
            ts.accept_kw("COLUMN")
            col = ts.expect_ident().text
            ts.expect_kw("TYPE")
            type_tokens = []
            while ts.peek() is not None and not (ts.peek().kind == OP and ts.peek().text == ","):
                type_tokens.append(ts.next().text)
            current = apply_to_model(
                EvolutionOperator(
                    OpKind.RETYPE_COLUMN, target=path.child(col), args={"type": " ".join(type_tokens)}
                ),
                current,
            )
        else:
            raise SqlSyntaxError(f"unsupported ALTER TABLE action {action.text}")
        if not ts.accept_op(","):
            break
        # comma-joined actions continue against the updated model
    return current


def _depth(tokens: list[Token], idx: int) -> int:
    depth = 0
    for t in tokens[:idx]:
        if t.kind == OP and t.text == "(":
            depth += 1
        elif t.kind == OP and t.text == ")":
            depth -= 1
    return depth


# -- model comparison ------------------------------------------------------------


def model_differences(a: SchemaModel, b: SchemaModel) -> list[str]:
    """Human-readable differences between the durable parts of two models."""
    out: list[str] = []
    keys_a = _durable_keys(a)
    keys_b = _durable_keys(b)
    for missing in sorted(keys_a - keys_b):
        out.append(f"only in first: {missing}")
    for missing in sorted(keys_b - keys_a):
        out.append(f"only in second: {missing}")
    for key in sorted(keys_a & keys_b):
        ea, eb = a.entities[key], b.entities[key]
        if ea.kind != eb.kind:
            out.append(f"{key}: kind {ea.kind.value} != {eb.kind.value}")
            continue
        if isinstance(ea, Column) and normalize_type(ea.declared_type) != normalize_type(eb.declared_type):
            out.append(f"{key}: type {ea.declared_type!r} != {eb.declared_type!r}")
        for attr in ("source_text",):
            ta, tb = getattr(ea, attr, None), getattr(eb, attr, None)
            if ta is not None and tb is not None and normalize_sql(ta) != normalize_sql(tb):
                out.append(f"{key}: source differs")
        if isinstance(ea, StoredProcedure):
            if [(-1, normalize_type(t)) for _, t in ea.params] != [(-1, normalize_type(t)) for _, t in eb.params]:
                out.append(f"{key}: parameter types differ")
            elif [n for n, _ in ea.params] != [n for n, _ in eb.params]:
                out.append(f"{key}: parameter names differ")
    return out


def _durable_keys(model: SchemaModel) -> set[str]:
    durable = {
        EntityKind.NAMESPACE,
        EntityKind.TABLE,
        EntityKind.COLUMN,
        EntityKind.CONSTRAINT,
        EntityKind.VIEW,
        EntityKind.STORED_PROCEDURE,
        EntityKind.TRIGGER,
    }
    return {
        key
        for key, entity in model.entities.items()
        if entity.kind in durable
    }
