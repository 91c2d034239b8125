"""Instantiate query, clause, and derived-table entities from parsed sources.

Synthetic path segments address structure inside a source-bearing entity:
``query:0`` under its container, ``<clausekind>:<n>`` per clause, and
``derived:<n>`` for subqueries. Rebuilding after a text edit reproduces the
same paths as long as the clause shape is unchanged.
"""

from __future__ import annotations

from ..model import (
    Clause,
    ClauseKind,
    Column,
    CrudQuery,
    DerivedTable,
    EntityKind,
    EntityPath,
    LocalVariable,
    SchemaModel,
    Span,
    StoredProcedure,
    Trigger,
    View,
)
from .lexer import tokenize
from .plpgsql import parse_body
from .queries import ParsedQuery, parse_query


def build_source_structure(model: SchemaModel, root: EntityPath) -> None:
    """(Re)create the structural children derived from an entity's source."""
    entity = model.require(root)
    _drop_derived_children(model, root)
    if isinstance(entity, View):
        parsed = parse_query(tokenize(entity.source_text))
        instantiate_query(model, root, parsed, 0)
        _create_output_columns(model, root, parsed)
    elif isinstance(entity, StoredProcedure):
        body = parse_body(entity.source_text)
        for name, type_text, span in body.variables:
            model.add(LocalVariable(root.child(name), type_text, span))
        for i, parsed in enumerate(body.queries):
            instantiate_query(model, root, parsed, i)
    elif isinstance(entity, Trigger):
        pass  # triggers carry no clause structure
    # constraints carry expressions only; no structural children


def _drop_derived_children(model: SchemaModel, root: EntityPath) -> None:
    derived_kinds = {
        EntityKind.QUERY,
        EntityKind.CLAUSE,
        EntityKind.DERIVED_TABLE,
        EntityKind.LOCAL_VARIABLE,
    }
    root_entity = model.require(root)
    for child in model.descendants_of(root):
        if child.kind in derived_kinds:
            model.discard(child.path)
        elif child.kind == EntityKind.COLUMN and isinstance(root_entity, View):
            model.discard(child.path)
        elif child.kind == EntityKind.COLUMN and child.container != root:
            model.discard(child.path)  # derived-table columns


def instantiate_query(
    model: SchemaModel, container: EntityPath, parsed: ParsedQuery, index: int
) -> EntityPath:
    qpath = container.child(f"query:{index}")
    model.add(CrudQuery(qpath, parsed.kind, parsed.span))
    counters: dict[ClauseKind, int] = {}
    for clause in parsed.clauses:
        n = counters.get(clause.kind, 0)
        counters[clause.kind] = n + 1
        cpath = qpath.child(f"{clause.kind.value}:{n}")
        entity = Clause(cpath, clause.kind, clause.span)
        model.add(entity)
        entity.items = clause.items
        for d_idx, sub in enumerate(clause.subqueries):
            dpath = cpath.child(f"derived:{d_idx}")
            model.add(DerivedTable(dpath, sub.span))
            instantiate_query(model, dpath, sub, 0)
            _create_output_columns(model, dpath, sub)
    return qpath


def clause_paths(model: SchemaModel, container: EntityPath, parsed: ParsedQuery, index: int):
    """Yield (clause_path, parsed_clause) pairs matching instantiate_query."""
    qpath = container.child(f"query:{index}")
    counters: dict[ClauseKind, int] = {}
    for clause in parsed.clauses:
        n = counters.get(clause.kind, 0)
        counters[clause.kind] = n + 1
        yield qpath.child(f"{clause.kind.value}:{n}"), clause


def _create_output_columns(model: SchemaModel, owner: EntityPath, parsed: ParsedQuery) -> None:
    """Columns a view or derived table exposes, computed from its select items."""
    select = parsed.clause(ClauseKind.SELECT)
    if select is None or select.items is None:
        return
    used: set[str] = set()
    ordinal = 0
    for item in select.items:
        ordinal += 1
        name = item.output_name or f"?column?{ordinal}"
        if name in used:
            name = f"{name}@{ordinal}"
        used.add(name)
        path = owner.child(name)
        if model.get(path) is None:
            model.add(Column(path, "", ordinal))
