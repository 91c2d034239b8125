"""Reference resolution.

Rebuilds the reference list of a model from the stored source texts.
Binding order for a bare identifier: local variables, then parameters, then
columns of the query's FROM/JOIN sources (inner scope before outer), then
tables/views/procedures in the entity's own namespace, then the default
namespace. Other namespaces require explicit qualification.

Unresolved identifiers inside stored-procedure bodies produce warnings and
stay in the model with resolved=False; anywhere else they are errors
because the RDBMS itself would reject the definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SqlSyntaxError
from ..model import (
    DEFAULT_NAMESPACE,
    Constraint,
    ConstraintKind,
    EntityKind,
    EntityPath,
    LocalVariable,
    Parameter,
    Reference,
    RefKind,
    SchemaModel,
    Span,
    StoredProcedure,
    Trigger,
    TypeRef,
    View,
    normalize_type,
)
from .builder import clause_paths
from .ddl import ParseDiagnostic
from .lexer import IDENT, OP, tokenize
from .plpgsql import parse_body
from .queries import (
    BUILTIN_FUNCTIONS,
    IdentPart,
    IdentUse,
    ParsedQuery,
    parse_query,
)

_PSEUDO_ROWS = ("new", "old")


@dataclass
class SourceBind:
    name: str
    target: EntityPath | None


@dataclass
class QueryScope:
    binds: list[SourceBind] = field(default_factory=list)
    ctes: dict[str, EntityPath] = field(default_factory=dict)
    parent: "QueryScope | None" = None

    def chain(self):
        scope = self
        while scope is not None:
            yield scope
            scope = scope.parent

    def find_cte(self, name: str) -> EntityPath | None:
        for scope in self.chain():
            if name in scope.ctes:
                return scope.ctes[name]
        return None


class _Resolver:
    def __init__(self, model: SchemaModel):
        self.model = model
        self.diags: list[ParseDiagnostic] = []

    # -- shared lookups ----------------------------------------------------

    def relation(self, parts: list[IdentPart], namespace: str, scope: QueryScope | None) -> EntityPath | None:
        """Resolve a table/view chain, honoring CTE binds and ns fallback."""
        if len(parts) == 1:
            name = parts[0].name
            if scope is not None:
                cte = scope.find_cte(name)
                if cte is not None:
                    return cte
            for ns in self._search_path(namespace):
                cand = EntityPath((ns, name))
                ent = self.model.get(cand)
                if ent is not None and ent.kind in (EntityKind.TABLE, EntityKind.VIEW):
                    return cand
            return None
        if len(parts) == 2:
            cand = EntityPath((parts[0].name, parts[1].name))
            ent = self.model.get(cand)
            if ent is not None and ent.kind in (EntityKind.TABLE, EntityKind.VIEW):
                return cand
        return None

    def _search_path(self, namespace: str) -> list[str]:
        return [namespace] if namespace == DEFAULT_NAMESPACE else [namespace, DEFAULT_NAMESPACE]

    def procedure(self, parts: list[IdentPart], namespace: str, arg_count: int | None) -> tuple[EntityPath | None, bool]:
        """Resolve a call; the flag reports ambiguity among overloads."""
        if len(parts) == 1:
            spaces = self._search_path(namespace)
            name = parts[0].name
        else:
            spaces = [parts[0].name]
            name = parts[1].name
        for ns in spaces:
            candidates = [
                p
                for p in self.model.procedures()
                if p.path.segments[0] == ns and p.name == name
            ]
            if not candidates:
                continue
            if len(candidates) == 1:
                return candidates[0].path, False
            if arg_count is not None:
                by_count = [p for p in candidates if len(p.params) == arg_count]
                if len(by_count) == 1:
                    return by_count[0].path, False
            return None, True
        return None, False

    def type_ref(self, name: str) -> EntityPath:
        path = EntityPath(("pg_catalog", normalize_type(name)))
        if self.model.get(path) is None:
            self.model.add(TypeRef(normalize_type(name)))
        return path

    def diag(self, checked: bool, message: str, span: Span) -> None:
        severity = "error" if checked else "warning"
        self.diags.append(ParseDiagnostic(severity, message, (span.start, span.end)))

    # -- reference emission ---------------------------------------------------

    def emit(
        self,
        kind: RefKind,
        owner: EntityPath,
        root: EntityPath,
        span: Span,
        target: EntityPath | None,
        *,
        full_span: Span | None = None,
        wildcard: bool = False,
    ) -> Reference:
        ref = Reference(
            kind=kind,
            owner=owner,
            root=root,
            span=span,
            target=target,
            resolved=target is not None,
            wildcard=wildcard,
            full_span=full_span,
        )
        self.model.references.append(ref)
        return ref

    # -- use resolution ------------------------------------------------------

    def resolve_use(
        self,
        use: IdentUse,
        owner: EntityPath,
        root: EntityPath,
        scope: QueryScope | None,
        namespace: str,
        variables: dict[str, EntityPath],
        checked: bool,
    ) -> None:
        parts = use.parts
        if not parts:
            return
        if parts[0].name in _PSEUDO_ROWS and not parts[0].quoted:
            return  # trigger-function row aliases
        terminal = parts[-1]
        full = Span(parts[0].span.start, terminal.span.end)
        if use.use == "cast":
            self.emit(RefKind.TYPE, owner, root, terminal.span, self.type_ref(terminal.name))
            return
        if use.use == "wildcard":
            self._resolve_wildcard(use, owner, root, scope, checked)
            return
        if use.use == "call":
            target, ambiguous = self.procedure(parts, namespace, use.arg_count)
            if target is None:
                if not ambiguous and len(parts) == 1 and not terminal.quoted and terminal.name in BUILTIN_FUNCTIONS:
                    return
                self.diag(
                    checked,
                    ("ambiguous call to " if ambiguous else "unresolved call to ") + terminal.name,
                    terminal.span,
                )
                self.emit(RefKind.PROCEDURE_CALL, owner, root, terminal.span, None, full_span=full)
                return
            self.emit(RefKind.PROCEDURE_CALL, owner, root, terminal.span, target, full_span=full)
            return
        if use.use in ("source", "insert_table", "update_table"):
            target = self.relation(parts, namespace, scope)
            if target is None:
                self.diag(checked, f"unresolved relation {terminal.name}", terminal.span)
                self.emit(RefKind.TABLE, owner, root, terminal.span, None, full_span=full)
                return
            self.emit(RefKind.TABLE, owner, root, terminal.span, target, full_span=full)
            return
        if use.use == "into_target":
            if len(parts) == 1 and parts[0].name in variables:
                self.emit(RefKind.VARIABLE, owner, root, terminal.span, variables[parts[0].name])
                return
            target = self.relation(parts, namespace, scope)
            if target is not None:
                self.emit(RefKind.TABLE, owner, root, terminal.span, target, full_span=full)
                return
            self.diag(checked, f"unresolved INTO target {terminal.name}", terminal.span)
            self.emit(RefKind.VARIABLE, owner, root, terminal.span, None)
            return
        if use.use in ("insert_col", "set_col") and len(parts) == 1:
            # column lists of INSERT/UPDATE name columns of the target table,
            # never variables, even inside procedure bodies
            columns = self._find_column(scope, terminal.name)
            if len(columns) == 1:
                self.emit(RefKind.COLUMN, owner, root, terminal.span, columns[0])
            else:
                self.diag(checked, f"unresolved column {terminal.name}", terminal.span)
                self.emit(RefKind.COLUMN, owner, root, terminal.span, None)
            return
        self._resolve_value(use, owner, root, scope, namespace, variables, checked)

    def _resolve_wildcard(
        self,
        use: IdentUse,
        owner: EntityPath,
        root: EntityPath,
        scope: QueryScope | None,
        checked: bool,
    ) -> None:
        parts = use.parts
        star = parts[-1]
        if len(parts) == 1:
            if scope is None:
                return
            for bind in scope.binds:
                if bind.target is not None:
                    self.emit(RefKind.TABLE, owner, root, star.span, bind.target, wildcard=True)
            return
        qualifier = parts[0]
        bind = self._find_bind(scope, qualifier.name)
        if bind is None or bind.target is None:
            self.diag(checked, f"unresolved source {qualifier.name}", qualifier.span)
            self.emit(RefKind.TABLE, owner, root, star.span, None, wildcard=True)
            return
        span = qualifier.span if bind.target.name == qualifier.name else star.span
        self.emit(RefKind.TABLE, owner, root, span, bind.target, wildcard=True)

    def _find_bind(self, scope: QueryScope | None, name: str) -> SourceBind | None:
        if scope is None:
            return None
        for sc in scope.chain():
            for bind in sc.binds:
                if bind.name == name:
                    return bind
        return None

    def _find_column(self, scope: QueryScope | None, name: str) -> list[EntityPath]:
        if scope is None:
            return []
        for sc in scope.chain():
            found = []
            for bind in sc.binds:
                if bind.target is None:
                    continue
                cand = bind.target.child(name)
                if self.model.get(cand) is not None:
                    found.append(cand)
            if found:
                return found
        return []

    def _resolve_value(
        self,
        use: IdentUse,
        owner: EntityPath,
        root: EntityPath,
        scope: QueryScope | None,
        namespace: str,
        variables: dict[str, EntityPath],
        checked: bool,
    ) -> None:
        parts = use.parts
        terminal = parts[-1]
        full = Span(parts[0].span.start, terminal.span.end)
        if len(parts) == 1:
            name = terminal.name
            if name in variables:
                var = self.model.get(variables[name])
                kind = RefKind.VARIABLE
                self.emit(kind, owner, root, terminal.span, variables[name])
                return
            columns = self._find_column(scope, name)
            if len(columns) == 1:
                self.emit(RefKind.COLUMN, owner, root, terminal.span, columns[0])
                return
            if len(columns) > 1:
                self.diag(checked, f"ambiguous column {name}", terminal.span)
                self.emit(RefKind.COLUMN, owner, root, terminal.span, None)
                return
            relation = self.relation(parts, namespace, scope)
            if relation is not None:
                self.emit(RefKind.TABLE, owner, root, terminal.span, relation, full_span=full)
                return
            target, ambiguous = self.procedure(parts, namespace, None)
            if target is not None:
                self.emit(RefKind.PROCEDURE_CALL, owner, root, terminal.span, target, full_span=full)
                return
            self.diag(checked, f"unresolved identifier {name}", terminal.span)
            self.emit(RefKind.COLUMN, owner, root, terminal.span, None)
            return
        # qualified chain: [q, col] or [ns, rel, col]
        if len(parts) == 2:
            qualifier, col = parts
            bind = self._find_bind(scope, qualifier.name)
            if bind is not None:
                if bind.target is not None and bind.target.name == qualifier.name:
                    self.emit(RefKind.TABLE, owner, root, qualifier.span, bind.target)
                if bind.target is None:
                    self.emit(RefKind.COLUMN, owner, root, col.span, None)
                    return
                cand = bind.target.child(col.name)
                if self.model.get(cand) is None:
                    self.diag(checked, f"unknown column {col.name} of {bind.target}", col.span)
                    self.emit(RefKind.COLUMN, owner, root, col.span, None)
                    return
                self.emit(RefKind.COLUMN, owner, root, col.span, cand)
                return
            relation = self.relation([qualifier], namespace, scope)
            if relation is None and self.model.get(EntityPath((qualifier.name,))) is not None:
                rel2 = self.relation([col], qualifier.name, None)
                if rel2 is not None and rel2.segments[0] == qualifier.name:
                    self.emit(RefKind.TABLE, owner, root, col.span, rel2, full_span=full)
                    return
            self.diag(checked, f"unresolved qualifier {qualifier.name}", qualifier.span)
            self.emit(RefKind.COLUMN, owner, root, col.span, None)
            return
        if len(parts) == 3:
            ns, rel, col = parts
            target_rel = EntityPath((ns.name, rel.name))
            ent = self.model.get(target_rel)
            if ent is not None and ent.kind in (EntityKind.TABLE, EntityKind.VIEW):
                self.emit(RefKind.TABLE, owner, root, rel.span, target_rel)
                cand = target_rel.child(col.name)
                if self.model.get(cand) is not None:
                    self.emit(RefKind.COLUMN, owner, root, col.span, cand)
                    return
                self.diag(checked, f"unknown column {col.name} of {target_rel}", col.span)
                self.emit(RefKind.COLUMN, owner, root, col.span, None)
                return
        self.diag(checked, "unresolved qualified reference", Span(parts[0].span.start, terminal.span.end))
        self.emit(RefKind.COLUMN, owner, root, terminal.span, None)

    # -- walking ---------------------------------------------------------------

    def walk_query(
        self,
        container: EntityPath,
        parsed: ParsedQuery,
        index: int,
        parent_scope: QueryScope | None,
        namespace: str,
        root: EntityPath,
        variables: dict[str, EntityPath],
        checked: bool,
    ) -> None:
        pairs = list(clause_paths(self.model, container, parsed, index))
        scope = QueryScope(parent=parent_scope)
        for cpath, clause in pairs:
            for i, cte_name in enumerate(clause.cte_names):
                scope.ctes[cte_name] = cpath.child(f"derived:{i}")
            for src in clause.sources:
                if src.derived_index is not None:
                    target = cpath.child(f"derived:{src.derived_index}")
                elif src.is_call:
                    target_path, _ambig = self.procedure(src.parts, namespace, None)
                    target = target_path
                else:
                    target = self.relation(src.parts, namespace, scope)
                scope.binds.append(SourceBind(src.bind_name, target))
        for cpath, clause in pairs:
            for use in clause.uses:
                self.resolve_use(use, cpath, root, scope, namespace, variables, checked)
        for cpath, clause in pairs:
            for d_idx, sub in enumerate(clause.subqueries):
                dpath = cpath.child(f"derived:{d_idx}")
                self.walk_query(dpath, sub, 0, scope, namespace, root, variables, checked)

    def resolve_view(self, view: View) -> None:
        parsed = parse_query(tokenize(view.source_text))
        namespace = view.path.segments[0]
        self.walk_query(view.path, parsed, 0, None, namespace, view.path, {}, checked=True)

    def resolve_procedure(self, proc: StoredProcedure) -> None:
        body = parse_body(proc.source_text)
        namespace = proc.path.segments[0]
        variables: dict[str, EntityPath] = {}
        for child in self.model.children_of(proc.path):
            if isinstance(child, (Parameter, LocalVariable)):
                variables[child.name] = child.path
        for i, parsed in enumerate(body.queries):
            self.walk_query(proc.path, parsed, i, None, namespace, proc.path, variables, checked=False)
        for use in body.loose_uses:
            self.resolve_use(use, proc.path, proc.path, None, namespace, variables, checked=False)

    def resolve_trigger(self, trig: Trigger) -> None:
        tokens = tokenize(trig.source_text)
        table_at = None
        of_cols: list[IdentPart] = []
        when_region: list = []
        proc_parts: list[IdentPart] = []
        table_parts: list[IdentPart] = []
        i = 0
        n = len(tokens)
        while i < n:
            tok = tokens[i]
            if tok.is_kw("OF") and table_at is None:
                i += 1
                while i < n and not tokens[i].is_kw("ON"):
                    if tokens[i].kind == IDENT:
                        of_cols.append(IdentPart(tokens[i].text, tokens[i].quoted, Span(tokens[i].start, tokens[i].end)))
                    i += 1
                continue
            if tok.is_kw("ON") and table_at is None:
                table_at = i
                i += 1
                while i < n and tokens[i].kind == IDENT:
                    table_parts.append(IdentPart(tokens[i].text, tokens[i].quoted, Span(tokens[i].start, tokens[i].end)))
                    if i + 1 < n and tokens[i + 1].kind == OP and tokens[i + 1].text == ".":
                        i += 2
                    else:
                        i += 1
                        break
                continue
            if tok.is_kw("WHEN"):
                j = i + 1
                depth = 0
                while j < n:
                    if tokens[j].kind == OP and tokens[j].text == "(":
                        depth += 1
                    elif tokens[j].kind == OP and tokens[j].text == ")":
                        depth -= 1
                        if depth == 0:
                            break
                    j += 1
                when_region = tokens[i + 1 : j + 1]
                i = j + 1
                continue
            if tok.is_kw("EXECUTE"):
                i += 1
                if i < n and tokens[i].is_kw("PROCEDURE", "FUNCTION"):
                    i += 1
                while i < n and tokens[i].kind == IDENT:
                    proc_parts.append(IdentPart(tokens[i].text, tokens[i].quoted, Span(tokens[i].start, tokens[i].end)))
                    if i + 1 < n and tokens[i + 1].kind == OP and tokens[i + 1].text == ".":
                        i += 2
                    else:
                        i += 1
                        break
                continue
            i += 1
        owner = trig.path
        table = trig.table
        if table_parts and table is not None:
            self.emit(RefKind.TABLE, owner, trig.path, table_parts[-1].span, table,
                      full_span=Span(table_parts[0].span.start, table_parts[-1].span.end))
        for col in of_cols:
            cand = table.child(col.name) if table is not None else None
            if cand is None or self.model.get(cand) is None:
                self.diag(True, f"unknown trigger column {col.name}", col.span)
                self.emit(RefKind.COLUMN, owner, trig.path, col.span, None)
            else:
                self.emit(RefKind.COLUMN, owner, trig.path, col.span, cand)
        if proc_parts:
            target, ambiguous = self.procedure(proc_parts, trig.path.segments[0], None)
            if target is None:
                self.diag(True, "unresolved trigger procedure", proc_parts[-1].span)
                self.emit(RefKind.PROCEDURE_CALL, owner, trig.path, proc_parts[-1].span, None,
                          full_span=Span(proc_parts[0].span.start, proc_parts[-1].span.end))
            else:
                trig.procedure = target
                self.emit(RefKind.PROCEDURE_CALL, owner, trig.path, proc_parts[-1].span, target,
                          full_span=Span(proc_parts[0].span.start, proc_parts[-1].span.end))
        if when_region and table is not None:
            from .queries import ParsedClause
            from ..model import ClauseKind as CK

            bucket = ParsedClause(CK.WHERE, Span(0, 0))
            from .queries import _scan_expression

            _scan_expression(bucket, when_region)
            scope = QueryScope(binds=[SourceBind(table.name, table)])
            for use in bucket.uses:
                self.resolve_use(use, owner, trig.path, scope, trig.path.segments[0], {}, checked=True)

    def resolve_constraint(self, constraint: Constraint) -> None:
        tokens = tokenize(constraint.source_text)
        owner = constraint.path
        table = constraint.container
        kind = constraint.constraint_kind
        if kind in (ConstraintKind.PRIMARY_KEY, ConstraintKind.UNIQUE):
            for tok in tokens:
                if tok.kind == IDENT and not tok.is_kw("PRIMARY", "KEY", "UNIQUE"):
                    self._emit_own_column(constraint, tok)
            return
        if kind == ConstraintKind.FOREIGN_KEY:
            ref_at = next((k for k, t in enumerate(tokens) if t.is_kw("REFERENCES")), None)
            if ref_at is None:
                return
            for tok in tokens[:ref_at]:
                if tok.kind == IDENT and not tok.is_kw("FOREIGN", "KEY"):
                    self._emit_own_column(constraint, tok)
            rest = tokens[ref_at + 1 :]
            parts: list[IdentPart] = []
            i = 0
            while i < len(rest) and rest[i].kind == IDENT:
                parts.append(IdentPart(rest[i].text, rest[i].quoted, Span(rest[i].start, rest[i].end)))
                if i + 1 < len(rest) and rest[i + 1].kind == OP and rest[i + 1].text == ".":
                    i += 2
                else:
                    i += 1
                    break
            target = self.relation(parts, table.segments[0], None) if parts else None
            if target is None:
                self.diag(True, "unresolved foreign key target", Span(rest[0].start, rest[0].end) if rest else Span(0, 0))
                if parts:
                    self.emit(RefKind.TABLE, owner, owner, parts[-1].span, None)
            else:
                self.emit(
                    RefKind.TABLE, owner, owner, parts[-1].span, target,
                    full_span=Span(parts[0].span.start, parts[-1].span.end),
                )
                for tok in rest[i:]:
                    if tok.kind == IDENT:
                        cand = target.child(tok.text)
                        if self.model.get(cand) is None:
                            self.diag(True, f"unknown column {tok.text} of {target}", Span(tok.start, tok.end))
                            self.emit(RefKind.COLUMN, owner, owner, Span(tok.start, tok.end), None)
                        else:
                            self.emit(RefKind.COLUMN, owner, owner, Span(tok.start, tok.end), cand)
            return
        if kind in (ConstraintKind.CHECK, ConstraintKind.DEFAULT):
            from .queries import ParsedClause, _scan_expression
            from ..model import ClauseKind as CK

            start = 1  # skip CHECK / DEFAULT keyword
            bucket = ParsedClause(CK.WHERE, Span(0, 0))
            _scan_expression(bucket, tokens[start:])
            scope = QueryScope(binds=[SourceBind(table.name, table)])
            allow_columns = kind == ConstraintKind.CHECK
            for use in bucket.uses:
                if not allow_columns and use.use == "value":
                    self.diag(True, f"identifier {use.parts[-1].name} not allowed in DEFAULT", use.parts[-1].span)
                    self.emit(RefKind.COLUMN, owner, owner, use.parts[-1].span, None)
                    continue
                self.resolve_use(use, owner, owner, scope, table.segments[0], {}, checked=True)
            return
        # NOT NULL carries no references

    def _emit_own_column(self, constraint: Constraint, tok) -> None:
        cand = constraint.container.child(tok.text)
        span = Span(tok.start, tok.end)
        if self.model.get(cand) is None:
            self.diag(True, f"unknown column {tok.text}", span)
            self.emit(RefKind.COLUMN, constraint.path, constraint.path, span, None)
        else:
            self.emit(RefKind.COLUMN, constraint.path, constraint.path, span, cand)


def resolve_references(model: SchemaModel) -> tuple[SchemaModel, list[ParseDiagnostic]]:
    """Return a resolved copy of the model plus resolution diagnostics."""
    out = model.copy()
    out.references = []
    resolver = _Resolver(out)
    entities = sorted(out.entities.values(), key=lambda e: str(e.path))
    for entity in entities:
        try:
            if isinstance(entity, View):
                resolver.resolve_view(entity)
            elif isinstance(entity, StoredProcedure):
                resolver.resolve_procedure(entity)
            elif isinstance(entity, Trigger):
                resolver.resolve_trigger(entity)
            elif isinstance(entity, Constraint):
                resolver.resolve_constraint(entity)
        except SqlSyntaxError as err:
            resolver.diags.append(ParseDiagnostic("error", err.message, err.span))
    return out, resolver.diags


def resolve_entity(model: SchemaModel, root: EntityPath) -> list[ParseDiagnostic]:
    """Re-resolve one source-bearing entity in place, dropping its old refs."""
    model.references = [r for r in model.references if r.root != root]
    resolver = _Resolver(model)
    entity = model.require(root)
    if isinstance(entity, View):
        resolver.resolve_view(entity)
    elif isinstance(entity, StoredProcedure):
        resolver.resolve_procedure(entity)
    elif isinstance(entity, Trigger):
        resolver.resolve_trigger(entity)
    elif isinstance(entity, Constraint):
        resolver.resolve_constraint(entity)
    return resolver.diags
