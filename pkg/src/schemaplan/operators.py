"""Evolution operators: definitions, actionable entities, model application.

apply_to_model implements the semantics the RDBMS would enforce:

* auto cells: renames/moves rewrite the referencing spans of checked
  entities (views, constraints, triggers); a select-list rewrite preserves
  the view's output column name by introducing an alias.
* no cells: with strict=True, changing an entity that checked entities
  still reference raises IllegalOnReferencedEntity. Sessions apply
  operators permissively because sibling operators handle the referencers.
* unchecked cells: procedure bodies are never rewritten; their references
  to a changed entity lose resolution until an explicit reference operator
  fixes them (or the change is reverted).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    ContradictsModel,
    IllegalOnReferencedEntity,
    NoSqlForm,
    UnknownEntity,
)
from .model import (
    Clause,
    ClauseKind,
    Column,
    Constraint,
    ConstraintKind,
    Entity,
    EntityKind,
    EntityPath,
    Namespace,
    Parameter,
    Reference,
    SchemaModel,
    Span,
    StoredProcedure,
    Table,
    TextEdit,
    Trigger,
    View,
    apply_source_edits,
    parse_path,
)
from .parsing.builder import build_source_structure
from .parsing.resolver import resolve_entity


class OpKind(str, Enum):
    ADD_TABLE = "AddTable"
    REMOVE_TABLE = "RemoveTable"
    RENAME_TABLE = "RenameTable"
    MOVE_TABLE = "MoveTable"
    ADD_COLUMN = "AddColumn"
    REMOVE_COLUMN = "RemoveColumn"
    RENAME_COLUMN = "RenameColumn"
    RETYPE_COLUMN = "RetypeColumn"
    ADD_CONSTRAINT = "AddConstraint"
    REMOVE_CONSTRAINT = "RemoveConstraint"
    MODIFY_CHECK_CONSTRAINT = "ModifyCheckConstraint"
    RENAME_REFERENCE_IN_CONSTRAINT = "RenameReferenceInConstraint"
    ADD_VIEW = "AddView"
    REMOVE_VIEW = "RemoveView"
    RENAME_VIEW = "RenameView"
    MOVE_VIEW = "MoveView"
    MODIFY_VIEW_BODY = "ModifyViewBody"
    RENAME_REFERENCE_IN_SELECT_CLAUSE = "RenameReferenceInSelectClause"
    RENAME_REFERENCE_IN_NON_SELECT_CLAUSE = "RenameReferenceInNonSelectClause"
    ALIAS_IN_SELECT_CLAUSE = "AliasInSelectClause"
    ADD_PROCEDURE = "AddStoredProcedure"
    REMOVE_PROCEDURE = "RemoveStoredProcedure"
    RENAME_PROCEDURE = "RenameStoredProcedure"
    MOVE_PROCEDURE = "MoveStoredProcedure"
    MODIFY_BODY = "ModifyBody"
    RENAME_LOCAL_VARIABLE = "RenameLocalVariable"
    RENAME_PARAMETER = "RenameParameter"
    RENAME_REFERENCE_IN_PROCEDURE = "RenameReferenceInStoredProcedure"
    ADD_TRIGGER = "AddTrigger"
    REMOVE_TRIGGER = "RemoveTrigger"
    MODIFY_TRIGGER = "ModifyTrigger"
    IDENTITY = "Identity"
    DO_NOTHING = "DoNothing"
    HUMAN_DECISION = "HumanDecision"


REFERENCE_ORIENTED = frozenset(
    {
        OpKind.RENAME_REFERENCE_IN_CONSTRAINT,
        OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE,
        OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE,
        OpKind.RENAME_REFERENCE_IN_PROCEDURE,
        OpKind.ALIAS_IN_SELECT_CLAUSE,
    }
)

ADD_KINDS = frozenset(
    {
        OpKind.ADD_TABLE,
        OpKind.ADD_COLUMN,
        OpKind.ADD_CONSTRAINT,
        OpKind.ADD_VIEW,
        OpKind.ADD_PROCEDURE,
        OpKind.ADD_TRIGGER,
    }
)

REMOVE_KINDS = frozenset(
    {
        OpKind.REMOVE_TABLE,
        OpKind.REMOVE_COLUMN,
        OpKind.REMOVE_CONSTRAINT,
        OpKind.REMOVE_VIEW,
        OpKind.REMOVE_PROCEDURE,
        OpKind.REMOVE_TRIGGER,
    }
)


@dataclass(frozen=True)
class RefHandle:
    """Stable address of a reference: owner path plus capture-time span."""

    owner: EntityPath
    span: Span
    uid: str | None = None

    def to_json(self) -> dict:
        return {"owner": str(self.owner), "span": self.span.to_json()}

    @staticmethod
    def from_json(data: dict) -> "RefHandle":
        return RefHandle(parse_path(data["owner"]), Span(*data["span"]))


@dataclass(frozen=True)
class Provenance:
    source: str  # user | recommendation
    ref: RefHandle | None = None
    parent: str | None = None  # parent operator id


USER = Provenance("user")


@dataclass
class EvolutionOperator:
    kind: OpKind
    target: EntityPath | None = None
    ref: RefHandle | None = None
    args: dict = field(default_factory=dict)
    op_id: str = ""
    provenance: Provenance = USER

    def describe(self) -> str:
        subject = str(self.target) if self.target is not None else (
            f"{self.ref.owner}@{self.ref.span.start}-{self.ref.span.end}" if self.ref else "?"
        )
        extra = ""
        if "new_name" in self.args:
            extra = f" -> {self.args['new_name']}"
        elif "namespace" in self.args:
            extra = f" -> {self.args['namespace']}"
        elif "new_text" in self.args:
            extra = f" -> {self.args['new_text']}"
        return f"{self.kind.value}({subject}{extra})"

    def to_json(self) -> dict:
        out = {"op": self.kind.value, "args": self.args}
        if self.target is not None:
            out["target"] = str(self.target)
        if self.ref is not None:
            out["reference"] = self.ref.to_json()
        return out


def operator_from_json(data: dict) -> EvolutionOperator:
    try:
        kind = OpKind(data["op"])
    except ValueError:
        raise ContradictsModel(f"unknown operator kind {data.get('op')!r}")
    target = parse_path(data["target"]) if "target" in data else None
    ref = RefHandle.from_json(data["reference"]) if "reference" in data else None
    if kind in REFERENCE_ORIENTED and ref is None:
        raise ContradictsModel(f"{kind.value} requires a reference target")
    if kind not in REFERENCE_ORIENTED and kind not in (OpKind.DO_NOTHING, OpKind.HUMAN_DECISION) and target is None:
        raise ContradictsModel(f"{kind.value} requires an entity target")
    return EvolutionOperator(kind, target=target, ref=ref, args=dict(data.get("args", {})))


def find_reference(model: SchemaModel, handle: RefHandle) -> Reference:
    if handle.uid is not None:
        for ref in model.references:
            if ref.uid == handle.uid:
                return ref
    for ref in model.references:
        if ref.owner == handle.owner and ref.span == handle.span:
            return ref
    raise UnknownEntity(f"no reference at {handle.owner}@{handle.span.start}-{handle.span.end}")


def actionable_entity(op: EvolutionOperator, model: SchemaModel) -> EntityPath:
    """The entity an SQL command acts on to realize this operator."""
    if op.kind in REFERENCE_ORIENTED:
        ref = find_reference(model, op.ref)
        return model.actionable_owner(ref.owner)
    if op.target is None:
        raise UnknownEntity(f"{op.kind.value} has no target")
    if op.kind in ADD_KINDS:
        if op.kind in (OpKind.ADD_COLUMN, OpKind.ADD_CONSTRAINT):
            return op.target.parent
        if op.kind == OpKind.ADD_PROCEDURE:
            return procedure_path_for_add(op)
        return op.target
    entity = model.require(op.target)
    if entity.kind in (EntityKind.COLUMN, EntityKind.CONSTRAINT):
        return model.actionable_owner(entity.container)
    return model.actionable_owner(op.target)


# -- path rewriting -----------------------------------------------------------


def _remap(path: EntityPath, old: EntityPath, new: EntityPath) -> EntityPath:
    if path.is_within(old):
        return EntityPath(new.segments + path.segments[len(old.segments) :])
    return path


def rename_entity_paths(model: SchemaModel, old: EntityPath, new: EntityPath) -> None:
    """Move an entity subtree to a new path and retarget resolved references."""
    moved = [e for e in model.entities.values() if e.path.is_within(old)]
    for entity in moved:
        model.entities.pop(str(entity.path))
    for entity in moved:
        entity.path = _remap(entity.path, old, new)
        if entity.container is not None:
            entity.container = _remap(entity.container, old, new)
        model.entities[str(entity.path)] = entity
    for entity in model.entities.values():
        if isinstance(entity, Trigger):
            if entity.table is not None:
                entity.table = _remap(entity.table, old, new)
            if entity.procedure is not None:
                entity.procedure = _remap(entity.procedure, old, new)
        elif isinstance(entity, Constraint) and entity.ref_table is not None:
            entity.ref_table = _remap(entity.ref_table, old, new)
        if entity.container is not None and entity.container.is_within(old):
            entity.container = _remap(entity.container, old, new)
    for ref in model.references:
        ref.owner = _remap(ref.owner, old, new)
        ref.root = _remap(ref.root, old, new)
        if ref.target is not None and ref.resolved:
            ref.target = _remap(ref.target, old, new)


def reattach_references(model: SchemaModel) -> None:
    """Re-resolve dangling references whose last known target exists again."""
    for ref in model.references:
        if ref.resolved or ref.target is None:
            continue
        entity = model.get(ref.target)
        if entity is None:
            continue
        root = model.get(ref.root)
        if root is None:
            continue
        text = getattr(root, "source_text", "")
        token = text[ref.span.start : ref.span.end] if ref.span.end <= len(text) else ""
        if token and (token.lower() == entity.name or token == entity.name):
            ref.resolved = True


def checked_referencers(
    model: SchemaModel,
    target: EntityPath,
    *,
    include_contained: bool = True,
    exclude_within: EntityPath | None = None,
) -> list[Reference]:
    """Resolved references from checked roots aimed at the entity/subtree."""
    out = []
    for ref in model.dependents_of(target, include_contained=include_contained):
        if exclude_within is not None and ref.owner.is_within(exclude_within):
            continue
        root_entity = model.get(ref.root)
        if root_entity is None or root_entity.kind == EntityKind.STORED_PROCEDURE:
            continue
        out.append(ref)
    return out


def _dangle_unchecked(model: SchemaModel, target: EntityPath, include_contained: bool) -> None:
    for ref in model.references:
        if not ref.resolved or ref.target is None:
            continue
        if ref.target == target or (include_contained and ref.target.is_within(target)):
            root_entity = model.get(ref.root)
            if root_entity is not None and root_entity.kind == EntityKind.STORED_PROCEDURE:
                ref.resolved = False  # last known target stays recorded


def _dangle_all(model: SchemaModel, target: EntityPath) -> None:
    """Detach every reference to target; used where nothing auto-updates."""
    for ref in model.references:
        if ref.resolved and ref.target == target:
            ref.resolved = False


def refresh_source(model: SchemaModel, root: EntityPath) -> None:
    """Rebuild structure after a span-level edit; references are kept."""
    entity = model.get(root)
    if entity is None:
        return
    if entity.kind in (EntityKind.VIEW, EntityKind.STORED_PROCEDURE):
        build_source_structure(model, root)


def _splice_checked_refs(
    model: SchemaModel,
    target: EntityPath,
    new_text_for: callable,
    *,
    use_full_span: bool = False,
) -> None:
    """Rewrite every checked reference to target; procedures dangle instead."""
    by_root: dict[str, list[TextEdit]] = {}
    roots: dict[str, EntityPath] = {}
    for ref in model.references:
        if not ref.resolved or ref.target != target:
            continue
        root_entity = model.get(ref.root)
        if root_entity is None:
            continue
        if root_entity.kind == EntityKind.STORED_PROCEDURE:
            ref.resolved = False
            continue
        edit = new_text_for(model, ref)
        if edit is None:
            continue
        span = (ref.full_span if use_full_span and ref.full_span is not None else ref.span)
        edits = by_root.setdefault(str(ref.root), [])
        roots[str(ref.root)] = ref.root
        if isinstance(edit, TextEdit):
            edits.append(edit)
        else:
            edits.append(TextEdit(span, edit, ref_uid=ref.uid))
    for key, edits in by_root.items():
        apply_source_edits(model, roots[key], edits)
        refresh_source(model, roots[key])


def _plain_rename_edit(new_name: str):
    def build(model: SchemaModel, ref: Reference):
        if ref.wildcard and ref.span.end - ref.span.start == 1:
            return None  # bare star tokens carry no name to rewrite
        return new_name

    return build


def _qualified_edit(namespace: str, name: str):
    text = f"{namespace}.{name}"

    def build(model: SchemaModel, ref: Reference):
        if ref.wildcard and ref.span.end - ref.span.start == 1:
            return None
        span = ref.full_span or ref.span
        return TextEdit(span, text, ref_uid=ref.uid, ref_span=Span(len(namespace) + 1, len(text)))

    return build


_CAST_TAIL = re.compile(r"[)\s]*(::\s*[A-Za-z_][\w ]*\s*[)]*\s*)*")


def _column_rename_edit(model: SchemaModel, new_name: str):
    """Column rename propagation; keeps view output names via an alias."""

    def build(m: SchemaModel, ref: Reference):
        owner = m.get(ref.owner)
        if isinstance(owner, Clause) and owner.clause_kind == ClauseKind.SELECT:
            item = _item_for_ref(owner, ref)
            if item is not None and item.alias_name is None and item.name_span == ref.span:
                old = item.output_name
                if old is not None and old != new_name:
                    return TextEdit(
                        Span(ref.span.start, item.span.end),
                        _splice_tail(m, ref, item, new_name) + f" AS {old}",
                        ref_uid=ref.uid,
                        ref_span=Span(0, len(new_name)),
                    )
            elif item is not None and item.alias_name == new_name:
                keep = _text_before_alias(m, ref, item)
                if _CAST_TAIL.fullmatch(keep):
                    # renaming back to the aliased name: drop the alias
                    return TextEdit(
                        Span(ref.span.start, item.span.end),
                        new_name + keep,
                        ref_uid=ref.uid,
                        ref_span=Span(0, len(new_name)),
                    )
        return new_name

    return build


def _splice_tail(model: SchemaModel, ref: Reference, item, new_name: str) -> str:
    """Item text from the reference to the item end, with the name replaced."""
    text = model.source_of(ref.root)
    return new_name + text[ref.span.end : item.span.end]


def _item_for_ref(clause: Clause, ref: Reference):
    items = getattr(clause, "items", None) or []
    for item in items:
        if item.span.start <= ref.span.start and ref.span.end <= item.span.end:
            return item
    return None


# -- application ---------------------------------------------------------------


def apply_to_model(
    op: EvolutionOperator, model: SchemaModel, *, strict: bool = True
) -> SchemaModel:
    """Return a new model with the operator applied.

    strict enforces the availability matrix: changes to entities that
    checked entities still reference are rejected instead of cascaded.
    """
    if op.kind == OpKind.HUMAN_DECISION:
        raise NoSqlForm("a human decision cannot be applied to the model")
    out = model.copy()
    handler = _HANDLERS[op.kind]
    handler(op, out, strict)
    reattach_references(out)
    return out


def _require_target(op: EvolutionOperator, model: SchemaModel, kind: EntityKind) -> Entity:
    entity = model.get(op.target)
    if entity is None:
        raise UnknownEntity(f"unknown entity: {op.target}")
    if entity.kind != kind:
        raise ContradictsModel(f"{op.kind.value} target {op.target} is a {entity.kind.value}")
    return entity


def _require_absent(model: SchemaModel, path: EntityPath) -> None:
    if model.get(path) is not None:
        raise ContradictsModel(f"{path} already exists")


def _new_name(op: EvolutionOperator) -> str:
    name = op.args.get("new_name")
    if not name:
        raise ContradictsModel(f"{op.kind.value} requires args.new_name")
    return name.lower() if not op.args.get("quoted") else name


def _namespace_arg(op: EvolutionOperator, model: SchemaModel) -> str:
    ns = op.args.get("namespace")
    if not ns:
        raise ContradictsModel(f"{op.kind.value} requires args.namespace")
    ns = ns.lower()
    if model.get(EntityPath((ns,))) is None:
        raise UnknownEntity(f"unknown namespace: {ns}")
    return ns


# table ------------------------------------------------------------------------


def _do_add_table(op, model, strict):
    _require_absent(model, op.target)
    ns = op.target.segments[0]
    if model.get(EntityPath((ns,))) is None:
        model.add(Namespace(ns))
    model.add(Table(op.target))
    for i, col in enumerate(op.args.get("columns", []), start=1):
        model.add(Column(op.target.child(col["name"].lower()), col.get("type", "text"), i))


def _do_remove_table(op, model, strict):
    _require_entity_kind_for_remove(op, model, EntityKind.TABLE, strict)


def _require_entity_kind_for_remove(op, model, kind, strict):
    entity = model.get(op.target)
    if entity is None:
        if strict:
            raise UnknownEntity(f"unknown entity: {op.target}")
        return  # already gone (cascaded earlier in the same plan)
    if entity.kind != kind:
        raise ContradictsModel(f"{op.kind.value} target {op.target} is a {entity.kind.value}")
    blockers = checked_referencers(model, op.target, exclude_within=op.target)
    if strict and blockers:
        first = blockers[0]
        raise IllegalOnReferencedEntity(
            f"cannot {op.kind.value} {op.target}: referenced by {first.owner}"
        )
    _remove_entity_tree(model, op.target)


def _remove_entity_tree(model: SchemaModel, path: EntityPath) -> None:
    entity = model.require(path)
    doomed = {str(path)}
    for child in model.descendants_of(path):
        doomed.add(str(child.path))
    if entity.kind == EntityKind.TABLE:
        for trig in model.triggers_on(path):
            doomed.add(str(trig.path))
    for key in doomed:
        model.entities.pop(key, None)
    model.references = [
        r for r in model.references if str(r.root) not in doomed
    ]
    for ref in model.references:
        if ref.resolved and ref.target is not None and str(ref.target) in doomed:
            ref.resolved = False
    # also references owned inside doomed entities but rooted elsewhere
    model.references = [
        r for r in model.references if not any(r.owner.is_within(parse_path(d)) for d in doomed)
    ]


def _do_rename_table(op, model, strict):
    entity = _require_target(op, model, EntityKind.TABLE)
    new_name = _new_name(op)
    new_path = EntityPath(op.target.segments[:-1] + (new_name,))
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _plain_rename_edit(new_name))
    rename_entity_paths(model, op.target, new_path)


def _do_move_table(op, model, strict):
    _require_target(op, model, EntityKind.TABLE)
    ns = _namespace_arg(op, model)
    new_path = EntityPath((ns,) + op.target.segments[1:])
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _qualified_edit(ns, op.target.name), use_full_span=True)
    rename_entity_paths(model, op.target, new_path)


# column -----------------------------------------------------------------------


def _do_add_column(op, model, strict):
    _require_absent(model, op.target)
    table = model.get(op.target.parent)
    if table is None or table.kind != EntityKind.TABLE:
        raise UnknownEntity(f"unknown table: {op.target.parent}")
    ordinal = max((c.ordinal for c in model.columns_of(table.path)), default=0) + 1
    model.add(Column(op.target, op.args.get("type", "text"), ordinal))


def _do_remove_column(op, model, strict):
    entity = model.get(op.target)
    if entity is None:
        if strict:
            raise UnknownEntity(f"unknown entity: {op.target}")
        return
    if entity.kind != EntityKind.COLUMN:
        raise ContradictsModel(f"RemoveColumn target {op.target} is a {entity.kind.value}")
    table_path = entity.container
    own_constraints = [
        c
        for c in model.constraints_of(table_path)
        if entity.name in c.columns
        or any(
            r.resolved and r.target == op.target
            for r in model.references
            if r.owner == c.path
        )
    ]
    own_paths = {str(c.path) for c in own_constraints}
    blockers = [
        b
        for b in checked_referencers(model, op.target)
        if str(model.source_root_of(b.owner)) not in own_paths
    ]
    if strict and blockers:
        raise IllegalOnReferencedEntity(
            f"cannot RemoveColumn {op.target}: referenced by {blockers[0].owner}"
        )
    for constraint in own_constraints:
        _remove_entity_tree(model, constraint.path)
    _remove_entity_tree(model, op.target)


def _do_rename_column(op, model, strict):
    entity = _require_target(op, model, EntityKind.COLUMN)
    new_name = _new_name(op)
    new_path = entity.container.child(new_name)
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _column_rename_edit(model, new_name))
    rename_entity_paths(model, op.target, new_path)


def _do_retype_column(op, model, strict):
    entity = _require_target(op, model, EntityKind.COLUMN)
    new_type = op.args.get("type")
    if not new_type:
        raise ContradictsModel("RetypeColumn requires args.type")
    entity.declared_type = new_type


# constraints --------------------------------------------------------------------


def _constraint_fragment(op: EvolutionOperator) -> tuple[ConstraintKind, str, dict]:
    kind_name = op.args.get("constraint_kind", "check").lower()
    try:
        ckind = ConstraintKind(kind_name)
    except ValueError:
        raise ContradictsModel(f"unknown constraint kind {kind_name!r}")
    cols = [c.lower() for c in op.args.get("columns", [])]
    extra: dict = {"columns": cols}
    if ckind == ConstraintKind.CHECK:
        expr = op.args.get("expression")
        if not expr:
            raise ContradictsModel("check constraint requires args.expression")
        frag = f"CHECK ({expr})"
        extra["expression"] = expr
    elif ckind == ConstraintKind.PRIMARY_KEY:
        frag = f"PRIMARY KEY ({', '.join(cols)})"
    elif ckind == ConstraintKind.UNIQUE:
        frag = f"UNIQUE ({', '.join(cols)})"
    elif ckind == ConstraintKind.FOREIGN_KEY:
        ref_table = op.args.get("ref_table")
        ref_cols = [c.lower() for c in op.args.get("ref_columns", [])]
        if not ref_table or not ref_cols:
            raise ContradictsModel("foreign key requires args.ref_table and args.ref_columns")
        frag = f"FOREIGN KEY ({', '.join(cols)}) REFERENCES {ref_table}({', '.join(ref_cols)})"
        extra["ref_table"] = parse_path(ref_table)
        extra["ref_columns"] = ref_cols
    elif ckind == ConstraintKind.NOT_NULL:
        frag = "NOT NULL"
    else:  # DEFAULT
        expr = op.args.get("expression")
        if not expr:
            raise ContradictsModel("default constraint requires args.expression")
        frag = f"DEFAULT {expr}"
        extra["expression"] = expr
    return ckind, frag, extra


def _do_add_constraint(op, model, strict):
    _require_absent(model, op.target)
    table = model.get(op.target.parent)
    if table is None or table.kind != EntityKind.TABLE:
        raise UnknownEntity(f"unknown table: {op.target.parent}")
    ckind, frag, extra = _constraint_fragment(op)
    constraint = Constraint(
        op.target,
        ckind,
        extra.get("columns", []),
        frag,
        expression=extra.get("expression"),
        ref_table=extra.get("ref_table"),
        ref_columns=extra.get("ref_columns", []),
    )
    model.add(constraint)
    diags = resolve_entity(model, op.target)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ContradictsModel(f"constraint does not resolve: {errors[0].message}")


def _do_remove_constraint(op, model, strict):
    _require_entity_kind_for_remove(op, model, EntityKind.CONSTRAINT, strict)


def _do_modify_check_constraint(op, model, strict):
    entity = _require_target(op, model, EntityKind.CONSTRAINT)
    if entity.constraint_kind != ConstraintKind.CHECK:
        raise ContradictsModel("ModifyCheckConstraint only applies to check constraints")
    expr = op.args.get("expression")
    if not expr:
        raise ContradictsModel("ModifyCheckConstraint requires args.expression")
    entity.expression = expr
    entity.source_text = f"CHECK ({expr})"
    diags = resolve_entity(model, op.target)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ContradictsModel(f"constraint does not resolve: {errors[0].message}")


# views ----------------------------------------------------------------------------


def _do_add_view(op, model, strict):
    _require_absent(model, op.target)
    query = op.args.get("query")
    if not query:
        raise ContradictsModel("AddView requires args.query")
    view = model.add(View(op.target, query))
    build_source_structure(model, view.path)
    diags = resolve_entity(model, op.target)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ContradictsModel(f"view does not resolve: {errors[0].message}")


def _do_remove_view(op, model, strict):
    _require_entity_kind_for_remove(op, model, EntityKind.VIEW, strict)


def _do_rename_view(op, model, strict):
    _require_target(op, model, EntityKind.VIEW)
    new_name = _new_name(op)
    new_path = EntityPath(op.target.segments[:-1] + (new_name,))
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _plain_rename_edit(new_name))
    rename_entity_paths(model, op.target, new_path)


def _do_move_view(op, model, strict):
    _require_target(op, model, EntityKind.VIEW)
    ns = _namespace_arg(op, model)
    new_path = EntityPath((ns,) + op.target.segments[1:])
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _qualified_edit(ns, op.target.name), use_full_span=True)
    rename_entity_paths(model, op.target, new_path)


def _view_output_names(model: SchemaModel, path: EntityPath) -> list[str]:
    return [c.name for c in model.columns_of(path)]


def _do_modify_view_body(op, model, strict):
    entity = _require_target(op, model, EntityKind.VIEW)
    query = op.args.get("query")
    if not query:
        raise ContradictsModel("ModifyViewBody requires args.query")
    old_outputs = _view_output_names(model, op.target)
    entity.source_text = query
    model.references = [r for r in model.references if r.root != op.target]
    build_source_structure(model, op.target)
    diags = resolve_entity(model, op.target)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ContradictsModel(f"view does not resolve: {errors[0].message}")
    new_outputs = _view_output_names(model, op.target)
    if new_outputs[: len(old_outputs)] != old_outputs:
        lost = [n for n in old_outputs if n not in new_outputs]
        for name in lost:
            _dangle_unchecked(model, op.target.child(name), False)
        blockers = [
            b
            for b in checked_referencers(model, op.target, exclude_within=op.target)
        ]
        if strict and blockers:
            raise IllegalOnReferencedEntity(
                f"cannot change the columns of {op.target}: referenced by {blockers[0].owner}"
            )
        for ref in model.references:
            if (
                ref.resolved
                and ref.target is not None
                and ref.target.parent == op.target
                and model.get(ref.target) is None
            ):
                ref.resolved = False


# view reference operators -----------------------------------------------------------


def _resolve_ref_for_op(op: EvolutionOperator, model: SchemaModel) -> Reference:
    return find_reference(model, op.ref)


def _do_rename_reference_in_select_clause(op, model, strict):
    """Rename a select-list reference and with it the view's output column.

    When the item carries an alias equal to the old output name (the shape
    an automatic column-rename rewrite leaves behind), the alias is dropped
    so the new name becomes the output name.
    """
    ref = _resolve_ref_for_op(op, model)
    new_text = op.args.get("new_text") or op.args.get("new_name")
    if not new_text:
        raise ContradictsModel("rename reference requires args.new_text")
    owner = model.get(ref.owner)
    view_path = model.actionable_owner(ref.owner)
    view = model.get(view_path)
    if view is None or view.kind != EntityKind.VIEW:
        raise ContradictsModel("reference does not belong to a view select clause")
    item = _item_for_ref(owner, ref) if isinstance(owner, Clause) else None
    old_output = item.output_name if item is not None else None
    new_output = new_text.split(".")[-1]
    renames_output = item is not None and old_output is not None and old_output != new_output
    if renames_output and strict:
        blockers = checked_referencers(model, view_path, exclude_within=view_path)
        if blockers:
            raise IllegalOnReferencedEntity(
                f"cannot change the columns of {view_path}: referenced by {blockers[0].owner}"
            )
    if item is not None and item.alias_name is not None:
        keep = _text_before_alias(model, ref, item)
        edit = TextEdit(
            Span(ref.span.start, item.span.end),
            new_text + keep,
            ref_uid=ref.uid,
            ref_span=Span(0, len(new_text)),
        )
    else:
        edit = TextEdit(ref.span, new_text, ref_uid=ref.uid)
    apply_source_edits(model, ref.root, [edit])
    _retarget_reference(model, ref, op.args.get("new_target"))
    if renames_output:
        old_col = view_path.child(old_output)
        new_col = view_path.child(new_output)
        if model.get(old_col) is not None:
            _dangle_all(model, old_col)  # the RDBMS updates no referencer here
            rename_entity_paths(model, old_col, new_col)
    refresh_source(model, ref.root)


def _text_before_alias(model: SchemaModel, ref: Reference, item) -> str:
    text = model.source_of(ref.root)
    upto = item.alias_span.start
    segment = text[ref.span.end : upto]
    trimmed = segment.rstrip()
    if trimmed.lower().endswith("as"):
        trimmed = trimmed[:-2].rstrip()
    return trimmed


def _retarget_reference(model: SchemaModel, ref: Reference, new_target: str | None) -> None:
    if new_target:
        ref.target = parse_path(new_target)
        ref.resolved = model.get(ref.target) is not None
    else:
        ref.resolved = ref.target is not None and model.get(ref.target) is not None


def _do_alias_in_select_clause(op, model, strict):
    ref = _resolve_ref_for_op(op, model)
    new_text = op.args.get("new_text") or op.args.get("new_name")
    alias = op.args.get("alias")
    if not new_text or not alias:
        raise ContradictsModel("AliasInSelectClause requires args.new_text and args.alias")
    owner = model.get(ref.owner)
    item = _item_for_ref(owner, ref) if isinstance(owner, Clause) else None
    if item is not None and item.alias_name == alias:
        edit = TextEdit(ref.span, new_text, ref_uid=ref.uid)
    else:
        edit = TextEdit(
            ref.span,
            f"{new_text} AS {alias}",
            ref_uid=ref.uid,
            ref_span=Span(0, len(new_text)),
        )
    apply_source_edits(model, ref.root, [edit])
    _retarget_reference(model, ref, op.args.get("new_target"))
    refresh_source(model, ref.root)


def _do_rename_reference_plain(op, model, strict):
    ref = _resolve_ref_for_op(op, model)
    new_text = op.args.get("new_text") or op.args.get("new_name")
    if not new_text:
        raise ContradictsModel("rename reference requires args.new_text")
    span = ref.full_span if op.args.get("qualified") and ref.full_span is not None else ref.span
    edit = TextEdit(span, new_text, ref_uid=ref.uid, ref_span=_terminal_span(new_text))
    apply_source_edits(model, ref.root, [edit])
    _retarget_reference(model, ref, op.args.get("new_target"))
    refresh_source(model, ref.root)


def _terminal_span(text: str) -> Span:
    if "." in text:
        start = text.rindex(".") + 1
        return Span(start, len(text))
    return Span(0, len(text))


# procedures ---------------------------------------------------------------------


def procedure_path_for_add(op: EvolutionOperator) -> EntityPath:
    from .model import normalize_type

    if "(" in op.target.segments[-1]:
        return op.target
    params = [(p[0].lower(), p[1]) for p in op.args.get("params", [])]
    sig = ",".join(normalize_type(t) for _, t in params)
    return EntityPath(op.target.segments[:-1] + (f"{op.target.name}({sig})",))


def _do_add_procedure(op, model, strict):
    params = [(p[0].lower(), p[1]) for p in op.args.get("params", [])]
    body = op.args.get("body")
    if body is None:
        raise ContradictsModel("AddStoredProcedure requires args.body")
    path = procedure_path_for_add(op)
    _require_absent(model, path)
    proc = model.add(
        StoredProcedure(path, params, op.args.get("returns", "void"), "plpgsql", body)
    )
    for i, (pname, ptype) in enumerate(params, start=1):
        model.add(Parameter(path.child(pname), ptype, i))
    build_source_structure(model, path)
    resolve_entity(model, path)


def _do_remove_procedure(op, model, strict):
    _require_entity_kind_for_remove(op, model, EntityKind.STORED_PROCEDURE, strict)


def _do_rename_procedure(op, model, strict):
    entity = _require_target(op, model, EntityKind.STORED_PROCEDURE)
    new_name = _new_name(op)
    new_terminal = f"{new_name}({entity.signature})"
    new_path = EntityPath(op.target.segments[:-1] + (new_terminal,))
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _plain_rename_edit(new_name))
    rename_entity_paths(model, op.target, new_path)


def _do_move_procedure(op, model, strict):
    entity = _require_target(op, model, EntityKind.STORED_PROCEDURE)
    ns = _namespace_arg(op, model)
    new_path = EntityPath((ns,) + op.target.segments[1:])
    _require_absent(model, new_path)
    _splice_checked_refs(model, op.target, _qualified_edit(ns, entity.name), use_full_span=True)
    rename_entity_paths(model, op.target, new_path)


def _do_modify_body(op, model, strict):
    entity = _require_target(op, model, EntityKind.STORED_PROCEDURE)
    body = op.args.get("body")
    if body is None:
        raise ContradictsModel("ModifyBody requires args.body")
    entity.source_text = body
    model.references = [r for r in model.references if r.root != op.target]
    build_source_structure(model, op.target)
    resolve_entity(model, op.target)


def _rename_variable(op, model, strict, kind: EntityKind):
    entity = model.get(op.target)
    if entity is None:
        raise UnknownEntity(f"unknown entity: {op.target}")
    if entity.kind != kind:
        raise ContradictsModel(f"{op.kind.value} target is a {entity.kind.value}")
    proc_path = entity.container
    proc = model.require(proc_path)
    new_name = _new_name(op)
    _require_absent(model, proc_path.child(new_name))
    edits: list[TextEdit] = []
    if kind == EntityKind.LOCAL_VARIABLE and entity.decl_span is not None:
        edits.append(TextEdit(entity.decl_span, new_name))
    for ref in model.references:
        if ref.resolved and ref.target == op.target and ref.root == proc_path:
            edits.append(TextEdit(ref.span, new_name, ref_uid=ref.uid))
    if edits:
        apply_source_edits(model, proc_path, edits)
    if kind == EntityKind.PARAMETER:
        proc.params = [
            (new_name if name == entity.name else name, ptype) for name, ptype in proc.params
        ]
    rename_entity_paths(model, op.target, proc_path.child(new_name))
    refresh_source(model, proc_path)


def _do_rename_local_variable(op, model, strict):
    _rename_variable(op, model, strict, EntityKind.LOCAL_VARIABLE)


def _do_rename_parameter(op, model, strict):
    _rename_variable(op, model, strict, EntityKind.PARAMETER)


# triggers ------------------------------------------------------------------------


def _do_add_trigger(op, model, strict):
    definition = op.args.get("definition")
    if not definition:
        raise ContradictsModel("AddTrigger requires args.definition")
    _require_absent(model, op.target)
    from .parsing.lexer import tokenize
    from .parsing.ddl import RawStatement, _parse_create_trigger
    from .parsing.lexer import TokenStream

    tokens = tokenize(definition)
    ts = TokenStream(tokens, len(definition))
    ts.expect_kw("CREATE")
    ts.expect_kw("TRIGGER")
    _parse_create_trigger(model, ts, RawStatement(definition, 0, tokens))
    created = model.get(op.target)
    if created is None:
        raise ContradictsModel("trigger definition does not match the target path")
    diags = resolve_entity(model, op.target)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ContradictsModel(f"trigger does not resolve: {errors[0].message}")


def _do_remove_trigger(op, model, strict):
    _require_entity_kind_for_remove(op, model, EntityKind.TRIGGER, strict)


def _do_modify_trigger(op, model, strict):
    entity = _require_target(op, model, EntityKind.TRIGGER)
    definition = op.args.get("definition")
    if not definition:
        raise ContradictsModel("ModifyTrigger requires args.definition")
    entity.source_text = definition
    diags = resolve_entity(model, op.target)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ContradictsModel(f"trigger does not resolve: {errors[0].message}")


# special ---------------------------------------------------------------------------


def _do_identity(op, model, strict):
    model.require(op.target)


def _do_nothing(op, model, strict):
    return


_HANDLERS = {
    OpKind.ADD_TABLE: _do_add_table,
    OpKind.REMOVE_TABLE: _do_remove_table,
    OpKind.RENAME_TABLE: _do_rename_table,
    OpKind.MOVE_TABLE: _do_move_table,
    OpKind.ADD_COLUMN: _do_add_column,
    OpKind.REMOVE_COLUMN: _do_remove_column,
    OpKind.RENAME_COLUMN: _do_rename_column,
    OpKind.RETYPE_COLUMN: _do_retype_column,
    OpKind.ADD_CONSTRAINT: _do_add_constraint,
    OpKind.REMOVE_CONSTRAINT: _do_remove_constraint,
    OpKind.MODIFY_CHECK_CONSTRAINT: _do_modify_check_constraint,
    OpKind.RENAME_REFERENCE_IN_CONSTRAINT: _do_rename_reference_plain,
    OpKind.ADD_VIEW: _do_add_view,
    OpKind.REMOVE_VIEW: _do_remove_view,
    OpKind.RENAME_VIEW: _do_rename_view,
    OpKind.MOVE_VIEW: _do_move_view,
    OpKind.MODIFY_VIEW_BODY: _do_modify_view_body,
    OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE: _do_rename_reference_in_select_clause,
    OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE: _do_rename_reference_plain,
    OpKind.ALIAS_IN_SELECT_CLAUSE: _do_alias_in_select_clause,
    OpKind.ADD_PROCEDURE: _do_add_procedure,
    OpKind.REMOVE_PROCEDURE: _do_remove_procedure,
    OpKind.RENAME_PROCEDURE: _do_rename_procedure,
    OpKind.MOVE_PROCEDURE: _do_move_procedure,
    OpKind.MODIFY_BODY: _do_modify_body,
    OpKind.RENAME_LOCAL_VARIABLE: _do_rename_local_variable,
    OpKind.RENAME_PARAMETER: _do_rename_parameter,
    OpKind.RENAME_REFERENCE_IN_PROCEDURE: _do_rename_reference_plain,
    OpKind.ADD_TRIGGER: _do_add_trigger,
    OpKind.REMOVE_TRIGGER: _do_remove_trigger,
    OpKind.MODIFY_TRIGGER: _do_modify_trigger,
    OpKind.IDENTITY: _do_identity,
    OpKind.DO_NOTHING: _do_nothing,
}
