"""Potential impact of an operator and its partition into coherent subsets.

The potential impact of changing an entity is the set of resolved
references aimed at it (for removals, at anything it contains as well).
Subsets group references by the treatment they need; for one operator the
subsets are pairwise disjoint and cover the whole impact.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NoSchemeForOperator, UnknownEntity
from .model import (
    Clause,
    ClauseKind,
    EntityKind,
    EntityPath,
    Reference,
    SchemaModel,
)
from .operators import (
    ADD_KINDS,
    EvolutionOperator,
    OpKind,
    find_reference,
)

# Subset labels, in presentation order.
LABEL_CONSTRAINTS = "constraints"
LABEL_VIEW_SELECT = "view.select"
LABEL_VIEW_OTHER = "view.other"
LABEL_TRIGGERS = "triggers"
LABEL_PROCEDURES = "procedures.unchecked"
LABEL_REMOVAL_CONSTRAINTS = "removal.constraints"
LABEL_REMOVAL_VIEWS = "removal.views"
LABEL_REMOVAL_TRIGGERS = "removal.triggers"
LABEL_REMOVAL_PROCEDURES = "removal.procedures"
LABEL_BODY = "body.variables"

_LABEL_ORDER = [
    LABEL_CONSTRAINTS,
    LABEL_VIEW_SELECT,
    LABEL_VIEW_OTHER,
    LABEL_TRIGGERS,
    LABEL_PROCEDURES,
    LABEL_REMOVAL_CONSTRAINTS,
    LABEL_REMOVAL_VIEWS,
    LABEL_REMOVAL_TRIGGERS,
    LABEL_REMOVAL_PROCEDURES,
    LABEL_BODY,
]


@dataclass
class CoherentSubset:
    operator_id: str
    label: str
    references: list[Reference]


_RENAMEISH_ENTITY = {
    OpKind.RENAME_TABLE,
    OpKind.MOVE_TABLE,
    OpKind.RENAME_VIEW,
    OpKind.MOVE_VIEW,
    OpKind.RENAME_PROCEDURE,
    OpKind.MOVE_PROCEDURE,
}

_REMOVALS = {
    OpKind.REMOVE_TABLE,
    OpKind.REMOVE_VIEW,
    OpKind.REMOVE_PROCEDURE,
    OpKind.REMOVE_COLUMN,
}

_NO_IMPACT = {
    OpKind.REMOVE_CONSTRAINT,
    OpKind.REMOVE_TRIGGER,
    OpKind.ADD_CONSTRAINT,
    OpKind.MODIFY_CHECK_CONSTRAINT,
    OpKind.MODIFY_BODY,
    OpKind.MODIFY_TRIGGER,
    OpKind.RENAME_REFERENCE_IN_CONSTRAINT,
    OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE,
    OpKind.RENAME_REFERENCE_IN_PROCEDURE,
    OpKind.ALIAS_IN_SELECT_CLAUSE,
    OpKind.IDENTITY,
    OpKind.DO_NOTHING,
    OpKind.HUMAN_DECISION,
}


def potential_impact(
    op: EvolutionOperator,
    model: SchemaModel,
    removal_targets: tuple[EntityPath, ...] = (),
) -> list[Reference]:
    """Resolved references the operator would disturb.

    removal_targets lists entities the same plan already removes; references
    owned inside them no longer matter and are excluded.
    """
    kind = op.kind
    if kind in ADD_KINDS or kind in _NO_IMPACT:
        return []
    if kind in _RENAMEISH_ENTITY:
        refs = model.dependents_of(op.target, include_contained=False)
    elif kind in _REMOVALS:
        refs = [
            r
            for r in model.dependents_of(op.target, include_contained=True)
            if not r.owner.is_within(op.target)
        ]
    elif kind in (OpKind.RENAME_COLUMN, OpKind.RETYPE_COLUMN):
        refs = model.dependents_of(op.target, include_contained=False)
    elif kind in (OpKind.RENAME_LOCAL_VARIABLE, OpKind.RENAME_PARAMETER):
        refs = model.dependents_of(op.target, include_contained=False)
    elif kind == OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE:
        refs = _view_column_dependents(op, model)
    elif kind == OpKind.MODIFY_VIEW_BODY:
        refs = _lost_output_dependents(op, model)
    else:
        raise NoSchemeForOperator(f"no impact rule for {kind.value}")
    out = []
    for ref in refs:
        if any(ref.owner.is_within(t) for t in removal_targets):
            continue
        if any(ref.root.is_within(t) for t in removal_targets):
            continue
        out.append(ref)
    out.sort(key=lambda r: (str(r.owner), r.span.start))
    return out


def _view_column_dependents(op: EvolutionOperator, model: SchemaModel) -> list[Reference]:
    ref = find_reference(model, op.ref)
    view_path = model.actionable_owner(ref.owner)
    owner = model.get(ref.owner)
    if not isinstance(owner, Clause) or owner.clause_kind != ClauseKind.SELECT:
        return []
    item = _item_containing(owner, ref)
    if item is None or item.output_name is None:
        return []
    column = view_path.child(item.output_name)
    if model.get(column) is None:
        return []
    return [
        r
        for r in model.dependents_of(column, include_contained=False)
        if not r.owner.is_within(view_path)
    ]


def _item_containing(clause: Clause, ref: Reference):
    for item in getattr(clause, "items", None) or []:
        if item.span.start <= ref.span.start and ref.span.end <= item.span.end:
            return item
    return None


def _lost_output_dependents(op: EvolutionOperator, model: SchemaModel) -> list[Reference]:
    from .parsing.lexer import tokenize
    from .parsing.queries import parse_query

    entity = model.get(op.target)
    if entity is None:
        raise UnknownEntity(f"unknown entity: {op.target}")
    query = op.args.get("query", "")
    new_names: set[str] = set()
    if query:
        parsed = parse_query(tokenize(query))
        select = parsed.clause(ClauseKind.SELECT)
        if select is not None and select.items is not None:
            new_names = {i.output_name for i in select.items if i.output_name}
    refs: list[Reference] = []
    for column in model.columns_of(op.target):
        if column.name in new_names:
            continue
        refs.extend(
            r
            for r in model.dependents_of(column.path, include_contained=False)
            if not r.owner.is_within(op.target)
        )
    return refs


def coherent_subsets(
    op: EvolutionOperator, impact: list[Reference], model: SchemaModel
) -> list[CoherentSubset]:
    """Partition the impact; every reference lands in exactly one subset."""
    kind = op.kind
    if kind in ADD_KINDS or kind in _NO_IMPACT:
        scheme = None
    elif kind in (
        OpKind.RENAME_COLUMN,
        OpKind.RETYPE_COLUMN,
        OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE,
    ):
        scheme = _classify_column_change
    elif kind in _RENAMEISH_ENTITY:
        scheme = _classify_entity_change
    elif kind in _REMOVALS or kind == OpKind.MODIFY_VIEW_BODY:
        scheme = _classify_removal
    elif kind in (OpKind.RENAME_LOCAL_VARIABLE, OpKind.RENAME_PARAMETER):
        scheme = lambda model, ref: LABEL_BODY  # noqa: E731
    else:
        raise NoSchemeForOperator(f"no subset scheme for {kind.value}")
    buckets: dict[str, list[Reference]] = {}
    for ref in impact:
        if scheme is None:
            raise NoSchemeForOperator(f"{kind.value} cannot have an impact")
        label = scheme(model, ref)
        buckets.setdefault(label, []).append(ref)
    return [
        CoherentSubset(op.op_id, label, buckets[label])
        for label in _LABEL_ORDER
        if label in buckets
    ]


def _owner_context(model: SchemaModel, ref: Reference) -> str:
    root = model.get(ref.root)
    owner = model.get(ref.owner)
    if root is not None and root.kind == EntityKind.STORED_PROCEDURE:
        return "procedure"
    if owner is not None and owner.kind == EntityKind.CONSTRAINT:
        return "constraint"
    if (root is not None and root.kind == EntityKind.TRIGGER) or (
        owner is not None and owner.kind == EntityKind.TRIGGER
    ):
        return "trigger"
    return "view"


def _names_view_output(model: SchemaModel, ref: Reference) -> bool:
    owner = model.get(ref.owner)
    if not isinstance(owner, Clause) or owner.clause_kind != ClauseKind.SELECT:
        return False
    root = model.get(ref.root)
    if root is None or root.kind != EntityKind.VIEW:
        return False
    query = owner.container
    if query is None or query.parent != root.path:
        return False  # select clause of a nested query, not the view's own
    item = _item_containing(owner, ref)
    if item is None or ref.wildcard:
        return False
    return item.alias_name is None and item.name_span == ref.span


def _classify_column_change(model: SchemaModel, ref: Reference) -> str:
    ctx = _owner_context(model, ref)
    if ctx == "procedure":
        return LABEL_PROCEDURES
    if ctx == "constraint":
        return LABEL_CONSTRAINTS
    if ctx == "trigger":
        return LABEL_TRIGGERS
    if _names_view_output(model, ref):
        return LABEL_VIEW_SELECT
    return LABEL_VIEW_OTHER


def _classify_entity_change(model: SchemaModel, ref: Reference) -> str:
    ctx = _owner_context(model, ref)
    if ctx == "procedure":
        return LABEL_PROCEDURES
    if ctx == "constraint":
        return LABEL_CONSTRAINTS
    if ctx == "trigger":
        return LABEL_TRIGGERS
    return LABEL_VIEW_OTHER


def _classify_removal(model: SchemaModel, ref: Reference) -> str:
    ctx = _owner_context(model, ref)
    if ctx == "procedure":
        return LABEL_REMOVAL_PROCEDURES
    if ctx == "constraint":
        return LABEL_REMOVAL_CONSTRAINTS
    if ctx == "trigger":
        return LABEL_REMOVAL_TRIGGERS
    return LABEL_REMOVAL_VIEWS
