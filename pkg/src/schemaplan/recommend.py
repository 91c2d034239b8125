"""Recommendation catalog: candidate operators per coherent subset.

The whole catalog lives in this module so the inferred completions (the
cases the running example does not exercise) are reviewable in one place.
Candidates are listed lexicographically by kind then target for stable
presentation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .impact import (
    LABEL_BODY,
    LABEL_CONSTRAINTS,
    LABEL_PROCEDURES,
    LABEL_REMOVAL_CONSTRAINTS,
    LABEL_REMOVAL_PROCEDURES,
    LABEL_REMOVAL_TRIGGERS,
    LABEL_REMOVAL_VIEWS,
    LABEL_TRIGGERS,
    LABEL_VIEW_OTHER,
    LABEL_VIEW_SELECT,
    CoherentSubset,
)
from .model import EntityPath, Reference, SchemaModel
from .operators import (
    EvolutionOperator,
    OpKind,
    Provenance,
    RefHandle,
)


@dataclass
class Recommendation:
    rec_id: str
    reference: RefHandle
    candidate: EvolutionOperator
    description: str

    def to_json(self) -> dict:
        return {
            "id": self.rec_id,
            "kind": self.candidate.kind.value,
            "reference": self.reference.to_json(),
            "description": self.description,
        }


def _handle(ref: Reference) -> RefHandle:
    return RefHandle(ref.owner, ref.span, uid=ref.uid)


def _new_target_of(op: EvolutionOperator, model: SchemaModel) -> tuple[str, EntityPath | None]:
    """New reference text and new target path implied by the parent change."""
    kind = op.kind
    if kind in (OpKind.RENAME_COLUMN, OpKind.RETYPE_COLUMN):
        new = op.args.get("new_name", "")
        return new, op.target.parent.child(new) if new else None
    if kind in (OpKind.RENAME_TABLE, OpKind.RENAME_VIEW):
        new = op.args["new_name"]
        return new, EntityPath(op.target.segments[:-1] + (new,))
    if kind == OpKind.RENAME_PROCEDURE:
        entity = model.require(op.target)
        new = op.args["new_name"]
        return new, EntityPath(op.target.segments[:-1] + (f"{new}({entity.signature})",))
    if kind in (OpKind.MOVE_TABLE, OpKind.MOVE_VIEW, OpKind.MOVE_PROCEDURE):
        ns = op.args["namespace"]
        return f"{ns}.{op.target.name}", EntityPath((ns,) + op.target.segments[1:])
    if kind == OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE:
        from .operators import find_reference

        new = op.args.get("new_text") or op.args.get("new_name", "")
        new_output = new.split(".")[-1]
        ref = find_reference(model, op.ref)
        view = model.actionable_owner(ref.owner)
        return new_output, view.child(new_output)
    if kind in (OpKind.RENAME_LOCAL_VARIABLE, OpKind.RENAME_PARAMETER):
        new = op.args["new_name"]
        return new, model.require(op.target).container.child(new)
    return "", None


def recommendations_for(
    subset: CoherentSubset,
    model: SchemaModel,
    parent: EvolutionOperator,
) -> dict[str, list[Recommendation]]:
    """Candidates per impacted reference, keyed by the reference's handle key."""
    out: dict[str, list[Recommendation]] = {}
    for ref in subset.references:
        candidates = _candidates(subset.label, ref, model, parent)
        candidates.sort(key=lambda c: (c.kind.value, str(c.target) if c.target else ""))
        handle = _handle(ref)
        key = f"{handle.owner}@{handle.span.start}-{handle.span.end}"
        out[key] = [
            Recommendation(
                rec_id=f"{key}#{i}",
                reference=handle,
                candidate=candidate,
                description=_describe(candidate, ref, model),
            )
            for i, candidate in enumerate(candidates)
        ]
    return out


def _candidates(
    label: str, ref: Reference, model: SchemaModel, parent: EvolutionOperator
) -> list[EvolutionOperator]:
    prov = Provenance("recommendation", _handle(ref), parent.op_id)
    handle = _handle(ref)

    def mk(kind: OpKind, target: EntityPath | None = None, **args) -> EvolutionOperator:
        if kind in (
            OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE,
            OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE,
            OpKind.RENAME_REFERENCE_IN_PROCEDURE,
            OpKind.RENAME_REFERENCE_IN_CONSTRAINT,
            OpKind.ALIAS_IN_SELECT_CLAUSE,
        ):
            return EvolutionOperator(kind, ref=handle, args=args, provenance=prov)
        return EvolutionOperator(kind, target=target, args=args, provenance=prov)

    if parent.kind == OpKind.RETYPE_COLUMN:
        # type compatibility cannot be decided statically
        return [mk(OpKind.DO_NOTHING, ref.target), mk(OpKind.HUMAN_DECISION, ref.target)]

    new_text, new_target = _new_target_of(parent, model)
    target_str = str(new_target) if new_target is not None else None

    if label in (LABEL_CONSTRAINTS, LABEL_TRIGGERS):
        # the RDBMS rewrites these on its own
        return [mk(OpKind.DO_NOTHING, ref.target)]
    if label == LABEL_VIEW_SELECT:
        old_output = _output_name_for(model, ref)
        return [
            mk(
                OpKind.ALIAS_IN_SELECT_CLAUSE,
                new_text=new_text,
                alias=old_output,
                new_target=target_str,
            ),
            mk(
                OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE,
                new_text=new_text,
                new_target=target_str,
            ),
        ]
    if label == LABEL_VIEW_OTHER:
        qualified = parent.kind in (OpKind.MOVE_TABLE, OpKind.MOVE_VIEW, OpKind.MOVE_PROCEDURE)
        return [
            mk(
                OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE,
                new_text=new_text,
                new_target=target_str,
                qualified=qualified,
            )
        ]
    if label == LABEL_PROCEDURES or label == LABEL_BODY:
        qualified = parent.kind in (OpKind.MOVE_TABLE, OpKind.MOVE_VIEW, OpKind.MOVE_PROCEDURE)
        return [
            mk(
                OpKind.RENAME_REFERENCE_IN_PROCEDURE,
                new_text=new_text,
                new_target=target_str,
                qualified=qualified,
            )
        ]
    if label == LABEL_REMOVAL_CONSTRAINTS:
        constraint = model.source_root_of(ref.owner)
        return [mk(OpKind.REMOVE_CONSTRAINT, constraint)]
    if label == LABEL_REMOVAL_VIEWS:
        view = model.actionable_owner(ref.owner)
        return [
            mk(OpKind.HUMAN_DECISION, view, hint="rewrite the view body without this reference"),
            mk(OpKind.REMOVE_VIEW, view),
        ]
    if label == LABEL_REMOVAL_TRIGGERS:
        trigger = model.source_root_of(ref.owner)
        return [
            mk(OpKind.HUMAN_DECISION, trigger, hint="adjust the trigger definition manually"),
            mk(OpKind.REMOVE_TRIGGER, trigger),
        ]
    if label == LABEL_REMOVAL_PROCEDURES:
        proc = model.source_root_of(ref.owner)
        return [mk(OpKind.HUMAN_DECISION, proc, hint="no automated fix for a procedure caller")]
    raise AssertionError(f"no candidates defined for subset {label!r}")


def _output_name_for(model: SchemaModel, ref: Reference) -> str:
    owner = model.get(ref.owner)
    for item in getattr(owner, "items", None) or []:
        if item.span.start <= ref.span.start and ref.span.end <= item.span.end:
            if item.output_name:
                return item.output_name
    return model.require(ref.target).name if ref.target else ""


def _describe(candidate: EvolutionOperator, ref: Reference, model: SchemaModel) -> str:
    kind = candidate.kind
    if kind == OpKind.DO_NOTHING:
        return "do nothing: the database updates this reference on its own"
    if kind == OpKind.HUMAN_DECISION:
        return candidate.args.get("hint", "decide manually")
    if kind == OpKind.ALIAS_IN_SELECT_CLAUSE:
        return (
            f"alias the column: select {candidate.args['new_text']}"
            f" AS {candidate.args['alias']} (keeps the view's output unchanged)"
        )
    if kind == OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE:
        return (
            f"replace the reference with {candidate.args['new_text']}"
            " (renames the view's output column)"
        )
    if kind in (OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE, OpKind.RENAME_REFERENCE_IN_PROCEDURE):
        return f"replace the reference with {candidate.args['new_text']}"
    if kind == OpKind.REMOVE_VIEW:
        return f"remove view {candidate.target}"
    if kind == OpKind.REMOVE_CONSTRAINT:
        return f"remove constraint {candidate.target}"
    if kind == OpKind.REMOVE_TRIGGER:
        return f"remove trigger {candidate.target}"
    return candidate.describe()
