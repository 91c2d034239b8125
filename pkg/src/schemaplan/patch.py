"""SQL patch generation and simulation.

The patch realizes a closed operator tree as one transaction:

* drop phase: every removal, ordered so referencers go before their
  referees (pre-change dependency graph);
* unchecked phase: procedure body replacements, which the RDBMS accepts at
  any point; pinned right after the drops for determinism;
* main phase: ALTER and CREATE commands, ordered so referees go before
  their referencers (post-change dependency graph).

Entities that must be dropped although nothing about them changes are
recreated verbatim (identity operators), injected transitively for every
checked referencer of a dropped entity.

Statement texts take entity names from a running model folded command by
command, so commands after a rename or move address the entity by its new
name; bodies come from the session's final model where every accepted
splice is already applied.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    ContradictoryOperators,
    MissingDefinition,
    SchemaPlanError,
    UnresolvedHumanDecision,
)
from .model import (
    DEFAULT_NAMESPACE,
    Constraint,
    EntityKind,
    EntityPath,
    SchemaModel,
    StoredProcedure,
    Trigger,
    View,
    quote_ident,
)
from .model import parse_path as parse_path_str
from .operators import (
    ADD_KINDS,
    REMOVE_KINDS,
    EvolutionOperator,
    OpKind,
    actionable_entity,
    apply_to_model,
)
from .session import Session

_RENAMEISH = {
    OpKind.RENAME_TABLE: "rename",
    OpKind.RENAME_VIEW: "rename",
    OpKind.RENAME_PROCEDURE: "rename",
    OpKind.MOVE_TABLE: "move",
    OpKind.MOVE_VIEW: "move",
    OpKind.MOVE_PROCEDURE: "move",
}

_PROC_BODY_OPS = {
    OpKind.MODIFY_BODY,
    OpKind.RENAME_LOCAL_VARIABLE,
    OpKind.RENAME_PARAMETER,
    OpKind.RENAME_REFERENCE_IN_PROCEDURE,
}

_VIEW_BODY_OPS = {
    OpKind.MODIFY_VIEW_BODY,
    OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE,
    OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE,
    OpKind.ALIAS_IN_SELECT_CLAUSE,
}


@dataclass
class SqlCommand:
    verb: str  # CREATE | CREATE_OR_REPLACE | ALTER | DROP
    phase: str  # drop | unchecked | main
    actionable: str  # final-model path of the entity acted on
    text: str = ""
    sourced_from: list[str] = field(default_factory=list)
    rank: int = 0  # sub-order within one entity's commands

    def to_json(self) -> dict:
        return {
            "verb": self.verb,
            "phase": self.phase,
            "actionable": self.actionable,
            "text": self.text,
            "operators": self.sourced_from,
        }


@dataclass
class SqlPatch:
    commands: list[SqlCommand]
    commit: bool = False

    def text(self) -> str:
        body = "\n\n".join(cmd.text for cmd in self.commands)
        footer = "COMMIT;" if self.commit else "ROLLBACK;"
        if body:
            return f"BEGIN;\n\n{body}\n\n{footer}\n"
        return f"BEGIN;\n{footer}\n"

    def statements(self) -> list[str]:
        return [cmd.text for cmd in self.commands]

    def provenance(self) -> dict:
        return {cmd.text: cmd.sourced_from for cmd in self.commands}


def normalize_sql(text: str) -> str:
    """Whitespace-insensitive form used for golden comparisons."""
    return re.sub(r"\s+", " ", text).strip()


# -- plan extraction -------------------------------------------------------------


@dataclass
class _EntityPlan:
    final_path: EntityPath
    base_path: EntityPath | None  # None when created by this plan
    current_path: EntityPath | None
    ops: list[EvolutionOperator] = field(default_factory=list)
    removed: bool = False
    removal_op: EvolutionOperator | None = None
    injected_identity: bool = False


class PatchBuilder:
    def __init__(self, session: Session):
        self.session = session
        self.base = session.base_model
        self.final: SchemaModel | None = None
        self.plans: dict[str, _EntityPlan] = {}

    # translate + merge ------------------------------------------------------

    def build(self, *, commit: bool = False) -> SqlPatch:
        blockers = self.session.unresolved_human_decisions()
        if blockers:
            raise UnresolvedHumanDecision(
                "human decisions remain unresolved",
                [op.describe() for op in blockers],
            )
        pending = self.session.pending_keys()
        if pending:
            raise UnresolvedHumanDecision("plan is not closed", pending)
        self._collect_plans()
        self._check_contradictions()
        self.final = self.session.current_model()
        self._inject_identities()
        commands = self._order_and_render()
        return SqlPatch(commands, commit=commit)

    def _rename_steps(self) -> list[tuple[int, EntityPath, EntityPath]]:
        steps = []
        for i, op in enumerate(self.session.ops):
            if op.kind in _RENAMEISH:
                model = self.session.model_before(op.op_id)
                entity = model.get(op.target)
                if entity is None:
                    continue
                if _RENAMEISH[op.kind] == "rename":
                    if entity.kind == EntityKind.STORED_PROCEDURE:
                        terminal = f"{op.args['new_name']}({entity.signature})"
                    else:
                        terminal = op.args["new_name"]
                    new = EntityPath(op.target.segments[:-1] + (terminal,))
                else:
                    new = EntityPath((op.args["namespace"],) + op.target.segments[1:])
                steps.append((i, op.target, new))
        return steps

    def _finalize_path(self, path: EntityPath, from_index: int) -> EntityPath:
        for i, old, new in self._renames:
            if i >= from_index and path.is_within(old):
                path = EntityPath(new.segments + path.segments[len(old.segments) :])
        return path

    def _base_path(self, path: EntityPath, at_index: int) -> EntityPath:
        for i, old, new in reversed(self._renames):
            if i < at_index and path.is_within(new):
                path = EntityPath(old.segments + path.segments[len(new.segments) :])
        return path

    def _collect_plans(self) -> None:
        self._renames = self._rename_steps()
        for index, op in enumerate(self.session.ops):
            if op.kind in (OpKind.DO_NOTHING, OpKind.HUMAN_DECISION):
                continue
            model = self.session.model_before(op.op_id)
            try:
                act = actionable_entity(op, model)
            except SchemaPlanError:
                act = _static_actionable(op)
            final = self._finalize_path(act, index)
            base = self._base_path(act, index)
            if self.base.get(base) is None:
                base = None
            key = str(final)
            plan = self.plans.get(key)
            if plan is None:
                plan = _EntityPlan(
                    final_path=final,
                    base_path=base,
                    current_path=base,
                )
                self.plans[key] = plan
            duplicate = any(
                o.kind == op.kind and o.target == op.target and o.args == op.args
                for o in plan.ops
                if op.kind in REMOVE_KINDS
            )
            if not duplicate:
                plan.ops.append(op)
            if op.kind in REMOVE_KINDS and op.target == act:
                plan.removed = True
                plan.removal_op = op if plan.removal_op is None else plan.removal_op

    def _check_contradictions(self) -> None:
        for plan in self.plans.values():
            by_slot: dict[tuple, set[str]] = {}
            for op in plan.ops:
                if op.kind in _RENAMEISH and _RENAMEISH[op.kind] == "rename":
                    by_slot.setdefault(("rename", str(op.target)), set()).add(
                        op.args.get("new_name", "")
                    )
                elif op.kind in _RENAMEISH:
                    by_slot.setdefault(("move", str(op.target)), set()).add(
                        op.args.get("namespace", "")
                    )
                elif op.kind in (OpKind.RENAME_COLUMN, OpKind.RENAME_PARAMETER, OpKind.RENAME_LOCAL_VARIABLE):
                    by_slot.setdefault(("rename", str(op.target)), set()).add(
                        op.args.get("new_name", "")
                    )
                elif op.kind in (OpKind.MODIFY_BODY, OpKind.MODIFY_VIEW_BODY):
                    by_slot.setdefault(("body", str(op.target)), set()).add(
                        op.args.get("body") or op.args.get("query", "")
                    )
                elif op.kind in (
                    OpKind.RENAME_REFERENCE_IN_SELECT_CLAUSE,
                    OpKind.RENAME_REFERENCE_IN_NON_SELECT_CLAUSE,
                    OpKind.RENAME_REFERENCE_IN_PROCEDURE,
                    OpKind.RENAME_REFERENCE_IN_CONSTRAINT,
                ):
                    key = ("ref", str(op.ref.owner), op.ref.span.start, op.ref.span.end)
                    by_slot.setdefault(key, set()).add(
                        op.args.get("new_text") or op.args.get("new_name", "")
                    )
            for slot, values in by_slot.items():
                if len(values) > 1:
                    raise ContradictoryOperators(
                        f"conflicting changes for {plan.final_path}: "
                        f"{slot[0]} to {sorted(values)}"
                    )

    # identity injection -------------------------------------------------------

    def _dropped_entities(self) -> set[str]:
        dropped = set()
        for plan in self.plans.values():
            if plan.base_path is None:
                continue
            if plan.removed or self._needs_drop_create(plan):
                dropped.add(str(plan.base_path))
        return dropped

    def _needs_drop_create(self, plan: _EntityPlan) -> bool:
        entity = self.final.get(plan.final_path) if not plan.removed else None
        if plan.removed or plan.base_path is None:
            return False
        base_entity = self.base.get(plan.base_path)
        if not isinstance(base_entity, View) or not isinstance(entity, View):
            return False
        if not any(op.kind in _VIEW_BODY_OPS for op in plan.ops):
            return False
        base_cols = [c.name for c in self.base.columns_of(plan.base_path)]
        final_cols = [c.name for c in self.final.columns_of(plan.final_path)]
        return final_cols[: len(base_cols)] != base_cols

    def _inject_identities(self) -> None:
        graph = self.base.dependency_graph()
        dropped = self._dropped_entities()
        removed_paths = [
            op.target
            for plan in self.plans.values()
            for op in plan.ops
            if op.kind in REMOVE_KINDS and op.target is not None
        ]
        queue = sorted(dropped)
        while queue:
            target = queue.pop(0)
            for referencer in graph.predecessors(target):
                if referencer in dropped:
                    continue
                entity = self.base.get(referencer)
                if entity is None or entity.kind == EntityKind.STORED_PROCEDURE:
                    continue  # unchecked: no drop needed
                plan = self.plans.get(referencer)
                if plan is not None and plan.removed:
                    continue
                if not self._still_references(referencer, target, removed_paths):
                    continue  # the blocking reference is removed by the plan itself
                if plan is None:
                    path = EntityPath(tuple(referencer.split("."))) if False else None
                    base_path = entity.path
                    plan = _EntityPlan(
                        final_path=base_path,
                        base_path=base_path,
                        current_path=base_path,
                        injected_identity=True,
                    )
                    identity = EvolutionOperator(OpKind.IDENTITY, target=base_path)
                    identity.op_id = f"identity:{base_path}"
                    plan.ops.append(identity)
                    self.plans[str(base_path)] = plan
                else:
                    plan.injected_identity = True
                dropped.add(referencer)
                queue.append(referencer)

    def _still_references(
        self, referencer: str, target: str, removed_paths: list[EntityPath]
    ) -> bool:
        """Does any reference from referencer to target survive the plan?"""
        target_path = self.base.require(parse_path_str(target)).path
        for ref in self.base.references:
            if not ref.resolved or ref.target is None:
                continue
            if not ref.target.is_within(target_path):
                continue
            try:
                owner_actionable = self.base.actionable_owner(ref.owner)
            except SchemaPlanError:
                continue
            if str(owner_actionable) != referencer:
                continue
            owner_root = self.base.source_root_of(ref.owner)
            if any(
                owner_root.is_within(rp) or ref.owner.is_within(rp)
                for rp in removed_paths
            ):
                continue
            return True
        return False

    # ordering + rendering --------------------------------------------------------

    def _order_and_render(self) -> list[SqlCommand]:
        graph_before = self.base.dependency_graph()
        graph_after = self.final.dependency_graph()
        graph_before.ensure_acyclic()
        graph_after.ensure_acyclic()
        drop_order = {p: i for i, p in enumerate(graph_before.topological_order(dependents_first=True))}
        main_order = {p: i for i, p in enumerate(graph_after.topological_order(dependents_first=False))}

        drop_cmds: list[tuple[tuple, SqlCommand, _EntityPlan, EvolutionOperator | None]] = []
        unchecked_cmds: list[tuple[tuple, SqlCommand, _EntityPlan, EvolutionOperator | None]] = []
        main_cmds: list[tuple[tuple, SqlCommand, _EntityPlan, EvolutionOperator | None]] = []

        for key in sorted(self.plans):
            plan = self.plans[key]
            for phase, verb, rank, op in self._command_shapes(plan):
                cmd = SqlCommand(verb, phase, str(plan.final_path), rank=rank)
                if op is not None:
                    cmd.sourced_from = [op.op_id]
                elif plan.injected_identity:
                    cmd.sourced_from = [f"identity:{plan.base_path}"]
                else:
                    cmd.sourced_from = [o.op_id for o in plan.ops]
                if phase == "drop":
                    anchor = str(plan.base_path) if plan.base_path else key
                    sort_key = (drop_order.get(anchor, len(drop_order)), anchor, rank)
                    drop_cmds.append((sort_key, cmd, plan, op))
                elif phase == "unchecked":
                    sort_key = (key, rank)
                    unchecked_cmds.append((sort_key, cmd, plan, op))
                else:
                    anchor = str(plan.final_path)
                    sort_key = (main_order.get(anchor, len(main_order)), anchor, rank)
                    main_cmds.append((sort_key, cmd, plan, op))

        ordered: list[tuple[SqlCommand, _EntityPlan, EvolutionOperator | None]] = []
        for bucket in (drop_cmds, unchecked_cmds, main_cmds):
            for _, cmd, plan, op in sorted(bucket, key=lambda t: t[0]):
                ordered.append((cmd, plan, op))

        running = self.base
        out: list[SqlCommand] = []
        for cmd, plan, op in ordered:
            cmd.text = self._render(cmd, plan, op, running)
            running = self._advance(running, cmd, plan, op)
            out.append(cmd)
        return out

    # shapes ------------------------------------------------------------------------

    def _command_shapes(self, plan: _EntityPlan):
        """Yield (phase, verb, rank, op_or_None) for one entity's commands."""
        entity_kind = (
            self.base.get(plan.base_path).kind
            if plan.base_path is not None and self.base.get(plan.base_path)
            else (self.final.get(plan.final_path).kind if self.final.get(plan.final_path) else None)
        )
        if plan.removed:
            # a removal cancels every other change on the same entity
            yield ("drop", "DROP", 0, plan.removal_op)
            return
        needs_drop_create = self._needs_drop_create(plan) or plan.injected_identity
        body_ops: list[EvolutionOperator] = []
        for op in plan.ops:
            kind = op.kind
            if kind == OpKind.IDENTITY:
                continue
            if kind in (OpKind.REMOVE_COLUMN, OpKind.REMOVE_CONSTRAINT):
                yield ("drop", "ALTER", 1, op)
            elif kind in _RENAMEISH and _RENAMEISH[kind] == "rename":
                yield ("main", "ALTER", 0, op)
            elif kind in _RENAMEISH:
                yield ("main", "ALTER", 1, op)
            elif kind in (OpKind.RENAME_COLUMN, OpKind.RETYPE_COLUMN, OpKind.ADD_COLUMN, OpKind.ADD_CONSTRAINT,
                          OpKind.MODIFY_CHECK_CONSTRAINT, OpKind.RENAME_REFERENCE_IN_CONSTRAINT):
                yield ("main", "ALTER", 2, op)
            elif kind in (OpKind.ADD_TABLE, OpKind.ADD_VIEW, OpKind.ADD_TRIGGER):
                yield ("main", "CREATE", 3, op)
            elif kind == OpKind.ADD_PROCEDURE:
                yield ("unchecked", "CREATE", 0, op)
            elif kind in _PROC_BODY_OPS:
                body_ops.append(op)
            elif kind == OpKind.MODIFY_TRIGGER:
                yield ("drop", "DROP", 0, op)
                yield ("main", "CREATE", 3, op)
            elif kind in _VIEW_BODY_OPS:
                body_ops.append(op)
        if entity_kind == EntityKind.STORED_PROCEDURE and body_ops:
            yield ("unchecked", "CREATE_OR_REPLACE", 0, None)
        elif entity_kind == EntityKind.VIEW and (body_ops or needs_drop_create):
            if needs_drop_create:
                yield ("drop", "DROP", 0, None)
                yield ("main", "CREATE", 3, None)
            else:
                yield ("main", "CREATE_OR_REPLACE", 4, None)
        elif plan.injected_identity:
            if entity_kind == EntityKind.VIEW:
                yield ("drop", "DROP", 0, None)
                yield ("main", "CREATE", 3, None)
            else:
                raise MissingDefinition(
                    f"cannot recreate {plan.final_path}: no stored definition"
                )

    # rendering ------------------------------------------------------------------------

    def _qualified(self, model: SchemaModel, path: EntityPath, *, with_sig: bool = False) -> str:
        entity = model.get(path)
        name = path.name
        ns = path.segments[0] if len(path.segments) > 1 else DEFAULT_NAMESPACE
        rendered = quote_ident(name)
        if ns != DEFAULT_NAMESPACE:
            rendered = f"{quote_ident(ns)}.{rendered}"
        if with_sig and isinstance(entity, StoredProcedure):
            rendered += f"({entity.signature})"
        return rendered

    def _current_of(self, running: SchemaModel, plan: _EntityPlan) -> EntityPath:
        return plan.current_path if plan.current_path is not None else plan.final_path

    def _render(
        self,
        cmd: SqlCommand,
        plan: _EntityPlan,
        op: EvolutionOperator | None,
        running: SchemaModel,
    ) -> str:
        current = self._current_of(running, plan)
        final_entity = self.final.get(plan.final_path)
        kind = (
            running.get(current).kind
            if running.get(current) is not None
            else (final_entity.kind if final_entity is not None else None)
        )
        if op is None:
            # merged body command or identity drop/create pair member
            if kind == EntityKind.STORED_PROCEDURE:
                return self._render_function(running, current)
            if cmd.verb == "DROP":
                return f"DROP VIEW {self._qualified(running, current)} RESTRICT;"
            if cmd.verb == "CREATE_OR_REPLACE":
                return self._render_view(running, current, replace=True)
            return self._render_view(running, current, replace=False)
        return self._render_operator(cmd, plan, op, running, current)

    def _render_view(self, running: SchemaModel, current: EntityPath, *, replace: bool) -> str:
        final_view = self.final.require(self._plan_final_for(current))
        verb = "CREATE OR REPLACE VIEW" if replace else "CREATE VIEW"
        body = _indent_query(final_view.source_text)
        return f"{verb} {self._qualified(running, current)} AS\n{body};"

    def _plan_final_for(self, current: EntityPath) -> EntityPath:
        for plan in self.plans.values():
            if plan.current_path == current or plan.final_path == current:
                return plan.final_path
        return current

    def _render_function(self, running: SchemaModel, current: EntityPath) -> str:
        final_proc = self.final.require(self._plan_final_for(current))
        params = ", ".join(
            f"{name} {ptype}" for name, ptype in final_proc.params
        )
        name = self._qualified(running, current)
        return (
            f"CREATE OR REPLACE FUNCTION\n  {name}({params})\n"
            f"  RETURNS {final_proc.return_type} AS $${final_proc.source_text}$$ LANGUAGE plpgsql;"
        )

    def _render_operator(
        self,
        cmd: SqlCommand,
        plan: _EntityPlan,
        op: EvolutionOperator,
        running: SchemaModel,
        current: EntityPath,
    ) -> str:
        k = op.kind
        q = lambda p: self._qualified(running, p)  # noqa: E731
        if k == OpKind.REMOVE_TABLE:
            return f"DROP TABLE {q(current)} RESTRICT;"
        if k == OpKind.REMOVE_VIEW:
            return f"DROP VIEW {q(current)} RESTRICT;"
        if k == OpKind.REMOVE_PROCEDURE:
            return f"DROP FUNCTION {self._qualified(running, current, with_sig=True)} RESTRICT;"
        if k == OpKind.REMOVE_TRIGGER:
            trig = running.get(current) or self.base.require(plan.base_path)
            return f"DROP TRIGGER {quote_ident(current.name)} ON {q(trig.table)} RESTRICT;"
        if k == OpKind.MODIFY_TRIGGER:
            if cmd.verb == "DROP":
                trig = running.require(current)
                return f"DROP TRIGGER {quote_ident(current.name)} ON {q(trig.table)} RESTRICT;"
            return op.args["definition"].rstrip(";") + ";"
        if k == OpKind.REMOVE_COLUMN:
            return f"ALTER TABLE {q(current)}\n  DROP COLUMN {quote_ident(op.target.name)};"
        if k == OpKind.REMOVE_CONSTRAINT:
            return f"ALTER TABLE {q(current)}\n  DROP CONSTRAINT {quote_ident(op.target.name)};"
        if k == OpKind.RENAME_TABLE:
            return f"ALTER TABLE {q(current)}\n  RENAME TO {quote_ident(op.args['new_name'])};"
        if k == OpKind.RENAME_VIEW:
            return f"ALTER VIEW {q(current)}\n  RENAME TO {quote_ident(op.args['new_name'])};"
        if k == OpKind.RENAME_PROCEDURE:
            return (
                f"ALTER FUNCTION {self._qualified(running, current, with_sig=True)}\n"
                f"  RENAME TO {quote_ident(op.args['new_name'])};"
            )
        if k == OpKind.MOVE_TABLE:
            return f"ALTER TABLE {q(current)}\n  SET SCHEMA {quote_ident(op.args['namespace'])};"
        if k == OpKind.MOVE_VIEW:
            return f"ALTER VIEW {q(current)}\n  SET SCHEMA {quote_ident(op.args['namespace'])};"
        if k == OpKind.MOVE_PROCEDURE:
            return (
                f"ALTER FUNCTION {self._qualified(running, current, with_sig=True)}\n"
                f"  SET SCHEMA {quote_ident(op.args['namespace'])};"
            )
        if k == OpKind.RENAME_COLUMN:
            return (
                f"ALTER TABLE {q(current)}\n  RENAME COLUMN {quote_ident(op.target.name)}"
                f" TO {quote_ident(op.args['new_name'])};"
            )
        if k == OpKind.RETYPE_COLUMN:
            return (
                f"ALTER TABLE {q(current)}\n  ALTER COLUMN {quote_ident(op.target.name)}"
                f" TYPE {op.args['type']};"
            )
        if k == OpKind.ADD_COLUMN:
            return (
                f"ALTER TABLE {q(current)}\n  ADD COLUMN {quote_ident(op.target.name)}"
                f" {op.args.get('type', 'text')};"
            )
        if k == OpKind.ADD_CONSTRAINT:
            constraint = self.final.require(
                self._finalize_path(op.target, len(self.session.ops))
            )
            return (
                f"ALTER TABLE {q(current)}\n  ADD CONSTRAINT {quote_ident(op.target.name)}"
                f" {constraint.source_text};"
            )
        if k in (OpKind.MODIFY_CHECK_CONSTRAINT, OpKind.RENAME_REFERENCE_IN_CONSTRAINT):
            target = (
                op.target
                if op.target is not None
                else self.session.model_before(op.op_id).source_root_of(op.ref.owner)
            )
            constraint = self.final.get(self._finalize_path(target, 0))
            if constraint is None:
                raise MissingDefinition(f"constraint {target} missing from final model")
            return (
                f"ALTER TABLE {q(current)}\n  DROP CONSTRAINT {quote_ident(target.name)},\n"
                f"  ADD CONSTRAINT {quote_ident(target.name)} {constraint.source_text};"
            )
        if k == OpKind.ADD_TABLE:
            cols = ",\n  ".join(
                f"{quote_ident(c['name'].lower())} {c.get('type', 'text')}"
                for c in op.args.get("columns", [])
            )
            return f"CREATE TABLE {q(current)} (\n  {cols}\n);"
        if k == OpKind.ADD_VIEW:
            return self._render_view(running, current, replace=False)
        if k == OpKind.ADD_PROCEDURE:
            return self._render_function(running, current).replace(
                "CREATE OR REPLACE FUNCTION", "CREATE FUNCTION", 1
            )
        if k == OpKind.ADD_TRIGGER:
            return op.args["definition"].rstrip(";") + ";"
        raise SchemaPlanError(f"no SQL rendering for {k.value}")

    # running model ---------------------------------------------------------------------

    def _advance(
        self,
        running: SchemaModel,
        cmd: SqlCommand,
        plan: _EntityPlan,
        op: EvolutionOperator | None,
    ) -> SchemaModel:
        current = self._current_of(running, plan)
        if op is None:
            if cmd.verb == "DROP":
                from .operators import _remove_entity_tree

                out = running.copy()
                if out.get(current) is not None:
                    _remove_entity_tree(out, current)
                plan.current_path = plan.final_path
                return out
            if cmd.verb == "CREATE":
                return self._recreate_from_final(running, plan, at=plan.final_path)
            if cmd.verb == "CREATE_OR_REPLACE":
                # body replacement under the entity's current name
                return self._recreate_from_final(running, plan, at=current)
            return running
        replayed = EvolutionOperator(
            op.kind,
            target=self._retarget(op.target, plan, running),
            ref=op.ref,
            args=op.args,
            op_id=op.op_id,
            provenance=op.provenance,
        )
        try:
            out = apply_to_model(replayed, running, strict=False)
        except SchemaPlanError:
            return running  # simulation reports the problem with full context
        if op.kind in _RENAMEISH:
            entity = self.session.model_before(op.op_id).get(op.target)
            if _RENAMEISH[op.kind] == "rename":
                terminal = (
                    f"{op.args['new_name']}({entity.signature})"
                    if isinstance(entity, StoredProcedure)
                    else op.args["new_name"]
                )
                plan.current_path = EntityPath(current.segments[:-1] + (terminal,))
            else:
                plan.current_path = EntityPath(
                    (op.args["namespace"],) + current.segments[1:]
                )
        return out

    def _retarget(
        self, target: EntityPath | None, plan: _EntityPlan, running: SchemaModel
    ) -> EntityPath | None:
        if target is None:
            return None
        current = self._current_of(running, plan)
        # column/constraint-level targets live under the actionable entity
        for candidate_base in (plan.base_path, plan.final_path):
            if candidate_base is not None and target.is_within(candidate_base):
                return EntityPath(current.segments + target.segments[len(candidate_base.segments) :])
        return target

    def _recreate_from_final(
        self, running: SchemaModel, plan: _EntityPlan, at: EntityPath
    ) -> SchemaModel:
        """Install the final-model definition of the entity under the path at."""
        out = running.copy()
        final_entity = self.final.require(plan.final_path)
        from .model import View as ViewEntity
        from .parsing.builder import build_source_structure
        from .parsing.resolver import resolve_entity

        if isinstance(final_entity, ViewEntity):
            if out.get(at) is None:
                out.add(ViewEntity(at, final_entity.source_text))
            else:
                out.require(at).source_text = final_entity.source_text
            out.references = [r for r in out.references if r.root != at]
            build_source_structure(out, at)
            resolve_entity(out, at)
        elif isinstance(final_entity, StoredProcedure):
            proc = out.get(at)
            if proc is None:
                return out
            proc.params = list(final_entity.params)
            proc.return_type = final_entity.return_type
            proc.source_text = final_entity.source_text
            out.references = [r for r in out.references if r.root != at]
            build_source_structure(out, at)
            resolve_entity(out, at)
        plan.current_path = at
        return out


_COLUMN_LEVEL = {
    OpKind.ADD_COLUMN,
    OpKind.REMOVE_COLUMN,
    OpKind.RENAME_COLUMN,
    OpKind.RETYPE_COLUMN,
    OpKind.ADD_CONSTRAINT,
    OpKind.REMOVE_CONSTRAINT,
    OpKind.MODIFY_CHECK_CONSTRAINT,
}


def _static_actionable(op: EvolutionOperator) -> EntityPath:
    """Fallback when the target vanished mid-fold (e.g. conflicting renames)."""
    if op.target is None:
        raise SchemaPlanError(f"cannot locate the entity {op.describe()} acts on")
    if op.kind in _COLUMN_LEVEL:
        return op.target.parent
    return op.target


def build_patch(session: Session, *, commit: bool = False) -> SqlPatch:
    return PatchBuilder(session).build(commit=commit)


def _indent_query(text: str) -> str:
    lines = [ln for ln in text.splitlines()]
    return "\n".join("  " + ln if ln.strip() else ln for ln in lines)
