"""Interactive planning sessions.

A session holds the parsed base model, the operator tree (user operators as
roots, accepted recommendations as children), and the decision log. Impact
for each operator is computed against the model with all previously entered
operators applied, so evolving plans see the evolving schema.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field

from .errors import (
    AlreadyDecided,
    CorruptSessionFile,
    SqlSyntaxError,
    UnknownEntity,
    UnknownRecommendation,
    UnresolvedInCheckedContext,
)
from .impact import coherent_subsets, potential_impact
from .model import EntityPath, SchemaModel
from .operators import (
    REMOVE_KINDS,
    EvolutionOperator,
    OpKind,
    apply_to_model,
    find_reference,
    operator_from_json,
)
from .parsing import parse_dump, resolve_references
from .recommend import Recommendation, recommendations_for

SESSION_FORMAT_VERSION = 1

# Operators that never change the model when folded.
_INERT = {OpKind.DO_NOTHING, OpKind.HUMAN_DECISION, OpKind.IDENTITY}


@dataclass
class PendingReference:
    key: str
    parent_op: str
    subset_label: str
    recommendations: list[Recommendation]
    chosen: str | None = None  # recommendation id
    child_op: str | None = None

    @property
    def decided(self) -> bool:
        return self.chosen is not None

    def to_json(self) -> dict:
        return {
            "reference": self.recommendations[0].reference.to_json()
            if self.recommendations
            else None,
            "key": self.key,
            "parent": self.parent_op,
            "subset": self.subset_label,
            "status": "decided" if self.decided else "pending",
            "chosen": self.chosen,
            "candidates": [r.to_json() for r in self.recommendations],
        }


def _load_base_model(dump_text: str) -> SchemaModel:
    model, diags = parse_dump(dump_text)
    errors = [d for d in diags if d.severity == "error"]
    if model is None or errors:
        raise SqlSyntaxError(errors[0].message, span=errors[0].span)
    resolved, rdiags = resolve_references(model)
    errors = [d for d in rdiags if d.severity == "error"]
    if errors:
        raise UnresolvedInCheckedContext(errors[0].message, span=errors[0].span)
    return resolved


class Session:
    def __init__(self, dump_text: str, *, auto_accept_single: bool = False, session_id: str | None = None):
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.created_at = time.time()
        self.dump_text = dump_text
        self.base_model = _load_base_model(dump_text)
        self.auto_accept_single = auto_accept_single
        self.ops: list[EvolutionOperator] = []
        self.pending: dict[str, PendingReference] = {}
        self.decision_log: list[dict] = []
        self.waived: set[str] = set()
        self._impact_done: set[str] = set()
        self._op_counter = 0
        # fold prefix cache: models are only ever extended, so the fold of
        # ops[:n] stays valid while the operator list grows
        self._prefix: tuple[int, SchemaModel] = (0, self.base_model)

    # -- operator bookkeeping -------------------------------------------------

    def _assign_id(self, op: EvolutionOperator) -> EvolutionOperator:
        self._op_counter += 1
        op.op_id = f"op{self._op_counter}"
        return op

    def add_operators(self, ops: list[EvolutionOperator]) -> None:
        for op in ops:
            self._assign_id(op)
            self.ops.append(op)
        self.expand()

    def remove_operator(self, op_id: str) -> None:
        doomed = {op_id}
        changed = True
        while changed:
            changed = False
            for op in self.ops:
                if op.provenance.source == "recommendation" and op.provenance.parent in doomed:
                    if op.op_id not in doomed:
                        doomed.add(op.op_id)
                        changed = True
        if op_id not in {op.op_id for op in self.ops}:
            raise UnknownEntity(f"unknown operator {op_id}")
        self.ops = [op for op in self.ops if op.op_id not in doomed]
        self._impact_done -= doomed
        for key in [k for k, p in self.pending.items() if p.parent_op in doomed]:
            del self.pending[key]
        for pend in self.pending.values():
            if pend.child_op in doomed:
                pend.child_op = None
                pend.chosen = None
        self.decision_log = [
            d for d in self.decision_log if d.get("op_id") not in doomed
        ]
        self._prefix = (0, self.base_model)
        self.expand()

    def operator(self, op_id: str) -> EvolutionOperator:
        for op in self.ops:
            if op.op_id == op_id:
                return op
        raise UnknownEntity(f"unknown operator {op_id}")

    # -- model folding ----------------------------------------------------------

    def _fold_prefix(self, count: int) -> SchemaModel:
        cached_count, model = self._prefix
        if cached_count > count:
            cached_count, model = 0, self.base_model
        for op in self.ops[cached_count:count]:
            model = self._fold_one(model, op)
        self._prefix = (count, model)
        return model

    def model_before(self, op_id: str) -> SchemaModel:
        index = next(i for i, op in enumerate(self.ops) if op.op_id == op_id)
        return self._fold_prefix(index)

    def current_model(self) -> SchemaModel:
        return self._fold_prefix(len(self.ops))

    @staticmethod
    def _fold_one(model: SchemaModel, op: EvolutionOperator) -> SchemaModel:
        if op.kind in _INERT:
            return model
        return apply_to_model(op, model, strict=False)

    # -- expansion (steps A and B) ------------------------------------------------

    def expand(self) -> int:
        """Compute impact for every new operator; returns the pending count."""
        progressed = True
        while progressed:
            progressed = False
            for op in list(self.ops):
                if op.op_id in self._impact_done or op.kind in _INERT:
                    continue
                self._compute_impact(op)
                progressed = True
            if self.auto_accept_single:
                for pend in list(self.pending.values()):
                    if pend.decided or len(pend.recommendations) != 1:
                        continue
                    only = pend.recommendations[0]
                    if only.candidate.kind == OpKind.HUMAN_DECISION:
                        continue
                    self._accept(pend, only, auto=True)
                    progressed = True
        return self.pending_count()

    def _removal_targets(self) -> tuple[EntityPath, ...]:
        return tuple(
            op.target for op in self.ops if op.kind in REMOVE_KINDS and op.target is not None
        )

    def _compute_impact(self, op: EvolutionOperator) -> None:
        model = self.model_before(op.op_id)
        try:
            impact = potential_impact(op, model, self._removal_targets())
        except UnknownEntity:
            # the target vanished mid-plan; patch building reports the real
            # problem (usually two operators contradicting each other)
            self._impact_done.add(op.op_id)
            return
        subsets = coherent_subsets(op, impact, model)
        for subset in subsets:
            recs = recommendations_for(subset, model, op)
            for key, candidates in sorted(recs.items()):
                if key in self.pending:
                    continue  # the first operator to impact a reference owns it
                self.pending[key] = PendingReference(
                    key=key,
                    parent_op=op.op_id,
                    subset_label=subset.label,
                    recommendations=candidates,
                )
        self._impact_done.add(op.op_id)

    # -- decisions -------------------------------------------------------------------

    def choose(self, ref_key: str, rec_id: str) -> None:
        pend = self.pending.get(ref_key)
        if pend is None:
            raise UnknownEntity(f"no pending reference {ref_key}")
        if pend.decided:
            raise AlreadyDecided(f"reference {ref_key} already decided")
        match = next((r for r in pend.recommendations if r.rec_id == rec_id), None)
        if match is None:
            match = next(
                (r for r in pend.recommendations if r.candidate.kind.value == rec_id), None
            )
        if match is None:
            raise UnknownRecommendation(f"no recommendation {rec_id} for {ref_key}")
        self._accept(pend, match, auto=False)
        self.expand()

    def _accept(self, pend: PendingReference, rec: Recommendation, *, auto: bool) -> None:
        child = rec.candidate
        self._assign_id(child)
        self.ops.append(child)
        pend.chosen = rec.rec_id
        pend.child_op = child.op_id
        self.decision_log.append(
            {
                "reference": rec.reference.to_json(),
                "chosen": child.kind.value,
                "op_id": child.op_id,
                "auto": auto,
            }
        )
        if child.kind in REMOVE_KINDS and child.target is not None:
            self._settle_siblings(child)

    def _settle_siblings(self, child: EvolutionOperator) -> None:
        """Removing an entity settles every other reference it would fix."""
        for other in self.pending.values():
            if other.decided:
                continue
            match = next(
                (
                    r
                    for r in other.recommendations
                    if r.candidate.kind == child.kind and r.candidate.target == child.target
                ),
                None,
            )
            if match is not None:
                other.chosen = match.rec_id
                other.child_op = child.op_id

    def apply_decision_log(self, entries: list[dict]) -> list[dict]:
        """Replay recorded decisions; returns the entries that matched nothing."""
        unmatched = []
        for entry in entries:
            ref = entry.get("reference", {})
            key = f"{ref.get('owner')}@{ref.get('span', [0, 0])[0]}-{ref.get('span', [0, 0])[1]}"
            pend = self.pending.get(key)
            if pend is None or pend.decided:
                unmatched.append(entry)
                continue
            try:
                self.choose(key, entry["chosen"])
            except (UnknownRecommendation, AlreadyDecided):
                unmatched.append(entry)
        return unmatched

    def waive(self, path: str) -> None:
        self.waived.add(path)

    # -- status ------------------------------------------------------------------------

    def pending_count(self) -> int:
        return sum(1 for p in self.pending.values() if not p.decided)

    def pending_keys(self) -> list[str]:
        return sorted(k for k, p in self.pending.items() if not p.decided)

    def unresolved_human_decisions(self) -> list[EvolutionOperator]:
        out = []
        for op in self.ops:
            if op.kind == OpKind.HUMAN_DECISION:
                subject = str(op.target) if op.target else ""
                if subject not in self.waived:
                    out.append(op)
        return out

    @property
    def closed(self) -> bool:
        return self.pending_count() == 0 and all(
            op.op_id in self._impact_done or op.kind in _INERT for op in self.ops
        )

    def roots(self) -> list[EvolutionOperator]:
        return [op for op in self.ops if op.provenance.source == "user"]

    def children_of(self, op_id: str) -> list[EvolutionOperator]:
        return [
            op
            for op in self.ops
            if op.provenance.source == "recommendation" and op.provenance.parent == op_id
        ]

    def _node_json(self, op: EvolutionOperator) -> dict:
        refs = [p for p in self.pending.values() if p.parent_op == op.op_id]
        children = [self._node_json(c) for c in self.children_of(op.op_id)]
        own_pending = [p for p in refs if not p.decided]
        status = "pending" if own_pending or any(c["status"] == "pending" for c in children) else "decided"
        return {
            "id": op.op_id,
            "kind": op.kind.value,
            "label": op.describe(),
            "status": status,
            "references": [p.to_json() for p in sorted(refs, key=lambda p: p.key)],
            "children": children,
        }

    def tree_json(self) -> dict:
        return {
            "session": self.session_id,
            "closed": self.closed,
            "pending": self.pending_count(),
            "roots": [self._node_json(op) for op in self.roots()],
        }

    # -- persistence --------------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version": SESSION_FORMAT_VERSION,
            "id": self.session_id,
            "created_at": self.created_at,
            "auto_accept_single": self.auto_accept_single,
            "dump": self.dump_text,
            "operators": [op.to_json() for op in self.roots()],
            "decisions": [
                {"reference": d["reference"], "chosen": d["chosen"]}
                for d in self.decision_log
                if not d.get("auto")
            ],
            "waived": sorted(self.waived),
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)

    @staticmethod
    def from_json(data: dict) -> "Session":
        if data.get("version") != SESSION_FORMAT_VERSION:
            raise CorruptSessionFile(
                f"unsupported session format version {data.get('version')!r}"
            )
        try:
            session = Session(
                data["dump"],
                auto_accept_single=data.get("auto_accept_single", False),
                session_id=data.get("id"),
            )
            session.add_operators([operator_from_json(o) for o in data["operators"]])
            session.apply_decision_log(data.get("decisions", []))
            for waived in data.get("waived", []):
                session.waive(waived)
        except KeyError as err:
            raise CorruptSessionFile(f"missing session field {err}")
        return session

    @staticmethod
    def load(path: str) -> "Session":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise CorruptSessionFile(f"cannot read session file: {err}")
        return Session.from_json(data)

    # -- panel support -----------------------------------------------------------------

    def reference_detail(self, ref_key: str) -> dict:
        pend = self.pending.get(ref_key)
        if pend is None:
            raise UnknownEntity(f"no reference {ref_key}")
        model = self.model_before(pend.parent_op)
        handle = pend.recommendations[0].reference if pend.recommendations else None
        detail = {
            "key": pend.key,
            "subset": pend.subset_label,
            "status": "decided" if pend.decided else "pending",
            "chosen": pend.chosen,
            "candidates": [r.to_json() for r in pend.recommendations],
        }
        if handle is not None:
            ref = find_reference(model, handle)
            actionable = model.actionable_owner(ref.owner)
            root_entity = model.get(ref.root)
            detail["actionable"] = str(actionable)
            detail["source"] = getattr(root_entity, "source_text", "")
            detail["highlight"] = ref.span.to_json()
        return detail
