"""Impact computation and coherent-subset partitioning."""

import random

from schemaplan import load_model, parse_path
from schemaplan.impact import (
    LABEL_CONSTRAINTS,
    LABEL_PROCEDURES,
    LABEL_VIEW_OTHER,
    LABEL_VIEW_SELECT,
    coherent_subsets,
    potential_impact,
)
from schemaplan.operators import EvolutionOperator, OpKind

from genmodels import random_dump


def _op(kind, target, **args):
    return EvolutionOperator(kind, target=parse_path(target), args=args, op_id="t1")


def test_rename_column_impact_is_three_references(running_model):
    op = _op(OpKind.RENAME_COLUMN, "public.person.uid", new_name="login")
    impact = potential_impact(op, running_model)
    assert len(impact) == 3
    owners = {str(r.owner) for r in impact}
    assert owners == {
        "public.id_for_uid(varchar).query:0.where:0",
        "public.members_directory.query:0.select:0",
        "public.members_directory.query:0.where:0",
    }


def test_rename_column_subsets_match_enumeration(running_model):
    op = _op(OpKind.RENAME_COLUMN, "public.person.uid", new_name="login")
    impact = potential_impact(op, running_model)
    subsets = {s.label: s.references for s in coherent_subsets(op, impact, running_model)}
    assert set(subsets) == {LABEL_VIEW_SELECT, LABEL_VIEW_OTHER, LABEL_PROCEDURES}
    assert len(subsets[LABEL_VIEW_SELECT]) == 1
    assert len(subsets[LABEL_VIEW_OTHER]) == 1
    assert len(subsets[LABEL_PROCEDURES]) == 1
    assert LABEL_CONSTRAINTS not in subsets  # the pkey does not reference uid


def test_add_operators_have_no_impact(running_model):
    op = _op(OpKind.ADD_TABLE, "public.fresh", columns=[{"name": "id", "type": "int4"}])
    assert potential_impact(op, running_model) == []


def test_remove_view_impact_equals_dependents(running_model):
    op = _op(OpKind.REMOVE_VIEW, "public.members_directory")
    impact = potential_impact(op, running_model)
    oracle = [
        r
        for r in running_model.dependents_of(parse_path("public.members_directory"), include_contained=True)
        if not r.owner.is_within(parse_path("public.members_directory"))
    ]
    assert {r.uid for r in impact} == {r.uid for r in oracle}
    assert all(str(r.root) == "public.permanents_directory" for r in impact)


def test_removal_set_excludes_doomed_owners(running_model):
    op = _op(OpKind.RENAME_COLUMN, "public.person.uid", new_name="login")
    shrunk = potential_impact(
        op, running_model, removal_targets=(parse_path("public.members_directory"),)
    )
    assert {str(r.root) for r in shrunk} == {"public.id_for_uid(varchar)"}


def test_empty_impact_empty_partition(running_model):
    op = _op(OpKind.REMOVE_VIEW, "public.permanents_directory")
    impact = potential_impact(op, running_model)
    assert impact == []
    assert coherent_subsets(op, impact, running_model) == []


def test_wildcard_lands_in_checked_not_select_subset():
    model = load_model(
        "CREATE TABLE t (a int4, b int4);\n"
        "CREATE VIEW v AS SELECT * FROM t;\n"
        "CREATE VIEW w AS SELECT t.a FROM t;"
    )
    rename_col = _op(OpKind.RENAME_COLUMN, "public.t.a", new_name="z")
    impact = potential_impact(rename_col, model)
    subsets = {s.label: s.references for s in coherent_subsets(rename_col, impact, model)}
    select_refs = subsets.get(LABEL_VIEW_SELECT, [])
    assert all(not r.wildcard for r in select_refs)
    rename_table = _op(OpKind.RENAME_TABLE, "public.t", new_name="u")
    impact_t = potential_impact(rename_table, model)
    subsets_t = {s.label for s in coherent_subsets(rename_table, impact_t, model)}
    star_refs = [r for r in impact_t if r.wildcard]
    assert star_refs, "the wildcard reference belongs to the table-level impact"
    assert LABEL_VIEW_SELECT not in subsets_t


def test_partition_is_disjoint_cover_on_random_models():
    rng = random.Random(4242)
    checked = 0
    for _ in range(60):
        model = load_model(random_dump(rng))
        for op in _applicable_ops(model, rng):
            impact = potential_impact(op, model)
            subsets = coherent_subsets(op, impact, model)
            seen = []
            for subset in subsets:
                seen.extend(r.uid for r in subset.references)
            assert len(seen) == len(set(seen)), "subsets overlap"
            assert sorted(seen) == sorted(r.uid for r in impact), "subsets must cover impact"
            checked += 1
    assert checked > 50


def _applicable_ops(model, rng):
    from schemaplan.model import EntityKind

    ops = []
    tables = [e for e in model.entities.values() if e.kind == EntityKind.TABLE]
    views = [e for e in model.entities.values() if e.kind == EntityKind.VIEW]
    procs = [e for e in model.entities.values() if e.kind == EntityKind.STORED_PROCEDURE]
    for t in tables:
        ops.append(EvolutionOperator(OpKind.RENAME_TABLE, target=t.path, args={"new_name": t.name + "x"}, op_id="a"))
        ops.append(EvolutionOperator(OpKind.REMOVE_TABLE, target=t.path, op_id="b"))
        for c in model.columns_of(t.path):
            ops.append(EvolutionOperator(OpKind.RENAME_COLUMN, target=c.path, args={"new_name": c.name + "x"}, op_id="c"))
    for v in views:
        ops.append(EvolutionOperator(OpKind.REMOVE_VIEW, target=v.path, op_id="d"))
    for p in procs:
        ops.append(EvolutionOperator(OpKind.RENAME_PROCEDURE, target=p.path, args={"new_name": p.name + "x"}, op_id="e"))
    return ops


def test_monotonicity_removing_unrelated_entity():
    model = load_model(
        "CREATE TABLE t (a int4);\n"
        "CREATE TABLE other (z int4);\n"
        "CREATE VIEW v AS SELECT t.a FROM t;"
    )
    op = _op(OpKind.RENAME_COLUMN, "public.t.a", new_name="b")
    before = potential_impact(op, model)
    from schemaplan.operators import apply_to_model

    smaller = apply_to_model(
        EvolutionOperator(OpKind.REMOVE_TABLE, target=parse_path("public.other")), model
    )
    after = potential_impact(op, smaller)
    assert len(after) == len(before)
