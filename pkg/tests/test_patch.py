"""Patch assembly: merging, identity decomposition, ordering, simulation."""

import random

import pytest

from schemaplan import load_model, parse_path
from schemaplan.errors import ContradictoryOperators, UnresolvedHumanDecision
from schemaplan.operators import EvolutionOperator, OpKind, RefHandle
from schemaplan.patch import build_patch, normalize_sql
from schemaplan.session import Session
from schemaplan.simulate import model_differences, simulate_patch

from genmodels import random_dump


def _session(text, ops, decisions="RenameReferenceInSelectClause"):
    session = Session(text, auto_accept_single=True)
    session.add_operators(ops)
    while session.pending_keys():
        session.choose(session.pending_keys()[0], decisions)
    return session


def _rename_uid(text):
    return _session(
        text,
        [
            EvolutionOperator(
                OpKind.RENAME_COLUMN,
                target=parse_path("public.person.uid"),
                args={"new_name": "login"},
            )
        ],
    )


def test_empty_plan_patch(running_example):
    session = Session(running_example)
    patch = build_patch(session)
    assert patch.text() == "BEGIN;\nROLLBACK;\n"
    assert build_patch(session, commit=True).text() == "BEGIN;\nCOMMIT;\n"


def test_patch_blocked_while_pending(running_example):
    session = Session(running_example, auto_accept_single=True)
    session.add_operators(
        [
            EvolutionOperator(
                OpKind.RENAME_COLUMN,
                target=parse_path("public.person.uid"),
                args={"new_name": "login"},
            )
        ]
    )
    with pytest.raises(UnresolvedHumanDecision):
        build_patch(session)


def test_reference_rename_translates_to_body_replace(running_example):
    session = Session(running_example, auto_accept_single=True)
    model = session.base_model
    ref = next(
        r
        for r in model.references
        if str(r.owner) == "public.id_for_uid(varchar).query:0.where:0"
        and str(r.target) == "public.person.uid"
    )
    session.add_operators(
        [
            EvolutionOperator(
                OpKind.RENAME_REFERENCE_IN_PROCEDURE,
                ref=RefHandle(ref.owner, ref.span, uid=ref.uid),
                args={"new_text": "lastname", "new_target": "public.person.lastname"},
            )
        ]
    )
    patch = build_patch(session)
    assert len(patch.commands) == 1
    cmd = patch.commands[0]
    assert cmd.verb == "CREATE_OR_REPLACE" and cmd.phase == "unchecked"
    body = model.source_of(parse_path("public.id_for_uid(varchar)"))
    spliced = body[: ref.span.start] + "lastname" + body[ref.span.end :]
    assert spliced in cmd.text


def test_fig6_statement_sequence(running_example):
    patch = build_patch(_rename_uid(running_example))
    heads = [normalize_sql(c.text)[:60] for c in patch.commands]
    assert heads[0].startswith('DROP VIEW "permanents_directory" RESTRICT;')
    assert heads[1].startswith('DROP VIEW "members_directory" RESTRICT;')
    assert heads[2].startswith('CREATE OR REPLACE FUNCTION "id_for_uid"(uidperson varchar)')
    assert heads[3].startswith('ALTER TABLE "person" RENAME COLUMN "uid" TO "login";')
    assert heads[4].startswith('CREATE VIEW "members_directory" AS')
    assert heads[5].startswith('CREATE VIEW "permanents_directory" AS')
    assert len(patch.commands) == 6


def test_provenance_covers_all_operators(running_example):
    session = _rename_uid(running_example)
    patch = build_patch(session)
    sourced = {op_id for cmd in patch.commands for op_id in cmd.sourced_from}
    expected = {op.op_id for op in session.ops if op.kind != OpKind.DO_NOTHING}
    assert expected <= sourced


def test_merge_select_and_where_splices_into_one_create(running_example):
    session = _rename_uid(running_example)
    patch = build_patch(session)
    members_cmds = [c for c in patch.commands if c.actionable == "public.members_directory"]
    assert [c.verb for c in members_cmds] == ["DROP", "CREATE"]
    create = members_cmds[1].text
    assert "person.login" in create and "uid" not in create


def test_remove_cancels_body_modify():
    text = "CREATE TABLE t (a int4);\nCREATE VIEW v AS SELECT t.a FROM t;"
    session = Session(text)
    session.add_operators(
        [
            EvolutionOperator(OpKind.MODIFY_VIEW_BODY, target=parse_path("public.v"), args={"query": "SELECT t.a AS b FROM t"}),
            EvolutionOperator(OpKind.REMOVE_VIEW, target=parse_path("public.v")),
        ]
    )
    patch = build_patch(session)
    v_cmds = [c for c in patch.commands if c.actionable == "public.v"]
    assert [c.verb for c in v_cmds] == ["DROP"]


def test_contradictory_renames_abort():
    text = "CREATE TABLE t (a int4);"
    session = Session(text)
    session.add_operators(
        [
            EvolutionOperator(OpKind.RENAME_COLUMN, target=parse_path("public.t.a"), args={"new_name": "x"}),
        ]
    )
    # second rename with a different name targets the same base column
    session.ops.append(
        EvolutionOperator(
            OpKind.RENAME_COLUMN,
            target=parse_path("public.t.a"),
            args={"new_name": "y"},
            op_id="op99",
        )
    )
    session._impact_done.add("op99")
    with pytest.raises(ContradictoryOperators):
        build_patch(session)


def test_identity_decomposition_three_level_chain():
    text = (
        "CREATE TABLE base (a int4, b int4);\n"
        "CREATE VIEW v1 AS SELECT base.a, base.b FROM base;\n"
        "CREATE VIEW v2 AS SELECT v1.a, v1.b FROM v1;\n"
        "CREATE VIEW v3 AS SELECT v2.a, v2.b FROM v2;"
    )
    session = _session(
        text,
        [
            EvolutionOperator(
                OpKind.RENAME_COLUMN, target=parse_path("public.base.a"), args={"new_name": "z"}
            )
        ],
    )
    patch = build_patch(session)
    drops = [c for c in patch.commands if c.verb == "DROP"]
    creates = [c for c in patch.commands if c.verb == "CREATE"]
    assert len(drops) == 3 and len(creates) == 3
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]


def test_identity_preserves_untouched_referencer():
    """A view over a changed view is dropped and recreated byte-identical."""
    text = (
        "CREATE TABLE base (a int4, b int4);\n"
        "CREATE VIEW inner_v AS SELECT base.a, base.b FROM base;\n"
        "CREATE VIEW outer_v AS SELECT inner_v.b FROM inner_v;"
    )
    # renaming inner_v's first output column forces a drop+create of inner_v;
    # outer_v only uses column b, so it is recreated unchanged
    session = Session(text, auto_accept_single=True)
    session.add_operators(
        [
            EvolutionOperator(
                OpKind.MODIFY_VIEW_BODY,
                target=parse_path("public.inner_v"),
                args={"query": "SELECT base.a AS z, base.b FROM base"},
            )
        ]
    )
    while session.pending_keys():
        key = session.pending_keys()[0]
        session.choose(key, session.pending[key].recommendations[-1].rec_id)
    patch = build_patch(session)
    outer_cmds = [c for c in patch.commands if c.actionable == "public.outer_v"]
    assert [c.verb for c in outer_cmds] == ["DROP", "CREATE"]
    assert normalize_sql(outer_cmds[1].text) == normalize_sql(
        'CREATE VIEW "outer_v" AS SELECT inner_v.b FROM inner_v;'
    )
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]


def test_patch_orders_respect_dependencies_random_models():
    rng = random.Random(77)
    runs = 0
    while runs < 25:
        text = random_dump(rng)
        model = load_model(text)
        columns = [
            c
            for t in model.entities.values()
            if t.kind.value == "table"
            for c in model.columns_of(t.path)
        ]
        if not columns:
            continue
        col = rng.choice(columns)
        session = Session(text, auto_accept_single=True)
        session.add_operators(
            [
                EvolutionOperator(
                    OpKind.RENAME_COLUMN, target=col.path, args={"new_name": col.name + "x"}
                )
            ]
        )
        while session.pending_keys():
            key = session.pending_keys()[0]
            recs = session.pending[key].recommendations
            chosen = next(r for r in recs if r.candidate.kind != OpKind.HUMAN_DECISION)
            session.choose(key, chosen.rec_id)
        patch = build_patch(session)
        _assert_phase_order(patch, session.base_model)
        report = simulate_patch(patch, session.base_model)
        assert report.clean, (text, [v.to_json() for v in report.violations])
        diffs = model_differences(report.final_model, session.current_model())
        assert diffs == [], (text, diffs)
        runs += 1


def _assert_phase_order(patch, base):
    graph = base.dependency_graph()
    drop_pos = {}
    create_pos = {}
    for i, cmd in enumerate(patch.commands):
        if cmd.verb == "DROP":
            drop_pos[cmd.actionable] = i
        elif cmd.verb in ("CREATE", "CREATE_OR_REPLACE"):
            create_pos.setdefault(cmd.actionable, i)
    for (src, dst) in graph.edges:
        if src in drop_pos and dst in drop_pos:
            assert drop_pos[src] < drop_pos[dst], f"{src} must drop before {dst}"
        if src in create_pos and dst in create_pos:
            assert create_pos[dst] < create_pos[src], f"{dst} must exist before {src}"
    for entity in set(drop_pos) & set(create_pos):
        assert drop_pos[entity] < create_pos[entity]


def test_adversarial_reorder_is_detected(running_example):
    session = _rename_uid(running_example)
    patch = build_patch(session)
    swapped = list(patch.commands)
    swapped[0], swapped[1] = swapped[1], swapped[0]  # drop members before permanents
    from schemaplan.patch import SqlPatch

    bad = SqlPatch(swapped, commit=False)
    report = simulate_patch(bad, session.base_model)
    assert not report.clean
    assert report.violations[0].index <= 2


def test_simulation_final_model_matches_fold(running_example):
    session = _rename_uid(running_example)
    patch = build_patch(session)
    report = simulate_patch(patch, session.base_model)
    assert report.clean
    assert model_differences(report.final_model, session.current_model()) == []


def test_waived_human_decision_unblocks_patch():
    text = (
        "CREATE TABLE t (a int4);\n"
        "CREATE OR REPLACE FUNCTION uses_t() RETURNS int4 AS $$\n"
        "DECLARE\n  n int4;\nBEGIN\n  SELECT a INTO n FROM t;\n  RETURN n;\nEND;$$ LANGUAGE plpgsql;\n"
        "CREATE VIEW v AS SELECT uses_t() AS n;"
    )
    session = Session(text, auto_accept_single=True)
    session.add_operators(
        [EvolutionOperator(OpKind.REMOVE_PROCEDURE, target=parse_path("public.uses_t()"))]
    )
    key = session.pending_keys()[0]
    pend = session.pending[key]
    human = next(r for r in pend.recommendations if r.candidate.kind == OpKind.HUMAN_DECISION)
    session.choose(key, human.rec_id)
    with pytest.raises(UnresolvedHumanDecision):
        build_patch(session)
    session.waive("public.v")
    patch = build_patch(session)
    assert any(c.verb == "DROP" for c in patch.commands)
