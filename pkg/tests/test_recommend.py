"""Recommendation catalog and the session decision loop."""

import json

import pytest

from schemaplan import parse_path
from schemaplan.errors import AlreadyDecided, UnknownRecommendation
from schemaplan.operators import EvolutionOperator, OpKind
from schemaplan.session import Session

from conftest import fixture_text


def _rename_uid_session(text, auto=True):
    session = Session(text, auto_accept_single=auto)
    session.add_operators(
        [
            EvolutionOperator(
                OpKind.RENAME_COLUMN,
                target=parse_path("public.person.uid"),
                args={"new_name": "login"},
            )
        ]
    )
    return session


def test_where_ref_gets_single_candidate(running_example):
    session = _rename_uid_session(running_example, auto=False)
    where_key = "public.members_directory.query:0.where:0@89-92"
    pend = session.pending[where_key]
    assert [r.candidate.kind.value for r in pend.recommendations] == [
        "RenameReferenceInNonSelectClause"
    ]


def test_select_ref_gets_alias_and_rename(running_example):
    session = _rename_uid_session(running_example, auto=False)
    select_key = "public.members_directory.query:0.select:0@54-57"
    kinds = [r.candidate.kind.value for r in session.pending[select_key].recommendations]
    assert kinds == ["AliasInSelectClause", "RenameReferenceInSelectClause"]


def test_auto_accept_single_leaves_only_select_choice(running_example):
    session = _rename_uid_session(running_example, auto=True)
    assert session.pending_keys() == ["public.members_directory.query:0.select:0@54-57"]


def test_choosing_rename_surfaces_downstream_reference(running_example):
    session = _rename_uid_session(running_example)
    session.choose(session.pending_keys()[0], "RenameReferenceInSelectClause")
    assert session.pending_keys() == ["public.permanents_directory.query:0.select:0@87-90"]


def test_choosing_alias_stops_propagation(running_example):
    session = _rename_uid_session(running_example)
    session.choose(session.pending_keys()[0], "AliasInSelectClause")
    assert session.pending_keys() == []
    assert session.closed


def test_full_walkthrough_tree_shape(running_example):
    """Propagating every rename: 4 decided references, tree depth 3."""
    session = _rename_uid_session(running_example)
    while session.pending_keys():
        session.choose(session.pending_keys()[0], "RenameReferenceInSelectClause")
    assert session.closed
    decided = [p for p in session.pending.values() if p.decided]
    assert len(decided) == 4
    tree = session.tree_json()

    def depth(node):
        return 1 + max((depth(c) for c in node["children"]), default=0)

    assert depth(tree["roots"][0]) == 3
    assert tree["roots"][0]["status"] == "decided"


def test_double_decision_rejected(running_example):
    session = _rename_uid_session(running_example)
    key = session.pending_keys()[0]
    session.choose(key, "RenameReferenceInSelectClause")
    with pytest.raises(AlreadyDecided):
        session.choose(key, "AliasInSelectClause")
    with pytest.raises(UnknownRecommendation):
        session.choose(session.pending_keys()[0], "NoSuchRecommendation")


def test_operator_appears_once_in_tree(running_example):
    session = _rename_uid_session(running_example)
    while session.pending_keys():
        session.choose(session.pending_keys()[0], "RenameReferenceInSelectClause")
    ids = [op.op_id for op in session.ops]
    assert len(ids) == len(set(ids))
    roots = {op.op_id for op in session.roots()}
    children = {op.op_id for op in session.ops if op.provenance.source == "recommendation"}
    assert roots.isdisjoint(children)
    for op in session.ops:
        if op.provenance.source == "recommendation":
            assert op.provenance.parent in {o.op_id for o in session.ops}


def test_decision_log_replay_reproduces_tree(running_example):
    session = _rename_uid_session(running_example)
    while session.pending_keys():
        session.choose(session.pending_keys()[0], "RenameReferenceInSelectClause")
    log = [
        {"reference": d["reference"], "chosen": d["chosen"]}
        for d in session.decision_log
        if not d["auto"]
    ]
    replay = _rename_uid_session(running_example)
    unmatched = replay.apply_decision_log(log)
    assert unmatched == []
    assert replay.closed
    original, replayed = session.tree_json(), replay.tree_json()
    assert replayed["roots"] == original["roots"]
    assert replayed["pending"] == original["pending"]


def test_session_save_load_round_trip(tmp_path, running_example):
    session = _rename_uid_session(running_example)
    session.choose(session.pending_keys()[0], "RenameReferenceInSelectClause")
    path = tmp_path / "session.json"
    session.save(str(path))
    loaded = Session.load(str(path))
    assert loaded.pending_keys() == session.pending_keys()
    assert loaded.tree_json()["roots"] == session.tree_json()["roots"]


def test_corrupt_session_file_rejected(tmp_path):
    from schemaplan.errors import CorruptSessionFile

    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"version": 99, "dump": ""}))
    with pytest.raises(CorruptSessionFile):
        Session.load(str(path))


def test_move_views_without_referencers_close_immediately():
    text = fixture_text("web_views.sql")
    session = Session(text, auto_accept_single=True)
    ops = [
        EvolutionOperator(
            OpKind.MOVE_VIEW,
            target=parse_path(f"public.web_v{i:02d}"),
            args={"namespace": "web"},
        )
        for i in range(1, 24)
    ]
    session.add_operators(ops)
    assert session.pending_count() == 0
    assert session.closed


def test_remove_operator_prunes_descendants(running_example):
    session = _rename_uid_session(running_example)
    session.choose(session.pending_keys()[0], "RenameReferenceInSelectClause")
    root_id = session.roots()[0].op_id
    session.remove_operator(root_id)
    assert session.ops == []
    assert session.pending == {}
