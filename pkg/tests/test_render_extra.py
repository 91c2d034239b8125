"""SQL rendering for the less-traveled operators, plus cycle reporting."""

import json

from schemaplan import load_model
from schemaplan.operators import EvolutionOperator, OpKind, RefHandle, operator_from_json
from schemaplan.patch import build_patch, normalize_sql
from schemaplan.session import Session
from schemaplan.simulate import model_differences, simulate_patch


def _closed_session(text, ops):
    session = Session(text, auto_accept_single=True)
    session.add_operators(ops)
    assert session.pending_keys() == []
    return session


def test_add_operators_render_and_simulate():
    session = _closed_session(
        "CREATE TABLE seed (a int4);",
        [
            operator_from_json(
                {
                    "op": "AddTable",
                    "target": "public.audit_log",
                    "args": {"columns": [{"name": "id", "type": "int4"}, {"name": "note", "type": "varchar"}]},
                }
            ),
            operator_from_json(
                {"op": "AddColumn", "target": "public.seed.extra", "args": {"type": "varchar"}}
            ),
            operator_from_json(
                {"op": "AddView", "target": "public.seed_view", "args": {"query": "SELECT seed.a FROM seed"}}
            ),
            operator_from_json(
                {
                    "op": "AddStoredProcedure",
                    "target": "public.log_note",
                    "args": {
                        "params": [["note", "varchar"]],
                        "returns": "int4",
                        "body": "\nBEGIN\n  INSERT INTO audit_log (note) VALUES (note);\n  RETURN 1;\nEND;",
                    },
                }
            ),
            operator_from_json(
                {
                    "op": "AddTrigger",
                    "target": "public.seed_audit",
                    "args": {
                        "definition": "CREATE TRIGGER seed_audit AFTER UPDATE ON seed FOR EACH ROW EXECUTE PROCEDURE log_note('x')"
                    },
                }
            ),
            operator_from_json(
                {
                    "op": "AddConstraint",
                    "target": "public.seed.seed_a_check",
                    "args": {"constraint_kind": "check", "expression": "a <> 0"},
                }
            ),
        ],
    )
    patch = build_patch(session)
    text = patch.text()
    assert 'CREATE TABLE "audit_log"' in text
    assert 'ADD COLUMN "extra" varchar' in text
    assert 'CREATE VIEW "seed_view"' in text
    assert 'CREATE FUNCTION' in text
    assert "CREATE TRIGGER seed_audit" in text
    assert 'ADD CONSTRAINT "seed_a_check" CHECK (a <> 0)' in text
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]
    assert model_differences(report.final_model, session.current_model()) == []


def test_modify_check_constraint_renders_single_alter():
    text = "CREATE TABLE t (a int4, CONSTRAINT positive CHECK (a > 0));"
    session = _closed_session(
        text,
        [
            operator_from_json(
                {
                    "op": "ModifyCheckConstraint",
                    "target": "public.t.positive",
                    "args": {"expression": "a >= 0"},
                }
            )
        ],
    )
    patch = build_patch(session)
    assert len(patch.commands) == 1
    normalized = normalize_sql(patch.commands[0].text)
    assert normalized == normalize_sql(
        'ALTER TABLE "t" DROP CONSTRAINT "positive", ADD CONSTRAINT "positive" CHECK (a >= 0);'
    )
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]


def test_rename_reference_in_constraint():
    text = "CREATE TABLE t (a int4, b int4, CONSTRAINT ordered CHECK (a < b));"
    model = load_model(text)
    ref = next(
        r
        for r in model.references
        if str(r.owner) == "public.t.ordered" and str(r.target) == "public.t.a"
    )
    session = _closed_session(
        text,
        [
            EvolutionOperator(
                OpKind.RENAME_REFERENCE_IN_CONSTRAINT,
                ref=RefHandle(ref.owner, ref.span, uid=ref.uid),
                args={"new_text": "b", "new_target": "public.t.b"},
            )
        ],
    )
    patch = build_patch(session)
    assert "CHECK (b < b)" in patch.text()
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]


def test_modify_trigger_renders_drop_and_create():
    text = (
        "CREATE TABLE t (a int4);\n"
        "CREATE OR REPLACE FUNCTION tf() RETURNS int4 AS $$\nBEGIN\n  RETURN 1;\nEND;$$ LANGUAGE plpgsql;\n"
        "CREATE TRIGGER trg BEFORE UPDATE ON t FOR EACH ROW EXECUTE PROCEDURE tf();"
    )
    new_def = "CREATE TRIGGER trg AFTER UPDATE ON t FOR EACH ROW EXECUTE PROCEDURE tf()"
    session = _closed_session(
        text,
        [operator_from_json({"op": "ModifyTrigger", "target": "public.trg", "args": {"definition": new_def}})],
    )
    patch = build_patch(session)
    verbs = [c.verb for c in patch.commands]
    assert verbs == ["DROP", "CREATE"]
    assert 'DROP TRIGGER "trg" ON "t"' in patch.commands[0].text
    assert "AFTER UPDATE" in patch.commands[1].text
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]


def test_retype_column_offers_manual_choice():
    text = "CREATE TABLE t (a int4);\nCREATE VIEW v AS SELECT t.a FROM t;"
    session = Session(text, auto_accept_single=True)
    session.add_operators(
        [operator_from_json({"op": "RetypeColumn", "target": "public.t.a", "args": {"type": "int8"}})]
    )
    keys = session.pending_keys()
    assert keys, "a referenced column retype needs decisions"
    kinds = [r.candidate.kind.value for r in session.pending[keys[0]].recommendations]
    assert kinds == ["DoNothing", "HumanDecision"]
    session.choose(keys[0], "DoNothing")
    assert session.closed
    patch = build_patch(session)
    assert 'ALTER COLUMN "a" TYPE int8' in patch.text()
    report = simulate_patch(patch, session.base_model)
    assert report.clean, [v.to_json() for v in report.violations]


def test_procedure_call_cycle_exits_5(tmp_path, capsys):
    from schemaplan.cli import main

    schema = tmp_path / "schema.sql"
    schema.write_text(
        "CREATE OR REPLACE FUNCTION ping() RETURNS int4 AS $$\nBEGIN\n  RETURN pong();\nEND;$$ LANGUAGE plpgsql;\n"
        "CREATE OR REPLACE FUNCTION pong() RETURNS int4 AS $$\nBEGIN\n  RETURN ping();\nEND;$$ LANGUAGE plpgsql;\n"
    )
    code = main(["inspect", "--schema", str(schema), "--graph", "json"])
    assert code == 5
    assert "cycle" in capsys.readouterr().err.lower()


def test_data_dir_env_variable(tmp_path, monkeypatch, running_example):
    from fastapi.testclient import TestClient

    from schemaplan.service import create_app

    monkeypatch.setenv("DBE_DATA_DIR", str(tmp_path / "env-sessions"))
    client = TestClient(create_app())
    resp = client.post("/sessions", json={"dump": running_example})
    assert resp.status_code == 201
    saved = list((tmp_path / "env-sessions").glob("*.json"))
    assert len(saved) == 1
    assert json.loads(saved[0].read_text())["id"] == resp.json()["id"]
