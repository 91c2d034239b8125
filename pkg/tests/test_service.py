"""HTTP API behavior, including concurrency and CLI parity."""

import concurrent.futures
import json

import pytest
from fastapi.testclient import TestClient

from schemaplan.service import create_app

from conftest import fixture_text

RENAME_OP = {"op": "RenameColumn", "target": "public.person.uid", "args": {"new_name": "login"}}


@pytest.fixture
def client(tmp_path):
    app = create_app(str(tmp_path / "sessions"))
    return TestClient(app)


def _create(client, dump, auto=True):
    resp = client.post("/sessions", json={"dump": dump, "auto_accept_single": auto})
    assert resp.status_code == 201
    return resp.json()["id"]


def _pending_refs(tree):
    out = []

    def walk(node):
        for ref in node["references"]:
            if ref["status"] == "pending":
                out.append(ref)
        for child in node["children"]:
            walk(child)

    for root in tree["roots"]:
        walk(root)
    return out


def test_create_and_tree(client, running_example):
    sid = _create(client, running_example)
    tree = client.get(f"/sessions/{sid}/tree").json()
    assert tree["roots"] == [] and tree["pending"] == 0


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/tree").status_code == 404


def test_invalid_dump_422(client):
    resp = client.post("/sessions", json={"dump": "CREATE INDEX broken;"})
    assert resp.status_code == 422
    body = resp.json()
    assert body["code"] and body["message"]


def test_operator_flow_and_recommendations(client, running_example):
    sid = _create(client, running_example)
    tree = client.post(f"/sessions/{sid}/operators", json=[RENAME_OP]).json()
    pending = _pending_refs(tree)
    assert len(pending) == 1
    key = pending[0]["key"]
    detail = client.get(f"/sessions/{sid}/references/{key}/recommendations").json()
    assert [c["kind"] for c in detail["candidates"]] == [
        "AliasInSelectClause",
        "RenameReferenceInSelectClause",
    ]
    assert detail["actionable"] == "public.members_directory"
    source, (start, end) = detail["source"], detail["highlight"]
    assert source[start:end] == "uid"


def test_patch_before_closure_409(client, running_example):
    sid = _create(client, running_example)
    client.post(f"/sessions/{sid}/operators", json=[RENAME_OP])
    resp = client.post(f"/sessions/{sid}/patch", json={})
    assert resp.status_code == 409


def test_decision_idempotence(client, running_example):
    sid = _create(client, running_example)
    tree = client.post(f"/sessions/{sid}/operators", json=[RENAME_OP]).json()
    ref = _pending_refs(tree)[0]
    body = {
        "reference": json.loads(json.dumps({"owner": ref["reference"]["owner"], "span": ref["reference"]["span"]})),
        "recommendation": "RenameReferenceInSelectClause",
    }
    first = client.post(f"/sessions/{sid}/decisions", json=body)
    assert first.status_code == 200
    again = client.post(f"/sessions/{sid}/decisions", json=body)
    assert again.status_code == 409
    # the rejected repeat changed nothing
    assert client.get(f"/sessions/{sid}/tree").json() == first.json()
    # pending moved on to the downstream reference
    assert _pending_refs(first.json())


def test_full_flow_patch_matches_cli(client, tmp_path, running_example):
    sid = _create(client, running_example)
    tree = client.post(f"/sessions/{sid}/operators", json=[RENAME_OP]).json()
    decisions = []
    while True:
        pending = _pending_refs(client.get(f"/sessions/{sid}/tree").json())
        if not pending:
            break
        ref = pending[0]["reference"]
        decisions.append({"reference": ref, "chosen": "RenameReferenceInSelectClause"})
        resp = client.post(
            f"/sessions/{sid}/decisions",
            json={"reference": ref, "recommendation": "RenameReferenceInSelectClause"},
        )
        assert resp.status_code == 200
    served = client.post(f"/sessions/{sid}/patch", json={}).json()
    assert served["report"]["clean"] is True

    from schemaplan.cli import main

    schema = tmp_path / "schema.sql"
    schema.write_text(fixture_text("running_example.sql"))
    ops = tmp_path / "ops.json"
    ops.write_text(json.dumps([RENAME_OP]))
    dec = tmp_path / "decisions.json"
    dec.write_text(json.dumps(decisions))
    out = tmp_path / "patch.sql"
    code = main(
        [
            "plan",
            "--schema", str(schema),
            "--ops", str(ops),
            "--decisions", str(dec),
            "--auto-accept-single",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert out.read_text() == served["sql"]


def test_session_persistence_across_instances(tmp_path, running_example):
    data_dir = str(tmp_path / "sessions")
    app = create_app(data_dir)
    client_one = TestClient(app)
    sid = _create(client_one, running_example)
    client_one.post(f"/sessions/{sid}/operators", json=[RENAME_OP])
    # a fresh app instance over the same directory sees the session
    other = TestClient(create_app(data_dir))
    tree = other.get(f"/sessions/{sid}/tree").json()
    assert tree["pending"] == 1


def test_delete_operator_resets_tree(client, running_example):
    sid = _create(client, running_example)
    tree = client.post(f"/sessions/{sid}/operators", json=[RENAME_OP]).json()
    op_id = tree["roots"][0]["id"]
    tree = client.delete(f"/sessions/{sid}/operators/{op_id}").json()
    assert tree["roots"] == []


def test_concurrent_decisions_stay_consistent(client, running_example):
    sid = _create(client, running_example)
    tree = client.post(f"/sessions/{sid}/operators", json=[RENAME_OP]).json()
    ref = _pending_refs(tree)[0]["reference"]
    body = {"reference": ref, "recommendation": "RenameReferenceInSelectClause"}

    def post(_):
        return client.post(f"/sessions/{sid}/decisions", json=body).status_code

    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        codes = sorted(pool.map(post, range(8)))
    assert codes.count(200) == 1 and codes.count(409) == 7
    final = client.get(f"/sessions/{sid}/tree").json()
    assert final["pending"] == 1  # exactly the downstream reference remains
