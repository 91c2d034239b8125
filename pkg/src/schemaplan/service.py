"""HTTP session service for interactive planning clients.

Per-session mutations are serialized behind a lock; distinct sessions are
independent. Errors come back as {code, message, span?} JSON bodies.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .errors import (
    AlreadyDecided,
    ContradictoryOperators,
    CycleDetected,
    SchemaPlanError,
    SqlSyntaxError,
    UnknownEntity,
    UnknownRecommendation,
    UnresolvedHumanDecision,
    UnresolvedInCheckedContext,
)
from .operators import operator_from_json
from .patch import build_patch
from .session import Session
from .simulate import simulate_patch

_STATUS = {
    UnknownEntity: 404,
    UnknownRecommendation: 404,
    AlreadyDecided: 409,
    ContradictoryOperators: 409,
    UnresolvedHumanDecision: 409,
    CycleDetected: 409,
    SqlSyntaxError: 422,
    UnresolvedInCheckedContext: 422,
}


class SessionStore:
    def __init__(self, data_dir: str | None = None):
        self.data_dir = Path(data_dir) if data_dir else None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def create(self, dump: str, auto_accept_single: bool) -> Session:
        session = Session(dump, auto_accept_single=auto_accept_single)
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        self.persist(session)
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None and self.data_dir is not None:
            path = self.data_dir / f"{session_id}.json"
            if path.exists():
                session = Session.load(str(path))
                with self._registry_lock:
                    self._sessions[session_id] = session
                    self._locks.setdefault(session_id, threading.Lock())
        if session is None:
            raise UnknownEntity(f"unknown session {session_id}")
        return session

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            lock = self._locks.get(session_id)
            if lock is None:
                raise UnknownEntity(f"unknown session {session_id}")
            return lock

    def drop(self, session_id: str) -> None:
        with self._registry_lock:
            self._sessions.pop(session_id, None)
            self._locks.pop(session_id, None)
        if self.data_dir is not None:
            path = self.data_dir / f"{session_id}.json"
            if path.exists():
                path.unlink()

    def persist(self, session: Session) -> None:
        if self.data_dir is not None:
            session.save(str(self.data_dir / f"{session.session_id}.json"))


class CreateSessionBody(BaseModel):
    dump: str
    auto_accept_single: bool = False


class DecisionBody(BaseModel):
    reference: dict
    recommendation: str | None = None
    chosen: str | None = None


class PatchBody(BaseModel):
    commit: bool = False


def create_app(data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="schemaplan session service")
    store = SessionStore(data_dir or os.environ.get("DBE_DATA_DIR"))
    app.state.store = store

    @app.exception_handler(SchemaPlanError)
    async def _planner_error(_request: Request, err: SchemaPlanError):
        status = 422
        for klass, code in _STATUS.items():
            if isinstance(err, klass):
                status = code
                break
        return JSONResponse(status_code=status, content=err.to_json())

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        session = store.create(body.dump, body.auto_accept_single)
        return {"id": session.session_id, "pending": session.pending_count()}

    @app.get("/sessions/{session_id}/tree")
    def get_tree(session_id: str):
        return store.get(session_id).tree_json()

    @app.post("/sessions/{session_id}/operators")
    def add_operators(session_id: str, body: list[dict] | dict):
        session = store.get(session_id)
        entries = body if isinstance(body, list) else [body]
        ops = [operator_from_json(e) for e in entries]
        with store.lock(session_id):
            session.add_operators(ops)
            store.persist(session)
        return session.tree_json()

    @app.delete("/sessions/{session_id}/operators/{op_id}")
    def delete_operator(session_id: str, op_id: str):
        session = store.get(session_id)
        with store.lock(session_id):
            session.remove_operator(op_id)
            store.persist(session)
        return session.tree_json()

    @app.get("/sessions/{session_id}/references/{ref_key}/recommendations")
    def recommendations(session_id: str, ref_key: str):
        session = store.get(session_id)
        return session.reference_detail(ref_key)

    @app.post("/sessions/{session_id}/decisions")
    def decide(session_id: str, body: DecisionBody):
        session = store.get(session_id)
        ref = body.reference
        span = ref.get("span", [0, 0])
        key = f"{ref.get('owner')}@{span[0]}-{span[1]}"
        rec = body.recommendation or body.chosen
        if rec is None:
            raise UnknownRecommendation("no recommendation given")
        with store.lock(session_id):
            session.choose(key, rec)
            store.persist(session)
        return session.tree_json()

    @app.post("/sessions/{session_id}/patch")
    def patch(session_id: str, body: PatchBody | None = None):
        session = store.get(session_id)
        with store.lock(session_id):
            built = build_patch(session, commit=body.commit if body else False)
            report = simulate_patch(built, session.base_model)
        return {
            "sql": built.text(),
            "statements": [c.to_json() for c in built.commands],
            "report": report.to_json(),
        }

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.get(session_id)
        store.drop(session_id)
        return Response(status_code=204)

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_dir.is_dir():  # serve the optional web console when built
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
