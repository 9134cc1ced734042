"""HTTP facade for the drafting UI.

Exposes generics, in-memory drafting sessions, checking, previews,
rendering, and case checks as JSON over HTTP. The facade adds no
semantics of its own: every endpoint delegates 1:1 to the assembler and
constraint engine, every mutating response carries the fresh revision
and check report, and edits are serialized per session. Optimistic
concurrency uses the ``If-Revision`` request header (stale -> 409).
"""

from __future__ import annotations

import threading
from typing import Optional, Union

from fastapi import Body, FastAPI, Header, HTTPException, Response

from . import cases as case_universe
from . import session as sessions
from .constraints import (
    Bind,
    Contradiction,
    Delta,
    Deselect,
    EngineError,
    Exclude,
    Include,
    Select,
    Unbind,
)
from .model import Mode, ModelError
from .store import (
    NotFoundError,
    Repository,
    StoreError,
    generic_sha256,
    manifest_dict,
    report_to_json,
)
from .values import parse_value


class _SessionEntry:
    def __init__(self, session: sessions.AssemblySession):
        self.session = session
        self.lock = threading.Lock()
        self.finalized: Optional[sessions.FinalizedInstance] = None


def _parse_delta(session: sessions.AssemblySession, payload: dict) -> Delta:
    op = payload.get("op")
    if op == "include":
        return Include(payload["unit"])
    if op == "exclude":
        return Exclude(payload["unit"])
    if op == "select":
        return Select(payload["unit"], payload["version"])
    if op == "deselect":
        return Deselect(payload["unit"])
    if op == "bind":
        decl = session.doc.parameter(payload["param"])
        value = parse_value(str(payload["value"]), decl.ptype, decl.enum_values)
        return Bind(payload["param"], value)
    if op == "unbind":
        return Unbind(payload["param"])
    raise HTTPException(status_code=400, detail=f"unknown delta op: {op!r}")


def _session_state(entry: _SessionEntry) -> dict:
    session = entry.session
    instance = session.instance
    return {
        "genericId": instance.generic_id,
        "mode": session.mode.value,
        "revision": instance.revision,
        "included": sorted(instance.included),
        "selections": dict(sorted(instance.selections.items())),
        "bindings": {
            name: _canonical(session, name) for name in sorted(instance.bindings)
        },
        "finalized": entry.finalized is not None,
        "report": report_to_json(session.report),
    }


def _canonical(session: sessions.AssemblySession, name: str) -> str:
    from .values import format_value

    return format_value(session.instance.bindings[name])


def create_app(repo: Repository) -> FastAPI:
    app = FastAPI(title="contractcad")
    entries: dict[str, _SessionEntry] = {}
    counter = {"next": 1}
    registry_lock = threading.Lock()

    def entry_for(session_id: str) -> _SessionEntry:
        entry = entries.get(session_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return entry

    def check_revision(entry: _SessionEntry, if_revision: Optional[str]) -> None:
        if if_revision is None:
            return
        try:
            expected = int(if_revision)
        except ValueError:
            raise HTTPException(status_code=400, detail="If-Revision must be an integer")
        if expected != entry.session.revision:
            raise HTTPException(
                status_code=409,
                detail=f"stale revision {expected}; current is {entry.session.revision}",
            )

    def guard_mutable(entry: _SessionEntry) -> None:
        if entry.finalized is not None:
            raise HTTPException(status_code=422, detail="session is finalized and immutable")

    @app.exception_handler(ModelError)
    @app.exception_handler(EngineError)
    async def _unknown_id_handler(request, exc):  # noqa: ANN001
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=404, content={"detail": str(exc)})

    # -- generics --------------------------------------------------------

    @app.get("/generics")
    def list_generics() -> dict:
        out = []
        for doc_id in repo.list_generics():
            doc = repo.load_generic(doc_id)
            out.append({"id": doc.id, "title": doc.title})
        return {"generics": out}

    @app.get("/generics/{doc_id}")
    def get_generic(doc_id: str) -> dict:
        try:
            doc = repo.load_generic(doc_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        manifest = manifest_dict(doc)
        manifest["sha256"] = generic_sha256(doc)
        return manifest

    @app.post("/generics/{doc_id}/versions")
    def add_generic_version(doc_id: str, payload: dict = Body(...)) -> dict:
        from .model import add_version

        try:
            doc = repo.load_generic(doc_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        try:
            doc, version_id = add_version(
                doc,
                payload["unitId"],
                payload["template"],
                payload.get("rationale", ""),
                provenance=payload.get("provenance", ""),
                derived_from=payload.get("derivedFrom"),
                created_at=payload.get("createdAt", ""),
            )
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=f"missing field {exc}")
        except (ModelError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        repo.save_generic(doc)
        return {"versionId": version_id}

    # -- sessions --------------------------------------------------------

    @app.post("/sessions")
    def open_session(payload: dict = Body(...)) -> dict:
        generic_id = payload.get("genericId")
        if not generic_id:
            raise HTTPException(status_code=400, detail="genericId is required")
        try:
            doc = repo.load_generic(generic_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        try:
            mode = Mode(payload.get("mode", "notify"))
        except ValueError:
            raise HTTPException(status_code=400, detail="mode must be notify or enforce")
        with registry_lock:
            session_id = f"s{counter['next']}"
            counter["next"] += 1
            instance_id = payload.get("instanceId", session_id)
            session = sessions.new_session(doc, mode, instance_id)
            entries[session_id] = _SessionEntry(session)
        return {"sessionId": session_id, **_session_state(entries[session_id])}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            return {"sessionId": session_id, **_session_state(entry)}

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            return {
                "revision": entry.session.revision,
                "report": report_to_json(entry.session.report),
            }

    @app.post("/sessions/{session_id}/edits")
    def apply_edit(
        session_id: str,
        payload: dict = Body(...),
        if_revision: Optional[str] = Header(default=None, alias="If-Revision"),
    ) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            check_revision(entry, if_revision)
            guard_mutable(entry)
            delta = _parse_delta(entry.session, payload)
            outcome = entry.session.apply_edit(delta)
            if isinstance(outcome, sessions.Blocked):
                raise HTTPException(
                    status_code=422,
                    detail={
                        "blocked": True,
                        "reason": outcome.reason,
                        "chain": [
                            {"constraintId": step.constraint_id, "atom": str(step.atom)}
                            for step in outcome.chain
                        ],
                        "revision": entry.session.revision,
                    },
                )
            return {
                "revision": entry.session.revision,
                "sideEffects": sorted(outcome.side_effects),
                "report": report_to_json(outcome.report),
            }

    @app.post("/sessions/{session_id}/preview")
    def preview_edit(session_id: str, payload: dict = Body(...)) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            delta = _parse_delta(entry.session, payload)
            outcome = entry.session.preview_edit(delta)
            if isinstance(outcome, sessions.Blocked):
                return {
                    "blocked": True,
                    "reason": outcome.reason,
                    "revision": entry.session.revision,
                }
            return {
                "blocked": False,
                "revision": entry.session.revision,
                "sideEffects": sorted(outcome.side_effects),
                "report": report_to_json(outcome.report),
            }

    @app.post("/sessions/{session_id}/finalize")
    def finalize_session(session_id: str) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            guard_mutable(entry)
            outcome = entry.session.finalize()
            if isinstance(outcome, list):
                return {
                    "finalized": False,
                    "revision": entry.session.revision,
                    "blockers": [
                        {"kind": b.kind, "subject": b.subject, "message": b.message}
                        for b in outcome
                    ],
                }
            entry.finalized = outcome
            return {
                "finalized": True,
                "revision": entry.session.revision,
                "genericSha256": outcome.generic_sha256,
            }

    @app.get("/sessions/{session_id}/render")
    def render_session(session_id: str) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            try:
                rendered = entry.session.render(entry.finalized)
            except sessions.RenderError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            return {
                "revision": entry.session.revision,
                "draft": entry.finalized is None,
                "text": rendered.text,
            }

    @app.post("/sessions/{session_id}/versions")
    def promote_in_session(session_id: str, payload: dict = Body(...)) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            guard_mutable(entry)
            rationale = payload.get("rationale", "")
            if not rationale:
                raise HTTPException(
                    status_code=422, detail="a promoted version requires a rationale"
                )
            try:
                version_id = entry.session.promote_version(
                    payload["unitId"],
                    payload["template"],
                    rationale,
                    provenance=payload.get("provenance", ""),
                    created_at=payload.get("createdAt", ""),
                )
            except KeyError as exc:
                raise HTTPException(status_code=400, detail=f"missing field {exc}")
            except (sessions.SessionError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            return {
                "versionId": version_id,
                "revision": entry.session.revision,
                "report": report_to_json(entry.session.report),
            }

    @app.post("/sessions/{session_id}/save")
    def save_session(session_id: str) -> dict:
        entry = entry_for(session_id)
        with entry.lock:
            repo.save_generic(entry.session.doc)
            target: Union[sessions.FinalizedInstance, object]
            if entry.finalized is not None:
                repo.save_instance(entry.finalized)
            else:
                repo.save_instance(entry.session.instance)
            return {
                "revision": entry.session.revision,
                "instanceId": entry.session.instance.id,
            }

    # -- case checks -----------------------------------------------------

    @app.post("/case-checks")
    def case_checks(payload: dict = Body(...)) -> dict:
        text = payload.get("ruleText")
        if not isinstance(text, str):
            raise HTTPException(status_code=400, detail="ruleText is required")
        try:
            factors, rules = case_universe.parse_rule_file(text)
            completeness = case_universe.check_completeness(factors, rules)
            consistency = case_universe.check_consistency(factors, rules)
        except case_universe.CaseError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        names = [f.name for f in factors]
        return {
            "universe": completeness.universe,
            "uncovered": {
                "total": completeness.total_uncovered,
                "examples": [dict(zip(names, c)) for c in completeness.examples],
            },
            "conflicts": {
                "total": consistency.total_conflicts,
                "examples": [
                    {"case": dict(zip(names, c)), "rules": list(rids)}
                    for c, rids in consistency.examples
                ],
            },
        }

    return app


def main() -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="contractcad HTTP service")
    parser.add_argument("--repo", default="./contracts")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8437)
    args = parser.parse_args()
    uvicorn.run(create_app(Repository(args.repo)), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
