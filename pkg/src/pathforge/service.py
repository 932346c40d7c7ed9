"""HTTP service: a thin adapter over the library for the review UI.

Every endpoint wraps the corresponding library operation; no logic lives
here beyond request parsing, status mapping and persistence. Responses
always carry {"ok": bool, "data"|"error"}.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import engine
from .config import ToolConfig
from .errors import BadRequest, Conflict, PathforgeError, ProviderUnavailable
from .evaluation import (
    BlindChoice,
    ManualRating,
    blind_pair,
    blind_report,
    record_blind_response,
    render_blind_presentation,
    summarize_ratings,
    unblind_trial,
)
from .extraction import extract as run_extraction
from .io_formats import import_pathway
from .model import Answer, Origin
from .store import FileStore
from .validation import build_report

_STATUS_BY_CODE = {
    "UnknownArticle": 404,
    "MissingPathway": 404,
    "UnknownSession": 404,
    "UnknownTrial": 404,
    "UnknownNode": 404,
    "Conflict": 409,
    "ProtocolError": 409,
    "TrialIncomplete": 409,
    "SessionConcluded": 409,
    "NothingToUndo": 409,
    "StructurallyInvalid": 422,
    "InvalidPathway": 422,
    "MalformedDocument": 400,
    "UnsupportedVersion": 400,
    "BadRequest": 400,
    "EmptyArticle": 400,
    "EmptyText": 400,
    "ProviderUnavailable": 502,
    "ConfigError": 500,
}


def _ok(data, status_code: int = 200) -> JSONResponse:
    return JSONResponse({"ok": True, "data": data}, status_code=status_code)


def _error_payload(exc: PathforgeError) -> dict:
    payload = {"code": exc.code, "message": exc.message}
    violations = getattr(exc, "violations", None)
    if violations:
        payload["violations"] = [v.to_json_dict() for v in violations]
    json_path = getattr(exc, "json_path", None)
    if json_path:
        payload["json_path"] = json_path
    return payload


def _need(payload: dict, key: str, expected_type=str):
    if not isinstance(payload, dict) or key not in payload:
        raise BadRequest(f"missing field {key!r}")
    value = payload[key]
    if not isinstance(value, expected_type) or (
            isinstance(value, bool) and expected_type is int):
        raise BadRequest(f"field {key!r} must be {expected_type.__name__}")
    return value


def _session_payload(store: FileStore, session: engine.InterviewSession) -> dict:
    pathway, _, _ = store.get_pathway(session.pathway_id)
    node = pathway.node(session.current)
    data = session.to_json_dict()
    data["status"] = session.status.value
    data["current_node"] = {"id": node.id, "kind": node.kind.value, "text": node.text,
                            "is_default": node.is_default}
    if session.status is engine.SessionStatus.IN_PROGRESS:
        data["answers_available"] = [a.value for a in (Answer.YES, Answer.NO)]
    else:
        data["trace"] = [
            {"question": r.question_text, "answer": r.answer.value, "next": r.next_text}
            for r in engine.trace(pathway, session)
        ]
    return data


def _trial_view(store: FileStore, trial_id: str) -> dict:
    trial = store.get_trial(trial_id)
    pathway_a, _, _ = store.get_pathway(trial.label_a)
    pathway_b, _, _ = store.get_pathway(trial.label_b)
    article = store.get_article(trial.article_id)
    view = render_blind_presentation(
        trial, {trial.label_a: pathway_a, trial.label_b: pathway_b}, article)
    view["answered"] = [q for q, _ in trial.responses]
    view["complete"] = trial.is_complete()
    view["unblinded"] = trial.unblinded
    if trial.unblinded:
        view["origins"] = {
            "A": "Automatic" if trial.label_a == trial.automatic_pathway_id else "Manual",
            "B": "Automatic" if trial.label_b == trial.automatic_pathway_id else "Manual",
        }
    return view


def create_app(config: ToolConfig, store: Optional[FileStore] = None,
               static_dir: Optional[Path] = None) -> FastAPI:
    store = store or FileStore(config)
    app = FastAPI(title="pathforge", version="0.1.0")

    @app.exception_handler(PathforgeError)
    async def _domain_error(request: Request, exc: PathforgeError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse({"ok": False, "error": _error_payload(exc)}, status_code=status)

    # -- articles -----------------------------------------------------------

    @app.get("/api/articles")
    def list_articles():
        return _ok([
            {"id": a.id, "source": a.source, "difficulty": a.difficulty.value,
             "char_count": a.char_count}
            for a in store.list_articles()
        ])

    @app.get("/api/articles/{article_id}")
    def get_article(article_id: str):
        a = store.get_article(article_id)
        return _ok({"id": a.id, "source": a.source, "text": a.text,
                    "difficulty": a.difficulty.value, "char_count": a.char_count,
                    "authoring_minutes": a.authoring_minutes})

    # -- extraction ---------------------------------------------------------

    @app.post("/api/extract")
    def extract_article(payload: dict = Body(...)):
        article = store.get_article(_need(payload, "article_id"))
        result = run_extraction(article, config.provider)
        if result.error and result.error.startswith("ProviderUnavailable"):
            raise ProviderUnavailable(result.error)
        data = result.to_json_dict()
        if result.ok:
            version = store.save_pathway(result.pathway, article)
            data["version"] = version
        return _ok(data)

    # -- pathways -----------------------------------------------------------

    @app.get("/api/pathways")
    def list_pathways():
        out = []
        for pathway_id in store.pathway_ids():
            pathway, article, version = store.get_pathway(pathway_id)
            out.append({
                "id": pathway.id,
                "article_id": article.id,
                "origin": pathway.origin.value,
                "node_count": len(pathway.nodes),
                "version": version,
            })
        return _ok(out)

    @app.get("/api/pathways/{pathway_id}")
    def get_pathway(pathway_id: str):
        document, version = store.get_pathway_document(pathway_id)
        return _ok({"document": document, "version": version})

    @app.put("/api/pathways/{pathway_id}")
    def put_pathway(pathway_id: str, payload: dict = Body(...)):
        document = _need(payload, "document", dict)
        version = _need(payload, "version", int)
        pathway, article = import_pathway(json.dumps(document))
        if pathway.id != pathway_id:
            raise BadRequest(
                f"document pathway id {pathway.id!r} does not match URL {pathway_id!r}")
        new_version = store.save_pathway(pathway, article, expected_version=version)
        report = build_report(pathway, article,
                              grounding_threshold=config.grounding_threshold,
                              coverage_threshold=config.coverage_threshold,
                              conditional_markers=config.all_markers)
        return _ok({"version": new_version, "report": report.to_json_dict()})

    @app.post("/api/pathways/{pathway_id}/validate")
    def validate_pathway(pathway_id: str):
        pathway, article, _ = store.get_pathway(pathway_id)
        report = build_report(pathway, article,
                              grounding_threshold=config.grounding_threshold,
                              coverage_threshold=config.coverage_threshold,
                              conditional_markers=config.all_markers)
        return _ok(report.to_json_dict())

    # -- interview sessions --------------------------------------------------

    @app.post("/api/sessions")
    def create_session(payload: dict = Body(...)):
        pathway, _, _ = store.get_pathway(_need(payload, "pathway_id"))
        session = engine.start(pathway)
        store.save_session(session)
        return _ok(_session_payload(store, session), status_code=201)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return _ok(_session_payload(store, store.get_session(session_id)))

    @app.post("/api/sessions/{session_id}/answer")
    def answer_session(session_id: str, payload: dict = Body(...)):
        raw_answer = _need(payload, "answer")
        version = _need(payload, "version", int)
        try:
            ans = Answer(raw_answer)
        except ValueError:
            raise BadRequest("answer must be 'Yes' or 'No'") from None
        session = store.get_session(session_id)
        if session.version != version:
            raise Conflict(f"session {session_id!r} is at version {session.version}, "
                           f"not {version}")
        pathway, _, _ = store.get_pathway(session.pathway_id)
        advanced = engine.answer(pathway, session, ans)
        store.update_session(advanced, expected_version=version)
        return _ok(_session_payload(store, advanced))

    @app.post("/api/sessions/{session_id}/undo")
    def undo_session(session_id: str, payload: dict = Body(...)):
        version = _need(payload, "version", int)
        session = store.get_session(session_id)
        if session.version != version:
            raise Conflict(f"session {session_id!r} is at version {session.version}, "
                           f"not {version}")
        pathway, _, _ = store.get_pathway(session.pathway_id)
        rewound = engine.undo(pathway, session)
        store.update_session(rewound, expected_version=version)
        return _ok(_session_payload(store, rewound))

    @app.get("/api/sessions/{session_id}/trace")
    def session_trace(session_id: str):
        session = store.get_session(session_id)
        pathway, _, _ = store.get_pathway(session.pathway_id)
        rows = engine.trace(pathway, session)
        return _ok([
            {"question": r.question_text, "answer": r.answer.value, "next": r.next_text}
            for r in rows
        ])

    # -- ratings --------------------------------------------------------------

    @app.post("/api/ratings")
    def post_rating(payload: dict = Body(...)):
        try:
            rating = ManualRating.from_json_dict(payload)
        except (KeyError, ValueError, TypeError) as exc:
            raise BadRequest(f"malformed rating: {exc}") from None
        store.get_pathway(rating.pathway_id)  # 404 for unknown targets
        store.append_rating(rating)
        return _ok(rating.to_json_dict(), status_code=201)

    @app.get("/api/reports/ratings")
    def ratings_report():
        summary = summarize_ratings(store.list_ratings())
        return _ok({"summary": summary.to_json_dict(), "rendered": summary.render()})

    # -- blind protocol ---------------------------------------------------------

    @app.post("/api/blind/trials")
    def create_trial(payload: dict = Body(...)):
        article_id = _need(payload, "article_id")
        automatic_id = _need(payload, "automatic_id")
        manual_id = _need(payload, "manual_id")
        trial_id = payload.get("trial_id") or f"trial-{article_id}"
        automatic, auto_article, _ = store.get_pathway(automatic_id)
        manual, manual_article, _ = store.get_pathway(manual_id)
        for pathway, origin in ((automatic, Origin.AUTOMATIC), (manual, Origin.MANUAL)):
            if pathway.origin is not origin:
                raise BadRequest(f"pathway {pathway.id!r} does not have origin {origin.value}")
            if pathway.article_id != article_id:
                raise BadRequest(f"pathway {pathway.id!r} does not cover article {article_id!r}")
        try:
            store.get_trial(trial_id)
        except PathforgeError:
            pass
        else:
            raise Conflict(f"trial {trial_id!r} already exists")
        trial = blind_pair(article_id, automatic_id, manual_id,
                           seed=config.blind_seed, trial_id=trial_id)
        store.upsert_trial(trial)
        return _ok(_trial_view(store, trial.trial_id), status_code=201)

    @app.get("/api/blind/trials")
    def list_trials():
        return _ok([
            {"trial_id": t.trial_id, "article_id": t.article_id,
             "complete": t.is_complete(), "unblinded": t.unblinded}
            for t in store.list_trials()
        ])

    @app.get("/api/blind/trials/{trial_id}")
    def get_trial(trial_id: str):
        return _ok(_trial_view(store, trial_id))

    @app.post("/api/blind/trials/{trial_id}/response")
    def post_trial_response(trial_id: str, payload: dict = Body(...)):
        question = _need(payload, "question")
        raw_choice = _need(payload, "choice")
        try:
            choice = BlindChoice(raw_choice)
        except ValueError:
            raise BadRequest("choice must be 'A', 'B' or 'Equivalent'") from None
        trial = record_blind_response(store.get_trial(trial_id), question, choice)
        store.upsert_trial(trial)
        return _ok({"trial_id": trial_id, "answered": [q for q, _ in trial.responses],
                    "complete": trial.is_complete()})

    @app.post("/api/blind/unblind")
    def unblind(payload: dict = Body(default={})):
        trial_id = payload.get("trial_id") if isinstance(payload, dict) else None
        trials = [store.get_trial(trial_id)] if trial_id else store.list_trials()
        unblinded = 0
        for trial in trials:
            if not trial.unblinded:
                store.upsert_trial(unblind_trial(trial))
                unblinded += 1
        return _ok({"unblinded": unblinded})

    @app.get("/api/reports/blind")
    def blind_test_report():
        trials = store.list_trials()
        difficulties = {a.id: a.difficulty for a in store.list_articles()}
        report = blind_report(trials, difficulties=difficulties)
        return _ok({"report": report.to_json_dict(), "rendered": report.render()})

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
