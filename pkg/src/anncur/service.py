"""HTTP front for running studies, with event-sourced persistence.

StudyService owns the in-memory Study objects plus one append-only
event log per study.  Every mutation is applied to memory and recorded
in the log; starting a service on an existing log directory replays the
events and reconstructs sessions, positions, and per-annotator models
exactly (fits are deterministic, choice shuffles are seeded).

Concurrency: one registry lock guards study/participant lookup tables,
and each session has its own lock, so a slow model refit inside one
participant's submission never blocks another participant.
"""

from __future__ import annotations

import json
import re
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .errors import AnncurError, DataError
from .store import EventLog
from .study import (
    ConsentRequired,
    DuplicateKey,
    NoConsent,
    OutOfOrderSubmission,
    SessionComplete,
    SessionIncomplete,
    Study,
    UnknownKey,
    UnknownSession,
    UnknownStudy,
    _utc_now,
    analyze_export,
    config_from_json,
    config_to_json,
)


class DuplicateStudy(DataError):
    pass


class StudyService:
    """All running studies of one server process."""

    def __init__(self, log_dir: str | Path | None = None):
        self._lock = threading.RLock()
        self.studies: dict[str, Study] = {}
        self._logs: dict[str, EventLog] = {}
        self._key_to_study: dict[str, str] = {}
        self._sid_to_study: dict[str, str] = {}
        self._session_locks: dict[str, threading.Lock] = {}
        self._closed = False
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.log_dir.glob("*.jsonl")):
                self._replay_log(path)

    # -- persistence ----------------------------------------------------------

    def _replay_log(self, path: Path) -> None:
        log = EventLog(path)
        try:
            for record in log.recovered:
                self._apply_event(record.kind, record.payload, record.at, path)
        except AnncurError:
            log.close()
            raise
        if not log.recovered:
            # an empty log carries no study; nothing to resume
            log.close()
            path.unlink()
            return
        study_id = log.recovered[0].payload["config"]["study_id"]
        self._logs[study_id] = log

    def _apply_event(self, kind: str, payload: dict, at: str, path: Path) -> None:
        if kind == "study-created":
            config = config_from_json(payload["config"])
            if config.study_id in self.studies:
                raise DuplicateStudy(
                    f"{path}: study {config.study_id!r} already created by another log"
                )
            self.studies[config.study_id] = Study(config)
        elif kind == "registered":
            study = self.studies[self._require_study_of(path)]
            session = study.register(
                key=payload["key"],
                consent=True,
                anon_id=payload["sid"],
                group=payload["group"],
                at=at,
            )
            self._key_to_study[session.key] = study.config.study_id
            self._sid_to_study[session.sid] = study.config.study_id
            self._session_locks[session.sid] = threading.Lock()
        elif kind == "annotation":
            study = self.studies[self._sid_to_study[payload["sid"]]]
            study.submit_annotation(
                payload["sid"],
                payload["instance_id"],
                payload["choice"],
                payload["elapsed_ms"],
                at=at,
            )
        elif kind == "questionnaire":
            study = self.studies[self._sid_to_study[payload["sid"]]]
            study.submit_questionnaire(payload["sid"], payload["response"], at=at)
        elif kind == "deletion-tombstone":
            key = payload["key"]
            study = self.studies[self._key_to_study[key]]
            sid = study.sessions[key].sid
            study.delete_participant(key, at=at)
            del self._key_to_study[key]
            del self._sid_to_study[sid]
            self._session_locks.pop(sid, None)
        else:
            raise DataError(f"{path}: replay hit unknown event kind {kind!r}")

    def _require_study_of(self, path: Path) -> str:
        study_id = path.stem
        if study_id not in self.studies:
            raise DataError(f"{path}: log does not begin with a study-created event")
        return study_id

    def _log_for(self, study_id: str) -> EventLog | None:
        return self._logs.get(study_id)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            for log in self._logs.values():
                log.close()
            self._logs.clear()

    # -- study lifecycle ------------------------------------------------------

    def create_study(self, config_obj: dict) -> dict:
        config = config_from_json(config_obj)
        with self._lock:
            if config.study_id in self.studies:
                raise DuplicateStudy(f"study {config.study_id!r} already exists")
            study = Study(config)
            if self.log_dir is not None:
                path = self.log_dir / f"{config.study_id}.jsonl"
                if path.exists():
                    raise DuplicateStudy(f"a log for study {config.study_id!r} already exists")
                log = EventLog(path)
                log.append("study-created", {"config": config_to_json(config)})
                self._logs[config.study_id] = log
            self.studies[config.study_id] = study
        return self.study_info(config.study_id)

    def _study(self, study_id: str) -> Study:
        try:
            return self.studies[study_id]
        except KeyError:
            raise UnknownStudy(f"unknown study {study_id!r}") from None

    def study_info(self, study_id: str) -> dict:
        with self._lock:
            study = self._study(study_id)
            config = study.config
            return {
                "study_id": config.study_id,
                "consent_text": config.consent_text,
                "session_length": config.session_length,
                "n_control": len(config.control_ids),
                "n_evaluation": len(config.evaluation_ids),
                "groups": [g.name for g in config.groups],
                "n_registered": len(study.sessions),
            }

    # -- participant flow -----------------------------------------------------

    def register(self, study_id: str, key, consent) -> dict:
        if not isinstance(key, str) or not key:
            raise DataError("'key' must be a non-empty string")
        if not isinstance(consent, bool):
            raise DataError("'consent' must be a boolean")
        with self._lock:
            study = self._study(study_id)
            if key in self._key_to_study:
                raise DuplicateKey(f"participant key {key!r} is already registered")
            at = _utc_now()
            session = study.register(key, consent, at=at)
            log = self._log_for(study_id)
            if log is not None:
                log.append(
                    "registered",
                    {"key": key, "sid": session.sid, "group": session.group},
                    at=at,
                )
            self._key_to_study[key] = study_id
            self._sid_to_study[session.sid] = study_id
            self._session_locks[session.sid] = threading.Lock()
        return {
            "sid": session.sid,
            "group": session.group,
            "position": session.position,
            "total": study.config.session_length,
        }

    def _session_context(self, sid: str) -> tuple[Study, str, threading.Lock]:
        with self._lock:
            study_id = self._sid_to_study.get(sid)
            if study_id is None:
                raise UnknownSession(f"unknown session {sid!r}")
            return self.studies[study_id], study_id, self._session_locks[sid]

    def next_instance(self, sid: str) -> dict:
        study, _, lock = self._session_context(sid)
        with lock:
            return study.next_instance(sid)

    def submit_annotation(self, sid: str, instance_id, choice, elapsed_ms) -> dict:
        if not isinstance(instance_id, str):
            raise DataError("'instance_id' must be a string")
        if not isinstance(choice, str):
            raise DataError("'choice' must be a string")
        study, study_id, lock = self._session_context(sid)
        with lock:
            at = _utc_now()
            result = study.submit_annotation(sid, instance_id, choice, elapsed_ms, at=at)
            log = self._log_for(study_id)
            if log is not None:
                log.append(
                    "annotation",
                    {
                        "sid": sid,
                        "instance_id": instance_id,
                        "choice": choice,
                        "elapsed_ms": elapsed_ms,
                    },
                    at=at,
                )
        return result

    def submit_questionnaire(self, sid: str, response) -> dict:
        if not isinstance(response, dict):
            raise DataError("questionnaire body must be a json object")
        study, study_id, lock = self._session_context(sid)
        with lock:
            at = _utc_now()
            result = study.submit_questionnaire(sid, response, at=at)
            log = self._log_for(study_id)
            if log is not None:
                log.append("questionnaire", {"sid": sid, "response": response}, at=at)
        return result

    def delete_participant(self, key: str) -> dict:
        with self._lock:
            study_id = self._key_to_study.get(key)
            if study_id is None:
                raise UnknownKey(f"unknown participant key {key!r}")
            study = self.studies[study_id]
            sid = study.sessions[key].sid
            at = _utc_now()
            study.delete_participant(key, at=at)
            log = self._log_for(study_id)
            if log is not None:
                log.append("deletion-tombstone", {"key": key, "sid": sid}, at=at)
            del self._key_to_study[key]
            del self._sid_to_study[sid]
            self._session_locks.pop(sid, None)
        return {"ok": True}

    # -- outputs ----------------------------------------------------------------

    def export_rows(self, study_id: str) -> list[dict]:
        with self._lock:
            return self._study(study_id).export_rows()

    def report(self, study_id: str) -> dict:
        with self._lock:
            study = self._study(study_id)
            rows = study.export_rows()
            control_count = len(study.config.control_ids)
        return analyze_export(rows, control_count=control_count)


# --- HTTP layer ---------------------------------------------------------------


_STATUS_BY_ERROR: tuple[tuple[type, int], ...] = (
    (DuplicateStudy, 409),
    (DuplicateKey, 409),
    (OutOfOrderSubmission, 409),
    (SessionComplete, 409),
    (SessionIncomplete, 409),
    (ConsentRequired, 403),
    (NoConsent, 403),
    (UnknownStudy, 404),
    (UnknownSession, 404),
    (UnknownKey, 404),
    (DataError, 400),
    (AnncurError, 500),
)


def _error_code(exc: Exception) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "-", type(exc).__name__).lower()


def _status_of(exc: Exception) -> int:
    for cls, status in _STATUS_BY_ERROR:
        if isinstance(exc, cls):
            return status
    return 500


def create_app(service: StudyService | None = None, log_dir: str | Path | None = None) -> FastAPI:
    """Build the FastAPI application around a StudyService."""
    if service is None:
        service = StudyService(log_dir)
    app = FastAPI(title="annotation curriculum study service")
    app.state.service = service
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(AnncurError)
    async def on_domain_error(request: Request, exc: AnncurError):
        return JSONResponse(
            status_code=_status_of(exc),
            content={"code": _error_code(exc), "message": str(exc)},
        )

    @app.exception_handler(RequestValidationError)
    async def on_bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "bad-request", "message": str(exc)},
        )

    async def read_json(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise DataError("request body must be valid json") from None
        if not isinstance(body, dict):
            raise DataError("request body must be a json object")
        return body

    @app.post("/studies", status_code=201)
    async def create_study(request: Request):
        return service.create_study(await read_json(request))

    @app.get("/studies/{study_id}")
    async def get_study(study_id: str):
        return service.study_info(study_id)

    @app.post("/studies/{study_id}/register", status_code=201)
    async def register(study_id: str, request: Request):
        body = await read_json(request)
        return service.register(study_id, body.get("key"), body.get("consent", False))

    @app.get("/sessions/{sid}/next")
    async def next_instance(sid: str):
        return service.next_instance(sid)

    @app.post("/sessions/{sid}/annotations", status_code=201)
    async def submit_annotation(sid: str, request: Request):
        body = await read_json(request)
        missing = {"instance_id", "choice", "elapsed_ms"} - set(body)
        if missing:
            raise DataError(f"missing fields: {sorted(missing)}")
        return service.submit_annotation(
            sid, body["instance_id"], body["choice"], body["elapsed_ms"]
        )

    @app.post("/sessions/{sid}/questionnaire", status_code=201)
    async def submit_questionnaire(sid: str, request: Request):
        return service.submit_questionnaire(sid, await read_json(request))

    @app.delete("/participants/{key}")
    async def delete_participant(key: str):
        return service.delete_participant(key)

    @app.get("/studies/{study_id}/export")
    async def export_study(study_id: str):
        rows = service.export_rows(study_id)
        body = "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)
        return Response(content=body, media_type="application/x-ndjson")

    @app.get("/studies/{study_id}/report")
    async def report(study_id: str):
        return service.report(study_id)

    return app
