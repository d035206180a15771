"""HTTP facade: batch endpoints plus stateful tracking sessions.

A session owns one Pipeline; clients stream PGM-encoded frames to it and
get a position fix back per frame, which is the long-running service mode
of operation. The batch endpoints (simulate/track/bench/report) operate
on server-side paths and power the CLI.
"""

from __future__ import annotations

import threading
import time
import uuid

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, frameio
from ..config import build_pipeline_config, build_scene
from ..errors import SchemaError, VlpError
from ..pipeline import Pipeline
from ..scene import Frame
from . import models, ops


class _Session:
    def __init__(self, doc):
        self.pipeline = Pipeline(build_pipeline_config(doc))
        self.fps = doc.scene.fps
        self.frames_processed = 0
        self.last_fix: dict | None = None
        self.lock = threading.Lock()

    def state(self, session_id: str) -> models.SessionState:
        return models.SessionState(
            session_id=session_id,
            frames_processed=self.frames_processed,
            slot_status={str(s.lamp_id): s.status
                         for s in self.pipeline.slots},
            last_fix=self.last_fix)


def create_app() -> FastAPI:
    app = FastAPI(title="vlptrack", version=__version__,
                  description="Visible-light positioning tracker service")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(SchemaError)
    async def schema_error(_request: Request, exc: SchemaError):
        return JSONResponse(status_code=400,
                            content={"error": str(exc), "path": exc.path})

    @app.exception_handler(VlpError)
    async def vlp_error(_request: Request, exc: VlpError):
        return JSONResponse(status_code=400,
                            content={"error": str(exc), "path": None})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(_request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=400,
                            content={"error": str(exc), "path": None})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate(request: models.SimulateRequest):
        return ops.run_simulate(request)

    @app.post("/track", response_model=models.TrackResponse)
    def track(request: models.TrackRequest):
        return ops.run_track(request)

    @app.post("/bench", response_model=models.BenchResponse)
    def bench_endpoint(request: models.BenchRequest):
        return ops.run_bench(request)

    @app.post("/report", response_model=models.ReportResponse)
    def report(request: models.ReportRequest):
        return ops.run_report(request)

    @app.post("/sessions", response_model=models.SessionCreateResponse)
    def create_session(request: models.SessionCreateRequest):
        doc = ops.resolve_config(request)
        build_scene(doc)  # validates the scene section too
        session_id = uuid.uuid4().hex[:12]
        with registry_lock:
            sessions[session_id] = _Session(doc)
        return models.SessionCreateResponse(session_id=session_id)

    def _session(session_id: str) -> _Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise SchemaError(session_id, "unknown session")
        return session

    @app.get("/sessions/{session_id}", response_model=models.SessionState)
    def session_state(session_id: str):
        return _session(session_id).state(session_id)

    @app.post("/sessions/{session_id}/frames")
    async def push_frame(session_id: str, request: Request):
        session = _session(session_id)
        body = await request.body()
        try:
            pixels = frameio.parse_pgm(body)
        except ValueError as exc:
            return JSONResponse(status_code=400,
                                content={"error": str(exc), "path": None})
        with session.lock:
            index = session.frames_processed
            frame = Frame(pixels.shape[1], pixels.shape[0], pixels,
                          index / session.fps, index)
            t0 = time.perf_counter()
            fix = session.pipeline.process_frame(frame)
            fix.proc_ms = (time.perf_counter() - t0) * 1e3
            session.frames_processed += 1
            session.last_fix = frameio.fix_to_dict(fix)
            return session.last_fix

    @app.delete("/sessions/{session_id}")
    def close_session(session_id: str):
        session = _session(session_id)
        with registry_lock:
            sessions.pop(session_id, None)
        return {"session_id": session_id,
                "frames_processed": session.frames_processed}

    return app
