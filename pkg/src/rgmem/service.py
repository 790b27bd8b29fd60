"""HTTP API. One engine per profile directory, opened lazily and kept for the app's lifetime."""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Any, Optional

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from rgmem.backend import Backend, make_backend
from rgmem.config import EngineConfig
from rgmem.engine import MemoryEngine, profile_dir
from rgmem.errors import (
    BackendFailure,
    DuplicateDoc,
    DuplicateProfile,
    DuplicateUnit,
    NotFound,
    RGMemError,
    SchemaViolation,
    UnknownProfile,
    ValidationError,
)

STATUS = [
    (ValidationError, 400),
    (NotFound, 404),
    ((DuplicateUnit, DuplicateDoc, DuplicateProfile), 409),
    ((BackendFailure, SchemaViolation), 502),
]


def status_for(exc: RGMemError) -> int:
    for kinds, status in STATUS:
        if isinstance(exc, kinds):
            return status
    return 500


class QueryBody(BaseModel):
    question: str
    overrides: Optional[dict[str, Any]] = None


class EngineRegistry:
    def __init__(self, config: EngineConfig, backend: Backend):
        self.config = config
        self.backend = backend
        self._engines: dict[str, MemoryEngine] = {}
        self._lock = threading.Lock()

    def get(self, profile_id: str, create: bool = False) -> MemoryEngine:
        path = profile_dir(self.config, profile_id)
        with self._lock:
            engine = self._engines.get(profile_id)
            if engine is None:
                if not create and not path.is_dir():
                    raise UnknownProfile(f"no profile {profile_id!r}")
                engine = MemoryEngine(self.config, self.backend, path)
                self._engines[profile_id] = engine
            return engine

    def create(self, profile_id: str) -> MemoryEngine:
        path = profile_dir(self.config, profile_id)
        with self._lock:
            if profile_id in self._engines or path.is_dir():
                raise DuplicateProfile(f"profile {profile_id!r} already exists")
        return self.get(profile_id, create=True)

    def close(self) -> None:
        with self._lock:
            for engine in self._engines.values():
                engine.close()
            self._engines.clear()


def create_app(config: EngineConfig, backend: Optional[Backend] = None) -> FastAPI:
    registry = EngineRegistry(config, backend or make_backend(config.backend))

    @asynccontextmanager
    async def lifespan(_app):
        yield
        registry.close()

    app = FastAPI(title="rgmem", version="1", lifespan=lifespan)
    app.state.registry = registry

    @app.exception_handler(RGMemError)
    async def _on_error(_request: Request, exc: RGMemError):
        return JSONResponse({"error": exc.code, "message": str(exc)}, status_code=status_for(exc))

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        token = config.server.auth_token
        if token and request.url.path != "/healthz":
            if request.headers.get("authorization") != f"Bearer {token}":
                return JSONResponse({"error": "unauthorized", "message": "missing or bad bearer token"}, status_code=401)
        return await call_next(request)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/profiles/{profile_id}", status_code=201)
    def create_profile(profile_id: str):
        engine = registry.create(profile_id)
        return {"profile_id": profile_id, "nodes": len(engine.store.nodes)}

    @app.post("/v1/profiles/{profile_id}/sessions")
    def ingest(profile_id: str, body: bytes = Body(..., media_type="application/x-ndjson")):
        try:
            text = body.decode("utf-8")
        except UnicodeDecodeError:
            raise ValidationError("body must be UTF-8 JSON Lines") from None
        return registry.get(profile_id, create=True).ingest_transcript(text).to_dict()

    @app.post("/v1/profiles/{profile_id}/query")
    def query(profile_id: str, body: QueryBody):
        answer, context = registry.get(profile_id).query(body.question, body.overrides)
        return {"answer": answer, "context": context.to_dict()}

    @app.post("/v1/profiles/{profile_id}/evolve")
    def evolve(profile_id: str):
        return registry.get(profile_id).evolve().to_dict()

    @app.get("/v1/profiles/{profile_id}/graph/nodes/{node_id}")
    def node(profile_id: str, node_id: str):
        return registry.get(profile_id).node_view(node_id)

    @app.get("/v1/profiles/{profile_id}/profile")
    def user_profile(profile_id: str):
        return {"profile_id": profile_id, "theories": registry.get(profile_id).profile()}

    return app
