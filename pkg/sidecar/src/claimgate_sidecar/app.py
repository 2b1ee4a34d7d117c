"""FastAPI application implementing the wire protocol.

Request bodies are validated against strict pydantic schemas (unknown fields
rejected); violations return 400 with ``{"error": ...}``. Inference failures
return 500 with the failing capability's name. Responses are never partial.
Backpressure: at most ``max_inflight`` inference requests run concurrently;
excess requests are rejected with 429.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .engine import CAPABILITIES, DeterministicEngine

PROTOCOL_VERSION = "claimgate-wire-1"


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NliPair(_Schema):
    premise: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)


class NliRequest(_Schema):
    pairs: list[NliPair]


class EmbedRequest(_Schema):
    texts: list[str]


class TurnsRequest(_Schema):
    turns: list[str]


class ContextClaimRequest(_Schema):
    context: list[str]
    claim: str


class CorefSelectRequest(_Schema):
    context: list[str]
    claim: str
    span: list[int] = Field(min_length=2, max_length=2)
    candidates: list[str]


class CrossEncodePair(_Schema):
    query: str
    passage: str


class CrossEncodeRequest(_Schema):
    pairs: list[CrossEncodePair]


class _Busy(Exception):
    pass


def create_app(engine=None, max_inflight: int = 8) -> FastAPI:
    engine = engine or DeterministicEngine()
    models = engine.model_ids()
    app = FastAPI(title="claimgate-sidecar", docs_url=None, redoc_url=None)
    slots = threading.Semaphore(max_inflight)

    @contextmanager
    def inference_slot():
        if not slots.acquire(blocking=False):
            raise _Busy()
        try:
            yield
        finally:
            slots.release()

    @app.exception_handler(RequestValidationError)
    async def on_bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.exception_handler(_Busy)
    async def on_busy(request: Request, exc: _Busy):
        return JSONResponse(status_code=429, content={"error": "server at capacity, retry later"})

    def capability(name: str):
        """Run one inference call; convert failures to a 5xx naming `name`."""

        @contextmanager
        def guard():
            with inference_slot():
                try:
                    yield
                except Exception as exc:  # noqa: BLE001 - wire boundary
                    raise _Inference(name, exc) from exc

        return guard

    class _Inference(Exception):
        def __init__(self, capability_name: str, cause: Exception):
            self.capability_name = capability_name
            self.cause = cause

    @app.exception_handler(_Inference)
    async def on_inference_error(request: Request, exc: _Inference):
        return JSONResponse(
            status_code=500,
            content={"error": str(exc.cause), "capability": exc.capability_name},
        )

    @app.get("/health")
    def health():
        return {
            "protocol": PROTOCOL_VERSION,
            "capabilities": list(CAPABILITIES),
            "models": models,
        }

    @app.post("/nli")
    def nli(req: NliRequest):
        with capability("nli")():
            logits = engine.nli([(p.premise, p.hypothesis) for p in req.pairs])
        return {"model_id": models["nli"], "results": [{"logits": row} for row in logits]}

    @app.post("/embed")
    def embed(req: EmbedRequest):
        with capability("embed")():
            vectors = engine.embed(req.texts)
        return {"model_id": models["embed"], "results": [{"vector": v} for v in vectors]}

    @app.post("/punctuate")
    def punctuate(req: TurnsRequest):
        with capability("punctuate")():
            results = [engine.punctuate(t) for t in req.turns]
        return {"model_id": models["punctuate"], "results": results}

    @app.post("/truecase")
    def truecase(req: TurnsRequest):
        with capability("truecase")():
            results = [engine.truecase(t) for t in req.turns]
        return {"model_id": models["truecase"], "results": results}

    @app.post("/coref/propose")
    def coref_propose(req: ContextClaimRequest):
        with capability("coref_propose")():
            proposals = engine.coref_propose(req.context, req.claim)
        return {"model_id": models["coref_propose"], "proposals": proposals}

    @app.post("/coref/select")
    def coref_select(req: CorefSelectRequest):
        with capability("coref_select")():
            index = engine.coref_select(req.context, req.claim, req.span, req.candidates)
        return {"model_id": models["coref_select"], "index": index}

    @app.post("/rewrite")
    def rewrite(req: ContextClaimRequest):
        with capability("rewrite")():
            text = engine.rewrite(req.context, req.claim)
        return {"model_id": models["rewrite"], "rewrite": text}

    @app.post("/cross_encode")
    def cross_encode(req: CrossEncodeRequest):
        with capability("cross_encode")():
            scores = engine.cross_encode([(p.query, p.passage) for p in req.pairs])
        return {"model_id": models["cross_encode"], "results": scores}

    return app
