"""HTTP surface of the scoring service.

POST /score takes {"sentence", "table_id", "column_index", "column_name"}
and answers {"probability": p} with p in [0, 1]; GET /health answers
{"status": "ok", "model": <identifier>}. Malformed requests come back as
structured validation errors, and a failing model produces a structured
error body rather than a crash.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServerConfig
from .model import load_model


class ScoreRequest(BaseModel):
    sentence: str
    table_id: str
    column_index: int = Field(ge=0)
    column_name: str


class ScoreReply(BaseModel):
    probability: float


def create_app(config: ServerConfig, model=None) -> FastAPI:
    """Build the application; ``model`` overrides the configured checkpoint."""
    if model is None:
        model = load_model(config.model_path)
    app = FastAPI(title="relevance scoring service", docs_url=None, redoc_url=None)
    inference_lock = threading.Lock()  # inference is serialized, not batched

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "model": model.name}

    @app.post("/score")
    def score(request: ScoreRequest) -> ScoreReply:
        sentence = request.sentence[:config.max_sentence_length]
        with inference_lock:
            probability = float(model.score(sentence, request.table_id,
                                            request.column_index,
                                            request.column_name))
        if not 0.0 <= probability <= 1.0:
            raise RuntimeError(f"model '{model.name}' produced probability "
                               f"{probability} outside [0, 1]")
        return ScoreReply(probability=probability)

    @app.exception_handler(Exception)
    async def on_failure(request: Request, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=500,
                            content={"error": f"scoring failed: {exc}"})

    return app
