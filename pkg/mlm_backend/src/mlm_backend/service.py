"""FastAPI app exposing the masked-logprob wire protocol.

    GET  /health             -> {"status": "ok", "fingerprint": str}
    POST /v1/masked-logprob  -> {"logprobs": [float], "truncated": bool}

The service refuses to start if the model cannot be loaded; malformed or
oversize queries get a 400 with an explanation.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import BackendConfig
from .scorer import MaskedWordScorer, QueryError


class Target(BaseModel):
    target_position: int
    masked_positions: list[int]


class ScoreRequest(BaseModel):
    tokens: list[str] = Field(min_length=1)
    targets: list[Target] = Field(min_length=1)


class ScoreResponse(BaseModel):
    logprobs: list[float]
    truncated: bool = False


def create_app(config: BackendConfig | None = None,
               scorer: MaskedWordScorer | None = None) -> FastAPI:
    config = config or BackendConfig.from_env()
    scorer = scorer or MaskedWordScorer(config)
    app = FastAPI(title="mlm-backend")

    @app.get("/health")
    def health():
        return {"status": "ok", "fingerprint": scorer.fingerprint}

    @app.post("/v1/masked-logprob", response_model=ScoreResponse)
    def masked_logprob(request: ScoreRequest):
        try:
            logprobs, truncated = scorer.score(
                request.tokens,
                [t.model_dump() for t in request.targets],
            )
        except QueryError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return ScoreResponse(logprobs=logprobs, truncated=truncated)

    return app
