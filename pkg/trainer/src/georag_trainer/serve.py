"""HTTP inference service for trained artifacts.

Request validation is done by hand so that every malformed request gets a
400 with a {"error": ...} JSON body, matching the wire contract the engine
publishes. Framework-default validation responses never reach the client.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .artifacts import TrainedModel
from .data import DIMENSIONS


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


async def _parse_body(request: Request, fields: tuple[str, ...]):
    """Returns (payload, None) or (None, error response)."""
    try:
        payload = await request.json()
    except Exception:
        return None, _error(400, "request body must be valid JSON")
    if not isinstance(payload, dict):
        return None, _error(400, "request body must be a JSON object")
    unknown = sorted(set(payload) - set(fields))
    if unknown:
        return None, _error(400, f"unknown field(s): {', '.join(unknown)}")
    for name in fields:
        value = payload.get(name)
        if not isinstance(value, str) or not value:
            return None, _error(400, f"{name} must be a non-empty string")
    return payload, None


def create_app(classifier: TrainedModel | None = None,
               evaluator: TrainedModel | None = None) -> FastAPI:
    app = FastAPI(title="georag-trainer", docs_url=None, redoc_url=None)

    @app.post("/v1/classify")
    async def classify(request: Request):
        if classifier is None:
            return _error(503, "classifier model not loaded")
        payload, err = await _parse_body(request, ("question",))
        if err is not None:
            return err
        return {"probs": classifier.classify(payload["question"])}

    @app.post("/v1/score")
    async def score(request: Request):
        if evaluator is None:
            return _error(503, "evaluator model not loaded")
        payload, err = await _parse_body(request, ("question", "document"))
        if err is not None:
            return err
        return {"scores": evaluator.score(payload["question"],
                                          payload["document"])}

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "dimensions": list(DIMENSIONS),
            "models": {
                "classifier": classifier.metadata if classifier else None,
                "evaluator": evaluator.metadata if evaluator else None,
            },
        }

    return app


def run(classifier: TrainedModel | None, evaluator: TrainedModel | None,
        host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(create_app(classifier, evaluator), host=host, port=port)
