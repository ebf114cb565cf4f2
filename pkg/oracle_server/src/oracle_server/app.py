"""HTTP surface: POST /detect, POST /classify, GET /health.

Request bodies carry images as base64 PNG; responses are plain JSON and are
validated against the bundled schemas before leaving the process.  Anything
wrong with a request is a 400 with a reason; anything wrong with the model
or with our own response shape is a 503.  No state survives a request:
models are frozen at startup, so equal bodies get equal answers.

Request parsing is done by hand rather than through a validation framework
because the protocol predates this server: malformed input must produce
HTTP 400, not a framework-specific 422.
"""

from __future__ import annotations

import base64
import binascii
import json
from importlib import resources

import cv2
import jsonschema
import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ServerConfig, resolve_classifier, resolve_detector


def _schema(name: str) -> dict:
    text = resources.files("oracle_server.schemas").joinpath(name).read_text()
    return json.loads(text)


class RequestProblem(ValueError):
    """Client-side fault; maps to HTTP 400."""


def _decode_image(body: dict) -> np.ndarray:
    """Pull the base64 PNG out of a request body; RGB uint8 or bust."""
    if not isinstance(body, dict):
        raise RequestProblem("request body must be a JSON object")
    b64 = body.get("image_png_b64")
    if not isinstance(b64, str) or not b64:
        raise RequestProblem("image_png_b64 missing or not a string")
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as err:
        raise RequestProblem(f"image_png_b64 is not valid base64: {err}") from err
    arr = cv2.imdecode(np.frombuffer(raw, dtype=np.uint8), cv2.IMREAD_COLOR)
    if arr is None:
        raise RequestProblem("image_png_b64 does not decode as an image")
    rgb = cv2.cvtColor(arr, cv2.COLOR_BGR2RGB)
    for side in ("width", "height"):
        if side in body and body[side] is not None:
            if not isinstance(body[side], int):
                raise RequestProblem(f"{side} must be an integer")
            want = rgb.shape[1] if side == "width" else rgb.shape[0]
            if body[side] != want:
                raise RequestProblem(
                    f"declared {side} {body[side]} != decoded {want}")
    return rgb


async def _json_body(request: Request) -> dict:
    try:
        return json.loads(await request.body())
    except (json.JSONDecodeError, UnicodeDecodeError) as err:
        raise RequestProblem(f"body is not valid JSON: {err}") from err


def build_app(cfg: ServerConfig | None = None) -> FastAPI:
    cfg = cfg if cfg is not None else ServerConfig()
    detector = resolve_detector(cfg)      # unresolvable ids raise here
    classifier = resolve_classifier(cfg)
    detect_schema = _schema("detect_response.schema.json")
    classify_schema = _schema("classify_response.schema.json")

    app = FastAPI(title="oracle-server", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestProblem)
    async def _bad_request(request: Request, exc: RequestProblem):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "detector_model_id": cfg.detector_model_id,
            "classifier_model_id": cfg.classifier_model_id,
            "device": cfg.device,
            "score_threshold": cfg.score_threshold,
        }

    @app.post("/detect")
    async def detect(request: Request):
        rgb = _decode_image(await _json_body(request))
        try:
            payload = {"detections": detector.detect_u8(rgb)}
            jsonschema.validate(payload, detect_schema)
        except Exception as err:  # model or conformance failure, not the client
            return JSONResponse(status_code=503,
                                content={"error": f"detector failure: {err}"})
        return payload

    @app.post("/classify")
    async def classify(request: Request):
        rgb = _decode_image(await _json_body(request))
        try:
            payload = {"probs": classifier.classify_u8(rgb)}
            jsonschema.validate(payload, classify_schema)
        except Exception as err:
            return JSONResponse(status_code=503,
                                content={"error": f"classifier failure: {err}"})
        return payload

    return app
