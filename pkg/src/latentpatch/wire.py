"""HTTP plumbing for external oracle backends.

Images cross the wire as base64 PNG, which pins them to the 8-bit grid; the
in-process toy oracles quantize to the same grid first, so both paths see
identical pixels.  Every response is validated against a JSON schema before
use.  Transient failures are retried with exponential backoff a bounded
number of times, then surfaced as OracleUnavailableError so the caller can
checkpoint and abort instead of silently burning budget.
"""

from __future__ import annotations

import base64
import json
import time
from importlib import resources

import jsonschema
import requests

from .core import ImageBuffer, OracleUnavailableError, decode_png, encode_png

MAX_RETRIES = 3
BACKOFF_BASE_S = 0.5
REQUEST_TIMEOUT_S = 30.0


def image_to_b64(img: ImageBuffer) -> str:
    return base64.b64encode(encode_png(img)).decode("ascii")


def b64_to_image(data: str) -> ImageBuffer:
    return decode_png(base64.b64decode(data))


def load_schema(name: str) -> dict:
    text = resources.files("latentpatch.schemas").joinpath(name).read_text()
    return json.loads(text)


def post_json(url: str, payload: dict, schema: dict | None = None,
              sleep=time.sleep) -> dict:
    """POST `payload`, retry on failure, validate the JSON reply.

    Raises OracleUnavailableError after MAX_RETRIES failed attempts; a reply
    that fails schema validation counts as a failure too, since a malformed
    oracle is as unusable as a dead one.
    """
    last_err: Exception | None = None
    for attempt in range(MAX_RETRIES):
        if attempt:
            sleep(BACKOFF_BASE_S * (2 ** (attempt - 1)))
        try:
            resp = requests.post(url, json=payload, timeout=REQUEST_TIMEOUT_S)
            resp.raise_for_status()
            body = resp.json()
            if schema is not None:
                jsonschema.validate(body, schema)
            return body
        except (requests.RequestException, ValueError,
                jsonschema.ValidationError) as err:
            last_err = err
    raise OracleUnavailableError(f"POST {url} failed after {MAX_RETRIES} attempts: {last_err}")
