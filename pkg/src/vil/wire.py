"""Wire protocol shared by the remote backend client and any server that
implements it: JSON payload schemas and the base64 PNG image codec.

Servers and the client both validate against these schemas, so the
contract lives in exactly one place.
"""

from __future__ import annotations

import base64

import jsonschema

from .errors import ParseError
from .geometry import Image

_BOX = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 4,
    "maxItems": 4,
}

_DETECTION = {
    "type": "object",
    "properties": {
        "label": {"type": "integer", "minimum": 0},
        "score": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "box": _BOX,
    },
    "required": ["label", "score", "box"],
    "additionalProperties": False,
}

REQUEST_SCHEMAS = {
    "generate": {
        "type": "object",
        "properties": {
            "prompt": {"type": "string", "minLength": 1},
            "seed": {"type": "integer", "minimum": 0},
        },
        "required": ["prompt"],
        "additionalProperties": False,
    },
    "scene_embed": {
        "type": "object",
        "properties": {"image": {"type": "string", "minLength": 1}},
        "required": ["image"],
        "additionalProperties": False,
    },
    "detect": {
        "type": "object",
        "properties": {"image": {"type": "string", "minLength": 1}},
        "required": ["image"],
        "additionalProperties": False,
    },
    "vl_score": {
        "type": "object",
        "properties": {
            "image": {"type": "string", "minLength": 1},
            "text": {"type": "string", "minLength": 1},
        },
        "required": ["image", "text"],
        "additionalProperties": False,
    },
}

RESPONSE_SCHEMAS = {
    "generate": {
        "type": "object",
        "properties": {"image": {"type": "string", "minLength": 1}},
        "required": ["image"],
        "additionalProperties": False,
    },
    "scene_embed": {
        "type": "object",
        "properties": {
            "vector": {"type": "array", "items": {"type": "number"}, "minItems": 1}
        },
        "required": ["vector"],
        "additionalProperties": False,
    },
    "detect": {
        "type": "object",
        "properties": {"detections": {"type": "array", "items": _DETECTION}},
        "required": ["detections"],
        "additionalProperties": False,
    },
    "vl_score": {
        "type": "object",
        "properties": {"score": {"type": "number", "minimum": 0.0, "maximum": 1.0}},
        "required": ["score"],
        "additionalProperties": False,
    },
    "health": {
        "type": "object",
        "properties": {
            "status": {"type": "string"},
            "models": {
                "type": "object",
                "properties": {
                    "generator": {"type": "string"},
                    "scene": {"type": "string"},
                    "detector": {"type": "string"},
                    "vl": {"type": "string"},
                },
                "required": ["generator", "scene", "detector", "vl"],
            },
            "feature_dim": {"type": "integer", "minimum": 1},
            "vl_score_transform": {"type": "string"},
            "deterministic": {"type": "boolean"},
        },
        "required": ["status", "models", "feature_dim"],
        "additionalProperties": True,
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "properties": {
        "error": {
            "type": "object",
            "properties": {
                "code": {"type": "string"},
                "message": {"type": "string"},
            },
            "required": ["code", "message"],
        }
    },
    "required": ["error"],
}

ROUTES = ("generate", "scene_embed", "detect", "vl_score")


def validate_request(route: str, payload: dict):
    """Check a request body against the schema for the route."""
    _validate(REQUEST_SCHEMAS, route, payload, "request")


def validate_response(route: str, payload: dict):
    """Check a response body against the schema for the route."""
    _validate(RESPONSE_SCHEMAS, route, payload, "response")


def _validate(table: dict, route: str, payload, kind: str):
    if route not in table:
        raise ParseError(f"unknown wire route {route!r}")
    try:
        jsonschema.validate(payload, table[route])
    except jsonschema.ValidationError as exc:
        raise ParseError(f"{route} {kind} violates the wire schema: {exc.message}") from exc


def encode_image(image: Image) -> str:
    """Image -> base64 PNG text, the only image form that crosses the wire."""
    return base64.b64encode(image.to_png_bytes()).decode("ascii")


def decode_image(data: str) -> Image:
    """base64 PNG text -> Image; malformed payloads raise ParseError."""
    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ParseError(f"image payload is not valid base64: {exc}") from exc
    try:
        return Image.from_png_bytes(raw)
    except Exception as exc:
        raise ParseError(f"image payload is not a decodable PNG: {exc}") from exc
