"""HTTP layer: route dispatch, schema enforcement, structured errors.

Requests and responses both validate against the vil.wire schemas, so
a body this server accepts is exactly a body the remote client emits,
and vice versa. Client mistakes come back as 400 with an error object;
server-side surprises as 500. Request-level parallelism is bounded by
a semaphore sized from the configured batch size; the models are
process-local singletons shared by all handler threads.
"""

from __future__ import annotations

import json
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from vil import wire
from vil.errors import ParseError

from .models import ModelLoadError, ModelSet


class SidecarApp:
    """Transport-free request handler; the HTTP shim stays trivial."""

    def __init__(self, models: ModelSet, deterministic: bool = True,
                 batch_size: int = 4):
        if int(batch_size) < 1:
            raise ModelLoadError(f"batch_size must be positive, got {batch_size}")
        self.models = models
        self.deterministic = bool(deterministic)
        self._gate = threading.BoundedSemaphore(int(batch_size))

    def health(self) -> dict:
        return {
            "status": "ok",
            "models": self.models.identities(),
            "feature_dim": self.models.scene.embed_dim,
            "vl_score_transform": self.models.vl.transform,
            "deterministic": self.deterministic,
        }

    def handle(self, route: str, payload: dict) -> dict:
        """Run one validated request; ParseError means a client error."""
        wire.validate_request(route, payload)
        with self._gate:
            if route == "generate":
                seed = payload.get("seed")
                if seed is None:
                    seed = 0 if self.deterministic else secrets.randbits(32)
                image = self.models.generator.generate(payload["prompt"], int(seed))
                body = {"image": wire.encode_image(image)}
            elif route == "scene_embed":
                image = wire.decode_image(payload["image"])
                vec = self.models.scene.embed(image)
                body = {"vector": [float(v) for v in vec]}
            elif route == "detect":
                image = wire.decode_image(payload["image"])
                body = {"detections": [
                    {"label": int(label), "score": float(score),
                     "box": [float(c) for c in box.as_array()]}
                    for label, score, box in self.models.detector.detect(image)
                ]}
            elif route == "vl_score":
                image = wire.decode_image(payload["image"])
                body = {"score": self.models.vl.score(image, payload["text"])}
            else:
                raise ParseError(f"unknown wire route {route!r}")
        try:
            wire.validate_response(route, body)
        except ParseError as exc:
            # a schema break here is a server bug, not a client error
            raise RuntimeError(str(exc)) from exc
        return body


class _Handler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _send(self, status: int, body: dict):
        data = json.dumps(body, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, status: int, code: str, message: str):
        self._send(status, {"error": {"code": code, "message": message}})

    def do_GET(self):
        path = self.path.split("?", 1)[0].strip("/")
        if path == "health":
            self._send(200, self.server.app.health())
        elif path in wire.ROUTES:
            self._error(405, "method_not_allowed", f"POST to /{path}")
        else:
            self._error(404, "unknown_route", f"no route /{path}")

    def do_POST(self):
        route = self.path.split("?", 1)[0].strip("/")
        if route not in wire.ROUTES:
            if route == "health":
                self._error(405, "method_not_allowed", "GET /health")
            else:
                self._error(404, "unknown_route", f"no route /{route}")
            return
        try:
            length = int(self.headers.get("Content-Length", 0) or 0)
            raw = self.rfile.read(length)
            payload = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            self._error(400, "bad_json", f"request body is not JSON: {exc}")
            return
        if not isinstance(payload, dict):
            self._error(400, "bad_json", "request body must be a JSON object")
            return
        try:
            body = self.server.app.handle(route, payload)
        except ParseError as exc:
            self._error(400, "bad_request", str(exc))
            return
        except Exception as exc:
            self._error(500, "internal", f"{type(exc).__name__}: {exc}")
            return
        self._send(200, body)


class SidecarServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, app: SidecarApp):
        super().__init__(address, _Handler)
        self.app = app


def make_server(app: SidecarApp, host: str = "127.0.0.1",
                port: int = 0) -> SidecarServer:
    """Bind a threading server; port 0 picks a free port."""
    return SidecarServer((host, port), app)
