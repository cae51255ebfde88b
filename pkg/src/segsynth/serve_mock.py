"""HTTP server exposing the deterministic mock over the wire protocol.

Lets the HTTP client path be exercised in CI without a model worker. The
server is stateless; requests are handled on independent threads.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import wire
from .backend import MockBackend
from .errors import ProtocolError, SegsynthError

logger = logging.getLogger(__name__)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    backend: MockBackend  # set by the server factory

    def log_message(self, fmt, *args):  # route to logging, not stderr
        logger.debug("mock server: " + fmt, *args)

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        request_id = self.headers.get("X-Request-Id")
        if request_id:
            self.send_header("X-Request-Id", request_id)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if self.path != "/healthz":
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        health = self.backend.health()
        self._reply(200, {"status": health.status, "capabilities": health.capabilities})

    def do_POST(self) -> None:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            self._reply(400, {"error": f"malformed request body: {exc}"})
            return
        try:
            if self.path == "/v1/img2img":
                resp = self.backend.img2img(wire.decode_img2img_request(payload))
                self._reply(200, wire.encode_gen_response(resp))
            elif self.path == "/v1/inpaint":
                resp = self.backend.inpaint(wire.decode_inpaint_request(payload))
                self._reply(200, wire.encode_gen_response(resp))
            elif self.path == "/v1/caption":
                caption = self.backend.caption(
                    wire.decode_rgb(payload["image"]), list(payload.get("class_names", []))
                )
                self._reply(200, {"caption": caption})
            elif self.path == "/v1/prior":
                prior = self.backend.prior(
                    wire.decode_rgb(payload["image"]), payload.get("kind", "lineart")
                )
                self._reply(200, {"prior": wire.encode_prior(prior)})
            else:
                self._reply(404, {"error": f"no such endpoint: {self.path}"})
        except (SegsynthError, KeyError, TypeError, ValueError) as exc:
            status = 400 if isinstance(exc, (ProtocolError, KeyError, TypeError, ValueError)) else 500
            self._reply(status, {"error": str(exc)})


class MockServer:
    """Owns the listening socket and its serving thread."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundHandler", (_Handler,), {"backend": MockBackend()})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
