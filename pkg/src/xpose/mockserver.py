"""Reference implementation of the /v1 generation wire protocol, returning
deterministic test cards.  Used by the serve-mock command and as the golden
fixture source for client tests."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .pngio import decode_png_b64, encode_png_b64
from .viewgen import make_test_card

logger = logging.getLogger(__name__)

MODEL_ID = "mock-testcard/1"


class _BadRequest(Exception):
    pass


def handle_generate(payload: dict) -> dict:
    """Validate a /v1/generate body and build the response document.

    Raises _BadRequest with a message for any malformed input.
    """
    if not isinstance(payload, dict):
        raise _BadRequest("body must be a JSON object")
    unknown = set(payload) - {"image_png_b64", "views", "steps", "seed"}
    if unknown:
        raise _BadRequest(f"unknown fields: {sorted(unknown)}")
    try:
        image = decode_png_b64(payload["image_png_b64"])
    except KeyError:
        raise _BadRequest("missing field image_png_b64") from None
    except (ValueError, TypeError) as exc:
        raise _BadRequest(f"image_png_b64: {exc}") from None
    views = payload.get("views")
    if not isinstance(views, list) or not views:
        raise _BadRequest("views must be a non-empty list")
    deltas = []
    for k, view in enumerate(views):
        if not isinstance(view, dict):
            raise _BadRequest(f"views[{k}] must be an object")
        try:
            deltas.append(
                (float(view["d_azimuth_deg"]), float(view["d_elevation_deg"]))
            )
        except (KeyError, TypeError, ValueError):
            raise _BadRequest(
                f"views[{k}] needs numeric d_azimuth_deg and d_elevation_deg"
            ) from None
    steps = payload.get("steps")
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        raise _BadRequest("steps must be a positive integer")
    seed = payload.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise _BadRequest("seed must be an integer")

    size = image.shape[0]
    images = [make_test_card(size, a, e) for a, e in deltas]
    return {"images_png_b64": [encode_png_b64(im) for im in images]}


class _Handler(BaseHTTPRequestHandler):
    server_version = "xpose-mock/0.1"

    def log_message(self, fmt, *args):
        logger.debug("%s " + fmt, self.address_string(), *args)

    def _send_json(self, status: int, doc: dict):
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/v1/health":
            self._send_json(200, {"status": "ok", "model": MODEL_ID})
        else:
            self._send_json(404, {"error": f"no such path {self.path}"})

    def do_POST(self):
        if self.path != "/v1/generate":
            self._send_json(404, {"error": f"no such path {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            self._send_json(400, {"error": f"malformed JSON body: {exc}"})
            return
        try:
            self._send_json(200, handle_generate(payload))
        except _BadRequest as exc:
            self._send_json(400, {"error": str(exc)})


class MockBridgeServer:
    """Threaded mock server; use as a context manager in tests."""

    def __init__(self, port: int = 0, host: str = "127.0.0.1"):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, daemon=True
        )

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self):
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve_forever(port: int):
    server = ThreadingHTTPServer(("0.0.0.0", port), _Handler)
    logger.info("mock generator listening on port %d", server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
