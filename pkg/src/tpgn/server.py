"""Thin HTTP layer over the challenge service (stdlib only).

Routes:
    GET  /api/challenge -> {session_id, svg, expires_at}      503 empty pool
    POST /api/answer    {session_id, caption} -> {decision, score}
                        404 unknown / 409 replay / 410 expired / 400 bad body
    GET  /api/health    -> {pool_size, model_checkpoint}

A static directory can be mounted at / for the browser client.
"""

from __future__ import annotations

import json
import posixpath
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .captcha import (MAX_ANSWER_CHARS, CaptchaService, EmptyPoolError,
                      SessionExpiredError, SessionReplayError,
                      UnknownSessionError)

__all__ = ["make_server", "serve_forever"]

_MAX_BODY = 64 * 1024

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".svg": "image/svg+xml",
    ".json": "application/json",
}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def service(self) -> CaptchaService:
        return self.server.service

    def log_message(self, fmt, *args):  # keep tests quiet
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    def _send_json(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/api/challenge":
            try:
                sid, svg, expires_at = self.service.issue()
            except EmptyPoolError:
                self._send_json(503, {"error": "challenge pool is empty"})
                return
            self._send_json(200, {"session_id": sid, "svg": svg,
                                  "expires_at": expires_at})
        elif self.path == "/api/health":
            self._send_json(200, {
                "pool_size": self.service.pool_size,
                "model_checkpoint": self.service.pool.checkpoint_id,
            })
        else:
            if self._try_static():
                return
            self._send_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/api/answer":
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if not 0 <= length <= _MAX_BODY:
            self._send_json(400, {"error": "bad request body"})
            return
        try:
            doc = json.loads(self.rfile.read(length) or b"{}")
            session_id = doc["session_id"]
            caption = doc["caption"]
        except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError):
            self._send_json(400, {"error": "bad request body"})
            return
        if not isinstance(session_id, str) or not isinstance(caption, str):
            self._send_json(400, {"error": "bad request body"})
            return
        if len(caption) > MAX_ANSWER_CHARS:
            self._send_json(400, {
                "error": f"caption longer than {MAX_ANSWER_CHARS} characters"})
            return
        try:
            verdict = self.service.grade(session_id, caption)
        except UnknownSessionError:
            self._send_json(404, {"error": "unknown session"})
            return
        except SessionReplayError:
            self._send_json(409, {"error": "session already graded"})
            return
        except SessionExpiredError:
            self._send_json(410, {"error": "session expired"})
            return
        self._send_json(200, {"decision": verdict.decision,
                              "score": verdict.score})

    def _try_static(self) -> bool:
        root = getattr(self.server, "static_root", None)
        if root is None:
            return False
        rel = posixpath.normpath(self.path.split("?", 1)[0]).lstrip("/")
        if rel in ("", "."):
            rel = "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) \
                or not target.is_file():
            return False
        body = target.read_bytes()
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)
        return True


def make_server(service: CaptchaService, host: str = "127.0.0.1",
                port: int = 0, static_root=None,
                verbose: bool = False) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _Handler)
    server.service = service
    server.static_root = Path(static_root) if static_root else None
    server.verbose = verbose
    return server


def serve_forever(service: CaptchaService, host: str, port: int,
                  static_root=None) -> None:
    server = make_server(service, host, port, static_root, verbose=True)
    print(f"serving on http://{host}:{server.server_address[1]}/ "
          f"(pool size {service.pool_size})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
