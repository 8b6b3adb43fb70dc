"""HTTP northbound: JSON API, server-sent events, and static UI assets."""

from __future__ import annotations

import json
import logging
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from myno.bridge.core import ArgTypeError, UnknownRpc

log = logging.getLogger("myno.http")

SSE_HEARTBEAT_SECONDS = 10.0


class HttpApiServer:
    def __init__(self, bridge, host: str = "127.0.0.1", port: int = 8080, static_dir: str | None = None):
        self.bridge = bridge
        self.host = host
        self._requested_port = port
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self.port: int | None = None
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self.stopping = threading.Event()

    def start(self) -> "HttpApiServer":
        api = self

        class Handler(_ApiHandler):
            server_ctx = api

        self._server = ThreadingHTTPServer((self.host, self._requested_port), Handler)
        self._server.daemon_threads = True
        self.port = self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever, name="http-api", daemon=True)
        self._thread.start()
        log.info("http api listening on %s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        self.stopping.set()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2)


class _ApiHandler(BaseHTTPRequestHandler):
    server_ctx: HttpApiServer = None  # injected by HttpApiServer.start
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s " + fmt, self.client_address[0], *args)

    # -- helpers -------------------------------------------------------------

    def _json(self, status: int, body: object) -> None:
        data = body if isinstance(body, (bytes, str)) else json.dumps(body)
        if isinstance(data, str):
            data = data.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _text(self, status: int, body: str, content_type: str = "text/plain") -> None:
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", f"{content_type}; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    # -- routes ---------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        bridge = self.server_ctx.bridge
        path = self.path.split("?", 1)[0]
        if path == "/api/schema":
            self._json(200, bridge.ui_schema_text())
        elif path == "/api/state":
            self._json(200, bridge.state_snapshot())
        elif path == "/api/metrics":
            self._json(200, bridge.metrics.as_dict())
        elif path == "/api/model":
            self._text(200, bridge.model_text)
        elif path == "/api/events":
            self._stream_events()
        else:
            self._static(path)

    def do_POST(self):
        bridge = self.server_ctx.bridge
        path = self.path.split("?", 1)[0]
        if not path.startswith("/api/rpc/"):
            self._json(404, {"error": "not found"})
            return
        rpc_name = path[len("/api/rpc/") :]
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            args = json.loads(raw.decode("utf-8")) if raw.strip() else {}
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._json(400, {"error": "body must be a JSON object"})
            return
        if not isinstance(args, dict):
            self._json(400, {"error": "body must be a JSON object"})
            return
        try:
            response = bridge.dispatch_rpc(rpc_name, args)
        except UnknownRpc:
            self._json(404, {"error": f"unknown rpc {rpc_name!r}"})
            return
        except ArgTypeError as exc:
            self._json(400, {"error": str(exc)})
            return
        if response.status == "ok":
            self._json(200, {"status": "ok", "result": response.detail})
        elif response.detail == "timeout":
            self._json(504, {"status": "error", "detail": "timeout"})
        else:
            self._json(502, {"status": "error", "detail": response.detail})

    # -- server-sent events -----------------------------------------------------

    def _stream_events(self):
        bridge = self.server_ctx.bridge
        subscription = bridge.events.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(b"retry: 2000\n\n")
            self.wfile.flush()
            while not self.server_ctx.stopping.is_set():
                try:
                    event = subscription.get(timeout=SSE_HEARTBEAT_SECONDS)
                except queue.Empty:
                    self.wfile.write(b": heartbeat\n\n")
                    self.wfile.flush()
                    continue
                frame = (
                    f"id: {event['id']}\n"
                    f"event: {event['event']}\n"
                    f"data: {json.dumps(event['data'])}\n\n"
                )
                self.wfile.write(frame.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            bridge.events.unsubscribe(subscription)

    # -- static assets ------------------------------------------------------------

    def _static(self, path: str):
        root = self.server_ctx.static_dir
        if root is None:
            self._json(404, {"error": "not found"})
            return
        relative = path.lstrip("/") or "index.html"
        target = (root / relative).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            self._json(404, {"error": "not found"})
            return
        content_type = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        data = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
