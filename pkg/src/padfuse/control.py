"""HTTP control surface for a running daemon.

Endpoints:
  GET   /status                       runtime snapshot
  POST  /modality/<name>/enable       enable a modality (and its component)
  POST  /modality/<name>/disable      disable it
  PATCH /params                       partial live parameter update
  GET   /stream                       server-sent events: fusion + activity
                                      frames, bodies byte-identical to the
                                      wire JSON encoding
  GET   /                             dashboard bundle, when built and not
                                      running headless

Mutations are serialized through the daemon's control lock, so a change is
visible in the immediately following /status read.
"""

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .daemon import AffectDaemon, ParamError

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
}


class ControlHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep the daemon's stdout quiet
        pass

    # -- helpers -----------------------------------------------------------

    def _send_json(self, obj, status: int = 200) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0) or 0)
        return self.rfile.read(length) if length else b""

    @property
    def _daemon(self) -> AffectDaemon:
        return self.server.affect_daemon

    # -- routes ------------------------------------------------------------

    def do_GET(self):
        if self.path == "/status":
            self._send_json(self._daemon.status())
        elif self.path == "/stream":
            self._stream()
        elif self.path in ("/", "/index.html") or (
            self.server.static_root and not self.path.startswith("/api")
        ):
            self._static()
        else:
            self._send_json({"error": "not found"}, 404)

    def do_POST(self):
        parts = [p for p in self.path.split("/") if p]
        if len(parts) == 3 and parts[0] == "modality" and parts[2] in ("enable", "disable"):
            name = parts[1]
            try:
                ack = self._daemon.set_modality_enabled(name, parts[2] == "enable")
            except KeyError:
                self._send_json({"error": f"unknown modality {name!r}"}, 404)
                return
            self._send_json(ack)
        else:
            self._send_json({"error": "not found"}, 404)

    def do_PATCH(self):
        if self.path != "/params":
            self._send_json({"error": "not found"}, 404)
            return
        try:
            patch = json.loads(self._read_body() or b"{}")
        except ValueError:
            self._send_json({"error": "invalid json body"}, 400)
            return
        if not isinstance(patch, dict):
            self._send_json({"error": "body must be a json object"}, 400)
            return
        try:
            effective = self._daemon.patch_params(patch)
        except ParamError as exc:
            self._send_json({"error": "invalid parameters", "details": exc.errors}, 400)
            return
        self._send_json(effective)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- stream --------------------------------------------------------------

    def _stream(self) -> None:
        sub = self._daemon.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Connection", "close")
            self.end_headers()
            while self.server.streaming:
                try:
                    _kind, payload = sub.get(timeout=0.5)
                except queue.Empty:
                    continue
                # one message per frame; data bytes equal the wire encoding
                self.wfile.write(b"data: " + payload + b"\n\n")
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self._daemon.unsubscribe(sub)

    # -- static dashboard ------------------------------------------------------

    def _static(self) -> None:
        root = self.server.static_root
        if root is None:
            self._send_json({"error": "no dashboard built (running headless?)"}, 404)
            return
        rel = self.path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, 404)
            return
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", _STATIC_TYPES.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ControlServer:
    """Threaded HTTP server bound to the daemon."""

    def __init__(
        self,
        daemon: AffectDaemon,
        host: Optional[str] = None,
        port: Optional[int] = None,
        static_root: Optional[Path] = None,
    ):
        host = daemon.config.control_host if host is None else host
        port = daemon.config.control_port if port is None else port
        self._httpd = ThreadingHTTPServer((host, port), ControlHandler)
        self._httpd.affect_daemon = daemon
        self._httpd.static_root = static_root
        self._httpd.streaming = True
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self):
        return self._httpd.server_address

    def start(self) -> None:
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="control-api", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        self._httpd.streaming = False
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self._httpd.server_close()
