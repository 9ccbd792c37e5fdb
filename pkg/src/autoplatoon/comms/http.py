"""HTTP service exposing the status and perception servers.

Endpoints (bodies use the canonical wire encoding from ``messages``):

    POST /status?now=T            StatusUpdate     -> Ack
    GET  /system-state?agent_id=A&tick=T&now=T     -> PollReply (queued latch commands are handed over)
    POST /perception              PerceptionRequest -> PerceptionResult
    POST /latch-command           LatchCommand     -> Ack
    POST /resolve-stop?now=T      ResolveStop      -> SystemState

Errors come back as ``{"error": "..."}`` with 400 (bad body), 404 (unknown
agent or snapshot) or 409 (rejected by a server rule).
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Tuple
from urllib.parse import parse_qs, urlsplit

from ..latch import LatchCommand
from .messages import PerceptionRequest, ResolveStop, StatusUpdate, WireError, dumps, loads
from .server import CommsError, PerceptionServer, StatusServer

logger = logging.getLogger(__name__)


def _query_int(query: dict, name: str, default: Optional[int] = None) -> Optional[int]:
    values = query.get(name)
    if not values:
        return default
    try:
        return int(values[0])
    except ValueError:
        raise WireError(f"query parameter {name!r} must be an integer") from None


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    server: "PlatoonHTTPServer"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("%s - " + fmt, self.address_string(), *args)

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length)

    def _send(self, code: int, text: str) -> None:
        data = text.encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, method: str) -> None:
        url = urlsplit(self.path)
        query = parse_qs(url.query)
        status, perception = self.server.status_server, self.server.perception_server
        try:
            body = self._body() if method == "POST" else b""
            route: Tuple[str, str] = (method, url.path)
            if route == ("POST", "/status"):
                update = loads(StatusUpdate, body)
                out = status.submit_status(update, _query_int(query, "now", update.tick))
            elif route == ("GET", "/system-state"):
                agent = (query.get("agent_id") or [""])[0]
                out = status.poll(agent, _query_int(query, "tick", 0))
            elif route == ("POST", "/perception"):
                out = perception.request_perception(loads(PerceptionRequest, body))
            elif route == ("POST", "/latch-command"):
                out = status.latch_command(loads(LatchCommand, body))
            elif route == ("POST", "/resolve-stop"):
                req = loads(ResolveStop, body)
                out = status.resolve_stop(req.agent_id, _query_int(query, "now", req.tick))
            else:
                self._send(404, json.dumps({"error": f"no route {method} {url.path}"}))
                return
        except WireError as exc:
            self._send(400, json.dumps({"error": str(exc)}))
            return
        except CommsError as exc:
            self._send(exc.status, json.dumps({"error": str(exc)}))
            return
        self._send(200, dumps(out))

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")


class PlatoonHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, status_server: StatusServer, perception_server: PerceptionServer):
        self.status_server = status_server
        self.perception_server = perception_server
        super().__init__(address, _Handler)


class ServiceThread:
    """Run the HTTP service on a background thread (``port=0`` picks a free port)."""

    def __init__(self, status_server: StatusServer, perception_server: PerceptionServer,
                 host: str = "127.0.0.1", port: int = 0):
        self.httpd = PlatoonHTTPServer((host, port), status_server, perception_server)
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="platoon-http", daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "ServiceThread":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self._thread.join(timeout=5)
