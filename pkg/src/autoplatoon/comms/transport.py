"""Ways of reaching the servers: direct method calls or HTTP."""

from __future__ import annotations

import http.client
import json
import socket
import threading
from typing import Optional
from urllib.parse import urlencode, urlsplit

from ..latch import LatchCommand
from .messages import (
    Ack,
    PerceptionRequest,
    PerceptionResult,
    PollReply,
    ResolveStop,
    StatusUpdate,
    SystemState,
    dumps,
    loads,
)
from .server import CommsError, PerceptionServer, Rejected, StatusServer, UnknownAgent, UnknownSnapshot


class InProcessTransport:
    def __init__(self, status: StatusServer, perception: PerceptionServer):
        self.status = status
        self.perception = perception

    def submit_status(self, update: StatusUpdate, now: int) -> Ack:
        return self.status.submit_status(update, now)

    def poll(self, agent_id: str, tick: int, now: int) -> PollReply:
        return self.status.poll(agent_id, tick)

    def system_state(self, agent_id: str) -> SystemState:
        return self.status.poll_system_state(agent_id)

    def request_perception(self, req: PerceptionRequest) -> PerceptionResult:
        return self.perception.request_perception(req)

    def latch_command(self, cmd: LatchCommand) -> Ack:
        return self.status.latch_command(cmd)

    def resolve_stop(self, agent_id: str, now: int) -> SystemState:
        return self.status.resolve_stop(agent_id, now)

    def close(self) -> None:
        pass


_ERRORS = {404: UnknownAgent, 409: Rejected}


class HttpTransport:
    """Client for the HTTP service; one keep-alive connection per thread."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        parts = urlsplit(base_url)
        self.host = parts.hostname or "127.0.0.1"
        self.port = parts.port or 80
        self.timeout = timeout
        self._local = threading.local()

    def _conn(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
            conn.connect()
            conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._local.conn = conn
        return conn

    def _call(self, method: str, path: str, body: Optional[str] = None) -> str:
        headers = {"Content-Type": "application/json"} if body is not None else {}
        for attempt in (0, 1):
            conn = self._conn()
            try:
                conn.request(method, path, body=None if body is None else body.encode("utf-8"), headers=headers)
                resp = conn.getresponse()
                text = resp.read().decode("utf-8")
                break
            except (http.client.HTTPException, ConnectionError):
                conn.close()
                self._local.conn = None
                if attempt:
                    raise
        if resp.status >= 400:
            try:
                msg = json.loads(text).get("error", text)
            except ValueError:
                msg = text
            if resp.status == 404 and "snapshot" in msg:
                raise UnknownSnapshot(msg)
            raise _ERRORS.get(resp.status, CommsError)(msg)
        return text

    def submit_status(self, update: StatusUpdate, now: int) -> Ack:
        return loads(Ack, self._call("POST", f"/status?{urlencode({'now': now})}", dumps(update)))

    def poll(self, agent_id: str, tick: int, now: int) -> PollReply:
        q = urlencode({"agent_id": agent_id, "tick": tick, "now": now})
        return loads(PollReply, self._call("GET", f"/system-state?{q}"))

    def system_state(self, agent_id: str) -> SystemState:
        return self.poll(agent_id, 0, 0).state

    def request_perception(self, req: PerceptionRequest) -> PerceptionResult:
        return loads(PerceptionResult, self._call("POST", "/perception", dumps(req)))

    def latch_command(self, cmd: LatchCommand) -> Ack:
        return loads(Ack, self._call("POST", "/latch-command", dumps(cmd)))

    def resolve_stop(self, agent_id: str, now: int) -> SystemState:
        return loads(SystemState, self._call("POST", f"/resolve-stop?{urlencode({'now': now})}",
                                             dumps(ResolveStop(agent_id, now))))

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None
