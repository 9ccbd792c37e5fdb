"""Seeded virtual links delivering messages at tick boundaries."""

from __future__ import annotations

import heapq
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .messages import PerceptionRequest, PollRequest, StatusUpdate
from .server import CommsError

logger = logging.getLogger(__name__)

UP = 0
DOWN = 1
CHANNELS = ("status", "perception")


@dataclass(frozen=True)
class LinkConfig:
    latency: int = 1
    jitter: int = 0
    drop: float = 0.0
    fifo: bool = True

    def __post_init__(self) -> None:
        if self.latency < 0 or self.jitter < 0:
            raise ValueError("latency and jitter must be >= 0")
        if not 0.0 <= self.drop <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")

    @property
    def max_latency(self) -> int:
        return self.latency + self.jitter


@dataclass(frozen=True)
class Chaos:
    """Extra impairment for messages an agent's link carries during [start, end)."""

    agent: str
    channel: str
    start: int
    end: int
    drop: float = 0.0
    extra_delay: int = 0

    def active(self, agent: str, channel: str, tick: int) -> bool:
        return agent == self.agent and channel == self.channel and self.start <= tick < self.end


@dataclass(order=True)
class _InFlight:
    due: int
    seq: int
    agent: str = field(compare=False)
    channel: str = field(compare=False)
    direction: int = field(compare=False)
    payload: Any = field(compare=False)
    sent: int = field(compare=False)


class VirtualNetwork:
    """Per-agent bidirectional links between followers and the servers.

    Within one delivery phase the server handles every arriving write before
    answering that tick's polls, so a poll sees all state changes that reached
    the server on the same tick.
    """

    def __init__(
        self,
        transport,
        agents: Sequence[str],
        links: Mapping[str, LinkConfig],
        seed: int = 0,
        chaos: Iterable[Chaos] = (),
    ):
        self.transport = transport
        self.links = {c: links.get(c, LinkConfig()) for c in CHANNELS}
        self.chaos = list(chaos)
        self._rngs: Dict[Tuple[str, str, int], np.random.Generator] = {}
        for i, a in enumerate(agents):
            for j, c in enumerate(CHANNELS):
                for d in (UP, DOWN):
                    self._rngs[(a, c, d)] = np.random.default_rng([seed, 7919, i, j, d])
        self._last_due: Dict[Tuple[str, str, int], int] = {}
        self._heap: List[_InFlight] = []
        self._seq = 0
        self.sent = 0
        self.dropped = 0
        self.errors: List[Tuple[int, str, str]] = []

    def max_latency(self, channel: str) -> int:
        return self.links[channel].max_latency

    def _send(self, agent: str, channel: str, direction: int, payload: Any, now: int) -> None:
        cfg = self.links[channel]
        key = (agent, channel, direction)
        rng = self._rngs[key]
        self.sent += 1
        drop = cfg.drop
        delay = cfg.latency + (int(rng.integers(0, cfg.jitter + 1)) if cfg.jitter else 0)
        for c in self.chaos:
            if c.active(agent, channel, now):
                drop = max(drop, c.drop)
                delay += c.extra_delay
        if drop > 0.0 and rng.random() < drop:
            self.dropped += 1
            return
        due = now + delay
        if cfg.fifo:
            due = max(due, self._last_due.get(key, due))
            self._last_due[key] = due
        self._seq += 1
        heapq.heappush(self._heap, _InFlight(due, self._seq, agent, channel, direction, payload, now))

    def send_status(self, update: StatusUpdate, now: int) -> None:
        self._send(update.agent_id, "status", UP, update, now)

    def send_poll(self, req: PollRequest, now: int) -> None:
        self._send(req.agent_id, "status", UP, req, now)

    def send_perception(self, req: PerceptionRequest, now: int) -> None:
        self._send(req.agent_id, "perception", UP, req, now)

    def pending(self) -> int:
        return len(self._heap)

    def deliver(self, now: int) -> Dict[str, List[Any]]:
        inbox: Dict[str, List[Any]] = defaultdict(list)
        while True:
            polls = []
            while self._heap and self._heap[0].due <= now:
                m = heapq.heappop(self._heap)
                if m.direction == DOWN:
                    inbox[m.agent].append(m.payload)
                elif isinstance(m.payload, PollRequest):
                    polls.append(m)
                else:
                    self._handle(m, now)
            if not polls:
                break
            for m in polls:
                self._handle(m, now)
        return dict(inbox)

    def _handle(self, m: _InFlight, now: int) -> None:
        p = m.payload
        try:
            if isinstance(p, StatusUpdate):
                self.transport.submit_status(p, now)
                return
            if isinstance(p, PollRequest):
                reply = self.transport.poll(p.agent_id, p.tick, now)
            elif isinstance(p, PerceptionRequest):
                reply = self.transport.request_perception(p)
            else:
                raise TypeError(f"unexpected payload {type(p).__name__}")
        except CommsError as exc:
            logger.debug("tick %d: %s request from %s failed: %s", now, m.channel, m.agent, exc)
            self.errors.append((now, m.agent, str(exc)))
            return
        self._send(m.agent, m.channel, DOWN, reply, now)
