"""Deterministic in-memory transport with seeded fault injection.

Time advances in integer ticks; every frame takes ``latency`` ticks.  Only
publish-flow frames (PUBLISH and its acknowledgements) are subject to
faults: each send may be dropped or duplicated, and frames arriving in the
same tick may have adjacent pairs swapped.  Every frame goes through the
JSON line codec so the wire format is exercised too.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .broker import Broker
from .client import Client
from .frames import ACK_TYPES, Frame, Publish, decode, encode

FAULTABLE = frozenset(("publish",) + ACK_TYPES)


@dataclass(frozen=True)
class FaultConfig:
    drop: float = 0.0
    duplicate: float = 0.0
    reorder: float = 0.0
    latency: int = 1

    def __post_init__(self) -> None:
        for name in ("drop", "duplicate", "reorder"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.latency < 1:
            raise ValueError("latency must be >= 1 tick")


class _BrokerEnd:
    """The broker's view of one simulated connection."""

    def __init__(self, link: "SimLink") -> None:
        self.link = link

    def send(self, frame: Frame) -> None:
        self.link.net._transmit(self.link, "client", frame)

    def close(self) -> None:
        # frames already sent (a refusing CONNACK, say) still arrive first
        self.link.net._schedule_close(self.link)


class SimLink:
    """One client's connection, plus convenience wrappers that feed the
    client state machine and transmit whatever it produces."""

    def __init__(self, net: "SimNetwork", client: Client) -> None:
        self.net = net
        self.client = client
        self.broker_end = _BrokerEnd(self)
        self.open = True

    def _out(self, frames: list[Frame]) -> None:
        for f in frames:
            self.net._transmit(self, "broker", f)

    def connect(self, challenge_id: str = "", signature_b64: str = "") -> None:
        self._out([self.client.connect_frame(challenge_id, signature_b64)])

    def publish(self, topic: str, payload: bytes, qos: int = 0, retain: bool = False) -> None:
        self._out(self.client.publish(topic, payload, qos, retain, self.net.now))

    def subscribe(self, filters: list[tuple[str, int]]) -> int:
        frame = self.client.subscribe(filters)
        self._out([frame])
        return frame.packet_id

    def disconnect(self) -> None:
        """Graceful: DISCONNECT is sent, then the link closes on arrival."""
        self._out([self.client.disconnect()])

    def drop(self) -> None:
        """Abrupt loss: both ends notice immediately, in-flight frames vanish."""
        self.close()

    def close(self) -> None:
        if self.open:
            self.open = False
            self.client.lost()
            self.net.broker.connection_lost(self.broker_end)


class SimNetwork:
    def __init__(self, faults: FaultConfig | None = None, seed: int = 0) -> None:
        self.faults = faults or FaultConfig()
        self.rng = random.Random(seed)
        self.now = 0
        self.broker: Broker | None = None
        self.links: list[SimLink] = []
        self._queue: list[tuple[int, int, SimLink, str, bytes]] = []
        self._seq = 0
        self.frames_sent = 0
        self.frames_dropped = 0
        self.frames_duplicated = 0

    def clock(self) -> int:
        return self.now

    def attach(self, broker: Broker) -> Broker:
        self.broker = broker
        return broker

    def link(self, client: Client) -> SimLink:
        link = SimLink(self, client)
        self.links.append(link)
        return link

    def _transmit(self, link: SimLink, to: str, frame: Frame) -> None:
        if not link.open:
            return
        data = encode(frame)
        self.frames_sent += 1
        copies = 1
        if frame.to_wire()["type"] in FAULTABLE:
            if self.rng.random() < self.faults.drop:
                self.frames_dropped += 1
                return
            if self.rng.random() < self.faults.duplicate:
                self.frames_duplicated += 1
                copies = 2
        for _ in range(copies):
            self._seq += 1
            self._queue.append((self.now + self.faults.latency, self._seq, link, to, data))

    def _schedule_close(self, link: SimLink) -> None:
        if link.open:
            self._seq += 1
            self._queue.append((self.now + self.faults.latency, self._seq, link, "close", b""))

    def step(self) -> None:
        self.now += 1
        due = [e for e in self._queue if e[0] <= self.now]
        self._queue = [e for e in self._queue if e[0] > self.now]
        due.sort(key=lambda e: e[1])
        i = 0
        while i + 1 < len(due):
            a, b = due[i], due[i + 1]
            if (
                self.rng.random() < self.faults.reorder
                and a[4].startswith(b'{"type":"pub')
                and b[4].startswith(b'{"type":"pub')
            ):
                due[i], due[i + 1] = b, a
                i += 2
            else:
                i += 1
        for _, _, link, to, data in due:
            if not link.open:
                continue
            if to == "close":
                link.close()
                continue
            frame = decode(data)
            if to == "broker":
                self.broker.handle(link.broker_end, frame)
            else:
                link._out(link.client.handle(frame, self.now))
        self.broker.tick(self.now)
        for link in self.links:
            if link.open:
                link._out(link.client.tick(self.now))

    def settled(self) -> bool:
        """No frame in flight and nothing awaiting acknowledgement on either side."""
        if self._queue:
            return False
        if not all(l.client.idle for l in self.links if l.open):
            return False
        return all(
            s.out.idle and not s.inflow.pending for s in self.broker.sessions.values() if s.conn is not None
        )

    def run(self, until: Callable[[], bool] | None = None, max_ticks: int = 10_000) -> int:
        """Step until ``until()`` holds (default: nothing in flight and every
        client idle).  Returns ticks taken; raises if the budget runs out."""
        cond = until or self.settled
        start = self.now
        while not cond():
            if self.now - start >= max_ticks:
                raise TimeoutError(f"simulation did not settle within {max_ticks} ticks")
            self.step()
        return self.now - start


def payloads(msgs: list[Publish]) -> list[bytes]:
    return [m.payload for m in msgs]
