"""The broker core.  Transport-agnostic: a transport hands it decoded
frames together with a connection object exposing ``send(frame)`` and
``close()``, and reports dropped connections through ``connection_lost``.

All session state is mutated under one lock.  Authentication (a ledger
round trip) runs outside it so a slow commit never stalls routing.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

from ..txflow.peer import now_ms
from .auth import AuthFailure, Authenticator, NotAuthorized, Rights, may_publish, may_subscribe
from .flows import DEFAULT_RETRY_MS, DEFAULT_WINDOW, InFlow, OutFlow, QuotaExceeded
from .frames import (
    REFUSED,
    Ack,
    Connack,
    Connect,
    Disconnect,
    Frame,
    Publish,
    Subscribe,
    Suback,
)
from .topics import InvalidTopic, match, validate_filter, validate_topic

log = logging.getLogger(__name__)


class Connection(Protocol):
    def send(self, frame: Frame) -> None: ...

    def close(self) -> None: ...


class Bridge(Protocol):
    def submit(self, device_id: str, topic: str, payload: bytes, timestamp: int) -> None: ...


@dataclass
class BrokerConfig:
    window: int = DEFAULT_WINDOW
    retry_ms: int = DEFAULT_RETRY_MS
    session_expiry_ms: int | None = None  # None: persistent sessions never expire
    bridge_topics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.window < 1 or self.retry_ms < 1:
            raise ValueError("window and retry_ms must be positive")
        for f in self.bridge_topics:
            validate_filter(f)


@dataclass
class Session:
    client_id: str
    clean: bool
    out: OutFlow
    inflow: InFlow
    rights: Rights = field(default_factory=list)
    subscriptions: dict[str, int] = field(default_factory=dict)
    offline_queue: deque[Publish] = field(default_factory=deque)
    conn: Connection | None = None
    disconnected_at: int | None = None

    def max_qos_for(self, topic: str) -> int | None:
        qs = [q for f, q in self.subscriptions.items() if match(f, topic)]
        return max(qs) if qs else None


class Broker:
    def __init__(
        self,
        authenticator: Authenticator,
        clock: Callable[[], int] = now_ms,
        config: BrokerConfig | None = None,
        bridge: Bridge | None = None,
    ) -> None:
        self.auth = authenticator
        self.clock = clock
        self.config = config or BrokerConfig()
        self.bridge = bridge
        self.sessions: dict[str, Session] = {}
        self.retained: dict[str, Publish] = {}
        self._conns: dict[int, str] = {}
        self._lock = threading.RLock()

    # -- connection lifecycle ---------------------------------------------

    def handle(self, conn: Connection, frame: Frame) -> None:
        if isinstance(frame, Connect):
            self._connect(conn, frame)
            return
        with self._lock:
            cid = self._conns.get(id(conn))
            if cid is None:
                log.warning("frame %s before CONNECT; closing", type(frame).__name__)
                conn.close()
                return
            session = self.sessions[cid]
            now = self.clock()
            if isinstance(frame, Publish):
                try:
                    self.publish(cid, frame)
                except (NotAuthorized, InvalidTopic, QuotaExceeded) as exc:
                    log.warning("dropping %s: %s", cid, exc)
                    self._detach(conn)
                    conn.close()
            elif isinstance(frame, Ack):
                if frame.type == "pubrel":
                    self._send(session, session.inflow.on_pubrel(frame.packet_id))
                else:
                    self._send(session, session.out.on_ack(frame, now))
            elif isinstance(frame, Subscribe):
                self._subscribe(session, frame)
            elif isinstance(frame, Disconnect):
                self._detach(conn)
                conn.close()
            else:
                log.warning("unexpected %s from %s; closing", type(frame).__name__, cid)
                self._detach(conn)
                conn.close()

    def _connect(self, conn: Connection, frame: Connect) -> None:
        with self._lock:
            if id(conn) in self._conns:
                self._detach(conn)
                conn.close()
                return
        try:
            rights = self.auth.authenticate(frame.client_id, frame.challenge_id, frame.signature_b64)
        except AuthFailure as exc:
            log.info("refused %s: %s", frame.client_id, exc)
            conn.send(Connack(False, exc.code))
            conn.close()
            return
        with self._lock:
            now = self.clock()
            old = self.sessions.get(frame.client_id)
            if old is not None and old.conn is not None:
                # session takeover: the newest connection wins
                stale = old.conn
                self._conns.pop(id(stale), None)
                old.conn = None
                stale.close()
            present = old is not None and not frame.clean
            if present:
                session = old
            else:
                session = Session(
                    frame.client_id,
                    frame.clean,
                    OutFlow(self.config.window, self.config.retry_ms),
                    InFlow(self.config.window),
                )
                self.sessions[frame.client_id] = session
            session.clean = frame.clean
            session.rights = rights
            session.conn = conn
            session.disconnected_at = None
            self._conns[id(conn)] = frame.client_id
            if present:
                self._reauthorize(session)
            conn.send(Connack(present, "ok"))
            self._send(session, session.out.retransmit(now, force=True))
            while session.offline_queue:
                self._send(session, session.out.offer(session.offline_queue.popleft(), now))

    def _reauthorize(self, s: Session) -> None:
        """Rights may have shrunk since the session was stored."""
        s.subscriptions = {f: q for f, q in s.subscriptions.items() if may_subscribe(s.rights, f)}

        def ok(m: Publish) -> bool:
            return s.max_qos_for(m.topic) is not None

        s.offline_queue = deque(m for m in s.offline_queue if ok(m))
        s.out.waiting = deque(m for m in s.out.waiting if ok(m))
        for pid in [p for p, e in s.out.inflight.items() if not ok(e.message)]:
            del s.out.inflight[pid]

    def _detach(self, conn: Connection) -> None:
        cid = self._conns.pop(id(conn), None)
        if cid is None:
            return
        s = self.sessions.get(cid)
        if s is None or s.conn is not conn:
            return
        s.conn = None
        s.disconnected_at = self.clock()
        if s.clean:
            del self.sessions[cid]

    def connection_lost(self, conn: Connection) -> None:
        with self._lock:
            self._detach(conn)

    def session_expire(self, client_id: str, now: int | None = None) -> bool:
        """Drop a disconnected session; True if one was removed."""
        with self._lock:
            s = self.sessions.get(client_id)
            if s is None or s.conn is not None:
                return False
            del self.sessions[client_id]
            return True

    def tick(self, now: int | None = None) -> None:
        """Retransmit overdue frames and expire idle persistent sessions."""
        with self._lock:
            now = self.clock() if now is None else now
            for s in list(self.sessions.values()):
                if s.conn is not None:
                    self._send(s, s.out.retransmit(now))
                elif (
                    self.config.session_expiry_ms is not None
                    and s.disconnected_at is not None
                    and now - s.disconnected_at >= self.config.session_expiry_ms
                ):
                    del self.sessions[s.client_id]

    # -- routing -----------------------------------------------------------

    def _send(self, s: Session, frames: list[Frame]) -> None:
        if s.conn is not None:
            for f in frames:
                s.conn.send(f)

    def _deliver(self, s: Session, msg: Publish) -> None:
        if s.conn is None:
            s.offline_queue.append(msg)
        else:
            self._send(s, s.out.offer(msg, self.clock()))

    def publish(self, client_id: str, msg: Publish) -> None:
        """Accept ``msg`` from a connected session and route it."""
        with self._lock:
            s = self.sessions[client_id]
            validate_topic(msg.topic)
            if not may_publish(s.rights, msg.topic):
                raise NotAuthorized(f"{client_id} may not publish to {msg.topic}")
            deliver, replies = s.inflow.on_publish(msg)
            self._send(s, replies)
            if deliver:
                self._route(client_id, msg)

    def _route(self, publisher: str, msg: Publish) -> None:
        if msg.retain:
            if msg.payload:
                self.retained[msg.topic] = Publish(msg.topic, msg.payload, msg.qos, retain=True)
            else:
                self.retained.pop(msg.topic, None)
        for s in self.sessions.values():
            q = s.max_qos_for(msg.topic)
            if q is not None:
                self._deliver(s, Publish(msg.topic, msg.payload, min(q, msg.qos)))
        if self.bridge is not None and any(match(f, msg.topic) for f in self.config.bridge_topics):
            self.bridge.submit(publisher, msg.topic, msg.payload, self.clock())

    def _subscribe(self, s: Session, frame: Subscribe) -> None:
        granted = []
        for f, q in frame.filters:
            try:
                validate_filter(f)
            except InvalidTopic:
                granted.append(REFUSED)
                continue
            if may_subscribe(s.rights, f):
                s.subscriptions[f] = q
                granted.append(q)
            else:
                granted.append(REFUSED)
        self._send(s, [Suback(frame.packet_id, tuple(granted))])
        for (f, q), g in zip(frame.filters, granted):
            if g == REFUSED:
                continue
            for topic, m in sorted(self.retained.items()):
                if match(f, topic):
                    self._deliver(s, Publish(topic, m.payload, min(q, m.qos), retain=True))
