"""TCP transport: one JSON frame per line over a plain socket."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time

from .auth import AuthFailure
from .broker import Broker
from .client import Client
from .frames import Frame, FrameError, Publish, decode, encode

log = logging.getLogger(__name__)


class _SocketConn:
    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self._lock = threading.Lock()
        self.closed = False

    def send(self, frame: Frame) -> None:
        data = encode(frame)
        with self._lock:
            if self.closed:
                return
            try:
                self.sock.sendall(data)
            except OSError:
                self.closed = True

    def close(self) -> None:
        with self._lock:
            if self.closed:
                return
            self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        broker: Broker = self.server.broker  # type: ignore[attr-defined]
        conn = _SocketConn(self.request)
        try:
            for line in self.rfile:
                if conn.closed:
                    break
                try:
                    frame = decode(line)
                except FrameError as exc:
                    log.warning("malformed frame from %s: %s", self.client_address, exc)
                    break
                broker.handle(conn, frame)
        except OSError:
            pass
        finally:
            broker.connection_lost(conn)
            conn.close()


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class TcpBrokerServer:
    """Serves ``broker`` on ``host:port`` (port 0 picks a free one)."""

    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0, tick_s: float = 0.2) -> None:
        self.broker = broker
        self.server = _Server((host, port), _Handler)
        self.server.broker = broker  # type: ignore[attr-defined]
        self.tick_s = tick_s
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self.server.server_address[:2]

    def _ticker(self) -> None:
        while not self._stop.wait(self.tick_s):
            self.broker.tick()

    def start(self) -> "TcpBrokerServer":
        for target in (self.server.serve_forever, self._ticker):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self) -> "TcpBrokerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def _now_ms() -> int:
    return int(time.monotonic() * 1000)


class TcpClient:
    """Blocking client wrapper around the protocol state machine."""

    def __init__(
        self,
        client_id: str,
        address: tuple[str, int],
        clean: bool = True,
        retry_ms: int = 1000,
    ) -> None:
        self.core = Client(client_id, clean, retry_ms=retry_ms)
        self.address = address
        self._cond = threading.Condition()
        self._sock: socket.socket | None = None
        self._conn: _SocketConn | None = None
        self._stop = threading.Event()

    @property
    def received(self) -> list[Publish]:
        with self._cond:
            return list(self.core.received)

    def _send(self, frames: list[Frame]) -> None:
        if self._conn is not None:
            for f in frames:
                self._conn.send(f)

    def _reader(self, sock: socket.socket) -> None:
        try:
            for line in sock.makefile("rb"):
                frame = decode(line)
                with self._cond:
                    self._send(self.core.handle(frame, _now_ms()))
                    self._cond.notify_all()
        except (OSError, FrameError):
            pass
        finally:
            with self._cond:
                self.core.lost()
                self._cond.notify_all()

    def _ticker(self) -> None:
        while not self._stop.wait(self.core.retry_ms / 2000):
            with self._cond:
                self._send(self.core.tick(_now_ms()))

    def connect(self, challenge_id: str, signature_b64: str, timeout: float = 30.0) -> bool:
        """Returns session-present; raises AuthFailure if refused."""
        sock = socket.create_connection(self.address, timeout=timeout)
        sock.settimeout(None)
        self._sock, self._conn = sock, _SocketConn(sock)
        threading.Thread(target=self._reader, args=(sock,), daemon=True).start()
        threading.Thread(target=self._ticker, daemon=True).start()
        with self._cond:
            self.core.session_present = None
            self._send([self.core.connect_frame(challenge_id, signature_b64)])
            ok = self._cond.wait_for(
                lambda: self.core.connected or self.core.refused is not None, timeout
            )
            if self.core.refused is not None:
                raise AuthFailure(self.core.refused)
            if not ok:
                raise TimeoutError("no CONNACK")
            return bool(self.core.session_present)

    def publish(self, topic: str, payload: bytes, qos: int = 0, retain: bool = False) -> None:
        with self._cond:
            self._send(self.core.publish(topic, payload, qos, retain, _now_ms()))

    def subscribe(self, filters: list[tuple[str, int]], timeout: float = 10.0) -> tuple[int, ...]:
        with self._cond:
            frame = self.core.subscribe(filters)
            self._send([frame])
            if not self._cond.wait_for(lambda: frame.packet_id in self.core.subacks, timeout):
                raise TimeoutError("no SUBACK")
            return self.core.subacks.pop(frame.packet_id)

    def wait_for(self, count: int, timeout: float = 10.0) -> list[Publish]:
        with self._cond:
            self._cond.wait_for(lambda: len(self.core.received) >= count, timeout)
            return list(self.core.received)

    def flush(self, timeout: float = 10.0) -> bool:
        """Wait until every outgoing QoS 1/2 message is acknowledged."""
        with self._cond:
            return self._cond.wait_for(lambda: self.core.out.idle, timeout)

    def disconnect(self) -> None:
        self._stop.set()
        with self._cond:
            self._send([self.core.disconnect()])
        if self._conn is not None:
            self._conn.close()
