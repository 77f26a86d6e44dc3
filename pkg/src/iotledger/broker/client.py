"""Client-side protocol state.  Like the broker core it does no I/O; the
sim and TCP transports drive it."""

from __future__ import annotations

from typing import Callable

from .flows import DEFAULT_RETRY_MS, DEFAULT_WINDOW, InFlow, OutFlow
from .frames import MAX_PACKET_ID, Ack, Connack, Connect, Disconnect, Frame, Publish, Subscribe, Suback
from .topics import validate_filter, validate_topic


class Client:
    def __init__(
        self,
        client_id: str,
        clean: bool = True,
        window: int = DEFAULT_WINDOW,
        retry_ms: int = DEFAULT_RETRY_MS,
        on_message: Callable[[Publish], None] | None = None,
    ) -> None:
        self.client_id = client_id
        self.clean = clean
        self.window = window
        self.retry_ms = retry_ms
        self.on_message = on_message
        self.out = OutFlow(window, retry_ms)
        self.inflow = InFlow(window)
        self.connected = False
        self.session_present: bool | None = None
        self.refused: str | None = None
        self.received: list[Publish] = []
        self.subacks: dict[int, tuple[int, ...]] = {}
        self._sub_pid = 0

    def connect_frame(self, challenge_id: str, signature_b64: str) -> Connect:
        if self.clean:
            self.out = OutFlow(self.window, self.retry_ms)
            self.inflow = InFlow(self.window)
        self.refused = None
        return Connect(self.client_id, self.clean, challenge_id, signature_b64)

    def publish(self, topic: str, payload: bytes, qos: int = 0, retain: bool = False, now: int = 0) -> list[Frame]:
        validate_topic(topic)
        if qos not in (0, 1, 2):
            raise ValueError("qos must be 0, 1 or 2")
        frames = self.out.offer(Publish(topic, bytes(payload), qos, retain), now)
        # while offline, QoS 1/2 stay in flight and go out on reconnect
        return frames if self.connected else []

    def subscribe(self, filters: list[tuple[str, int]]) -> Subscribe:
        for f, _ in filters:
            validate_filter(f)
        self._sub_pid = self._sub_pid % MAX_PACKET_ID + 1
        return Subscribe(self._sub_pid, tuple(filters))

    def disconnect(self) -> Disconnect:
        self.connected = False
        return Disconnect()

    def lost(self) -> None:
        self.connected = False

    def handle(self, frame: Frame, now: int = 0) -> list[Frame]:
        if isinstance(frame, Connack):
            self.session_present = frame.session_present
            if frame.code != "ok":
                self.refused = frame.code
                self.connected = False
                return []
            self.connected = True
            return self.out.retransmit(now, force=True) + self.out.pump(now)
        if isinstance(frame, Publish):
            deliver, replies = self.inflow.on_publish(frame)
            if deliver:
                self.received.append(frame)
                if self.on_message is not None:
                    self.on_message(frame)
            return replies
        if isinstance(frame, Ack):
            if frame.type == "pubrel":
                return self.inflow.on_pubrel(frame.packet_id)
            return self.out.on_ack(frame, now)
        if isinstance(frame, Suback):
            self.subacks[frame.packet_id] = frame.granted
        return []

    def tick(self, now: int) -> list[Frame]:
        return self.out.retransmit(now) if self.connected else []

    @property
    def idle(self) -> bool:
        """Nothing left to send or awaiting acknowledgement."""
        return self.out.idle and not self.inflow.pending
