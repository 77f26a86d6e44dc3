"""QoS state machines shared by the broker (towards subscribers) and the
client (towards the broker).  No I/O: every method returns the frames the
caller must send.

Sender side, per message:

    QoS 1  PUBLISH -> await PUBACK -> done
    QoS 2  PUBLISH -> await PUBREC -> PUBREL -> await PUBCOMP -> done

Unacknowledged frames are resent with ``dup`` set after ``retry_ms``.  At
most one QoS 2 message awaits PUBREC at a time; the receiver delivers on
first PUBLISH, so this gate keeps QoS 2 delivery in send order even when
the link reorders frames.
"""

from __future__ import annotations

import dataclasses
from collections import OrderedDict, deque
from dataclasses import dataclass

from .frames import MAX_PACKET_ID, Ack, Frame, Publish

DEFAULT_WINDOW = 32
DEFAULT_RETRY_MS = 5
RECENT_PIDS = 1024


class QuotaExceeded(Exception):
    pass


@dataclass
class Inflight:
    message: Publish
    state: str  # "puback" | "pubrec" | "pubcomp": the ack we are waiting for
    last_sent: int


class OutFlow:
    def __init__(self, window: int = DEFAULT_WINDOW, retry_ms: int = DEFAULT_RETRY_MS) -> None:
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.retry_ms = retry_ms
        self.inflight: OrderedDict[int, Inflight] = OrderedDict()
        self.waiting: deque[Publish] = deque()
        self._next_pid = 1

    def __len__(self) -> int:
        return len(self.inflight) + len(self.waiting)

    @property
    def idle(self) -> bool:
        return not self.inflight and not self.waiting

    def _alloc_pid(self) -> int:
        while True:
            pid = self._next_pid
            self._next_pid = pid % MAX_PACKET_ID + 1
            if pid not in self.inflight:
                return pid

    def _qos2_gated(self) -> bool:
        return any(e.state == "pubrec" for e in self.inflight.values())

    def offer(self, message: Publish, now: int) -> list[Frame]:
        """Queue ``message`` (its packet_id and dup are ignored).  QoS 0
        goes straight out unless earlier messages are still waiting, so
        first transmissions keep offer order across QoS levels."""
        message = dataclasses.replace(message, packet_id=None, dup=False)
        if message.qos == 0 and not self.waiting:
            return [message]
        self.waiting.append(message)
        return self.pump(now)

    def pump(self, now: int) -> list[Frame]:
        out: list[Frame] = []
        while self.waiting:
            head = self.waiting[0]
            if head.qos == 0:
                out.append(self.waiting.popleft())
                continue
            if len(self.inflight) >= self.window or (head.qos == 2 and self._qos2_gated()):
                break
            self.waiting.popleft()
            msg = dataclasses.replace(head, packet_id=self._alloc_pid())
            self.inflight[msg.packet_id] = Inflight(msg, "puback" if msg.qos == 1 else "pubrec", now)
            out.append(msg)
        return out

    def on_ack(self, ack: Ack, now: int) -> list[Frame]:
        entry = self.inflight.get(ack.packet_id)
        if entry is None:
            return []
        if ack.type == "puback" and entry.state == "puback":
            del self.inflight[ack.packet_id]
            return self.pump(now)
        if ack.type == "pubrec" and entry.state in ("pubrec", "pubcomp"):
            entry.state = "pubcomp"
            entry.last_sent = now
            return [Ack("pubrel", ack.packet_id)] + self.pump(now)
        if ack.type == "pubcomp" and entry.state == "pubcomp":
            del self.inflight[ack.packet_id]
            return self.pump(now)
        return []

    def _resend(self, entry: Inflight, now: int) -> Frame:
        entry.last_sent = now
        if entry.state == "pubcomp":
            return Ack("pubrel", entry.message.packet_id)
        return dataclasses.replace(entry.message, dup=True)

    def retransmit(self, now: int, force: bool = False) -> list[Frame]:
        """Resend overdue frames; ``force`` resends everything (reconnect)."""
        return [
            self._resend(e, now)
            for e in self.inflight.values()
            if force or now - e.last_sent >= self.retry_ms
        ]


class InFlow:
    """Receiver side: acknowledges and suppresses QoS 2 duplicates."""

    def __init__(self, window: int = DEFAULT_WINDOW) -> None:
        self.window = window
        self.pending: set[int] = set()  # QoS 2 received, PUBREL not yet seen
        self._recent: OrderedDict[int, None] = OrderedDict()

    def on_publish(self, msg: Publish) -> tuple[bool, list[Frame]]:
        """Returns (deliver to application?, frames to send back)."""
        if msg.qos == 0:
            return True, []
        if msg.qos == 1:
            return True, [Ack("puback", msg.packet_id)]
        pid = msg.packet_id
        if pid in self.pending or (msg.dup and pid in self._recent):
            return False, [Ack("pubrec", pid)]
        if len(self.pending) >= self.window:
            raise QuotaExceeded(f"{len(self.pending)} QoS 2 messages already in flight")
        self.pending.add(pid)
        self._recent.pop(pid, None)
        return True, [Ack("pubrec", pid)]

    def on_pubrel(self, pid: int) -> list[Frame]:
        if pid in self.pending:
            self.pending.discard(pid)
            self._recent[pid] = None
            if len(self._recent) > RECENT_PIDS:
                self._recent.popitem(last=False)
        return [Ack("pubcomp", pid)]
