"""Solo ordering service.

Transactions queue per channel in arrival order.  A block is cut when the
queue reaches ``max_block_txs`` or when ``batch_timeout_ms`` has elapsed
since the oldest pending transaction arrived.  Ordering does no validation.

Without ``start()`` the orderer is fully synchronous: a cut delivers the
block to subscribers on the calling thread and timeouts only fire through
``tick()``.  After ``start()`` a background thread handles timeouts and
delivery; after ``stop()`` submissions are refused.
"""

from __future__ import annotations

import enum
import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Callable

from ..ledger.block import Block, Transaction
from .peer import now_ms

log = logging.getLogger(__name__)


class OrderingMode(str, enum.Enum):
    SOLO = "solo"


class OrdererUnavailable(Exception):
    pass


@dataclass(frozen=True)
class OrdererConfig:
    mode: OrderingMode = OrderingMode.SOLO
    max_block_txs: int = 10
    batch_timeout_ms: int = 500

    def __post_init__(self) -> None:
        if self.max_block_txs < 1:
            raise ValueError("max_block_txs must be >= 1")
        if self.batch_timeout_ms < 0:
            raise ValueError("batch_timeout_ms must be >= 0")
        object.__setattr__(self, "mode", OrderingMode(self.mode))


@dataclass
class _ChannelQueue:
    height: int
    prev_hash: str
    pending: list[Transaction] = field(default_factory=list)
    first_at: int | None = None


class SoloOrderer:
    def __init__(self, config: OrdererConfig | None = None, clock: Callable[[], int] = now_ms) -> None:
        self.config = config or OrdererConfig()
        self.clock = clock
        self._queues: dict[str, _ChannelQueue] = {}
        self._subscribers: list[Callable[[Block], object]] = []
        self._lock = threading.Lock()
        self._outbox: queue.Queue[Block | None] = queue.Queue()
        self._state = "manual"
        self._threads: list[threading.Thread] = []
        self._halt = threading.Event()

    def join(self, genesis: Block) -> None:
        channel_id = genesis.transactions[0].channel_id
        self._queues[channel_id] = _ChannelQueue(height=1, prev_hash=genesis.hash)

    def resume(self, channel_id: str, head: Block) -> None:
        """Continue a channel whose committed head is ``head``."""
        self._queues[channel_id] = _ChannelQueue(height=head.number + 1, prev_hash=head.hash)

    def subscribe(self, deliver: Callable[[Block], object]) -> None:
        self._subscribers.append(deliver)

    @property
    def running(self) -> bool:
        return self._state == "running"

    def submit(self, tx: Transaction) -> None:
        if self._state == "stopped":
            raise OrdererUnavailable("orderer is stopped")
        if not tx.endorsements:
            raise ValueError("transaction carries no endorsements")
        with self._lock:
            q = self._queues.get(tx.channel_id)
            if q is None:
                raise OrdererUnavailable(f"orderer does not serve channel {tx.channel_id}")
            if not q.pending:
                q.first_at = self.clock()
            q.pending.append(tx)
            block = self._cut_locked(q) if len(q.pending) >= self.config.max_block_txs else None
        if block is not None:
            self._emit(block)

    def cut(self, channel_id: str) -> Block | None:
        """Force a block out of whatever is pending."""
        with self._lock:
            block = self._cut_locked(self._queues[channel_id])
        if block is not None:
            self._emit(block)
        return block

    def tick(self) -> list[Block]:
        """Cut every channel whose oldest pending tx has timed out."""
        now = self.clock()
        cut = []
        with self._lock:
            for q in self._queues.values():
                if q.pending and now - q.first_at >= self.config.batch_timeout_ms:
                    cut.append(self._cut_locked(q))
        for block in cut:
            self._emit(block)
        return cut

    def _cut_locked(self, q: _ChannelQueue) -> Block | None:
        if not q.pending:
            return None
        txs = tuple(q.pending[: self.config.max_block_txs])
        del q.pending[: self.config.max_block_txs]
        q.first_at = self.clock() if q.pending else None
        block = Block.build(q.height, q.prev_hash, self.clock(), txs)
        q.height += 1
        q.prev_hash = block.hash
        if self._state == "running":
            # enqueue under the lock so delivery order matches cut order
            self._outbox.put(block)
        return block

    def _emit(self, block: Block) -> None:
        if self._state == "running":
            return
        self._deliver(block)

    def _deliver(self, block: Block) -> None:
        for deliver in self._subscribers:
            try:
                deliver(block)
            except Exception:
                log.exception("delivery of block %d failed", block.number)

    # -- threaded mode ----------------------------------------------------

    def start(self) -> None:
        if self._state == "running":
            return
        self._halt.clear()
        self._state = "running"
        self._threads = [
            threading.Thread(target=self._timer_loop, name="orderer-timer", daemon=True),
            threading.Thread(target=self._delivery_loop, name="orderer-deliver", daemon=True),
        ]
        for t in self._threads:
            t.start()

    def stop(self) -> None:
        if self._state == "running":
            self._halt.set()
            self._outbox.put(None)
            for t in self._threads:
                t.join(timeout=5)
        self._state = "stopped"

    def _timer_loop(self) -> None:
        poll = max(0.001, min(0.01, self.config.batch_timeout_ms / 10_000))
        while not self._halt.wait(poll):
            self.tick()

    def _delivery_loop(self) -> None:
        while True:
            block = self._outbox.get()
            if block is None:
                return
            self._deliver(block)
