from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable

from ..encoding import ZERO_DIGEST
from .block import (
    Block,
    Transaction,
    ValidationFlag,
    Version,
    channel_members,
    verify_chain,
)
from .state import Backend, DocumentStore, EmbeddedKV, make_state


class LedgerError(Exception):
    pass


class ChainMismatch(LedgerError):
    pass


class OutOfOrder(LedgerError):
    pass


class NotFound(LedgerError):
    pass


class UnknownChannel(LedgerError):
    pass


class NotMember(LedgerError):
    pass


@dataclass(frozen=True)
class HistoryEntry:
    tx_id: str
    value: bytes | None  # None is a deletion tombstone
    timestamp: int
    version: Version

    @property
    def is_delete(self) -> bool:
        return self.value is None


class Channel:
    """One channel's block store, world state and history index.

    The commit path (``append_block``) is the only writer.  Readers take the
    same lock, so they only ever observe fully applied blocks.
    """

    def __init__(self, genesis: Block, backend: Backend | str = Backend.EMBEDDED_KV) -> None:
        if genesis.number != 0 or genesis.prev_hash != ZERO_DIGEST:
            raise ChainMismatch("first block must be a genesis block")
        self.channel_id = genesis.transactions[0].channel_id
        self.members = frozenset(channel_members(genesis))
        self.blocks: list[Block] = [genesis]
        self.state: EmbeddedKV | DocumentStore = make_state(backend)
        self.history: dict[str, list[HistoryEntry]] = {}
        self._tx_index: dict[str, tuple[int, int]] = {genesis.transactions[0].tx_id: (0, 0)}
        self.lock = threading.RLock()

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block], backend: Backend | str = Backend.EMBEDDED_KV) -> "Channel":
        """Rebuild a channel by replaying a committed block sequence."""
        blocks = list(blocks)
        broken = verify_chain(blocks)
        if broken is not None:
            raise ChainMismatch(f"chain broken at block {broken}")
        channel = cls(blocks[0], backend)
        for block in blocks[1:]:
            channel.append_block(block)
        return channel

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def is_member(self, org: str) -> bool:
        return org in self.members

    def require_member(self, org: str) -> None:
        if org not in self.members:
            raise NotMember(f"{org} is not a member of {self.channel_id}")

    # -- commit path ------------------------------------------------------

    def append_block(self, block: Block) -> None:
        with self.lock:
            if block.number != self.height:
                raise OutOfOrder(f"expected block {self.height}, got {block.number}")
            if block.prev_hash != self.head.hash:
                raise ChainMismatch(f"block {block.number} does not link to head")
            if len(block.validation_flags) != len(block.transactions):
                raise LedgerError("block has not been validated")
            for tx_num, (tx, flag) in enumerate(zip(block.transactions, block.validation_flags)):
                self._tx_index.setdefault(tx.tx_id, (block.number, tx_num))
                if flag is not ValidationFlag.VALID:
                    continue
                version = Version(block.number, tx_num)
                for w in tx.rw_set.writes:
                    if w.value is None:
                        self.state.delete(w.key)
                    else:
                        self.state.put(w.key, w.value, version)
                    self.history.setdefault(w.key, []).append(
                        HistoryEntry(tx.tx_id, w.value, block.timestamp, version)
                    )
            self.blocks.append(block)

    # -- queries ----------------------------------------------------------

    def state_get(self, key: str) -> tuple[bytes, Version] | None:
        with self.lock:
            return self.state.get(key)

    def range_query(self, start: str, end: str) -> list[tuple[str, bytes, Version]]:
        with self.lock:
            return self.state.range(start, end)

    def history_query(self, key: str) -> list[HistoryEntry]:
        with self.lock:
            return list(self.history.get(key, ()))

    def get_block(self, number: int) -> Block:
        with self.lock:
            if not 0 <= number < len(self.blocks):
                raise NotFound(f"block {number}")
            return self.blocks[number]

    def get_transaction(self, tx_id: str) -> tuple[int, Transaction, ValidationFlag]:
        with self.lock:
            loc = self._tx_index.get(tx_id)
            if loc is None:
                raise NotFound(f"transaction {tx_id}")
            block = self.blocks[loc[0]]
            return loc[0], block.transactions[loc[1]], block.validation_flags[loc[1]]

    def has_transaction(self, tx_id: str) -> bool:
        with self.lock:
            return tx_id in self._tx_index

    def verify(self) -> int | None:
        with self.lock:
            return verify_chain(self.blocks)

    def snapshot_items(self) -> list[tuple[str, bytes, Version]]:
        with self.lock:
            return list(self.state.items())


class ChannelRegistry:
    """Channels hosted by one peer, with membership-gated access."""

    def __init__(self) -> None:
        self._channels: dict[str, Channel] = {}

    def add(self, channel: Channel) -> None:
        self._channels[channel.channel_id] = channel

    def get(self, channel_id: str) -> Channel:
        try:
            return self._channels[channel_id]
        except KeyError:
            raise UnknownChannel(channel_id) from None

    def for_org(self, channel_id: str, org: str) -> Channel:
        channel = self.get(channel_id)
        channel.require_member(org)
        return channel

    def __contains__(self, channel_id: str) -> bool:
        return channel_id in self._channels

    def __iter__(self):
        return iter(self._channels.values())
