"""Chaincode runtime shim: the stub a contract sees during endorsement.

Reads go to the committed world state and are recorded with the version
observed; writes are buffered.  Nothing touches the world state until the
transaction is validated and committed.
"""

from __future__ import annotations

from typing import Protocol

from ..identity import Certificate
from ..ledger.block import (
    KVRead,
    KVWrite,
    RangeRead,
    ReadWriteSet,
    Transaction,
    ValidationFlag,
    Version,
)
from ..ledger.channel import Channel, HistoryEntry, NotFound


class ChaincodeError(Exception):
    """A contract rejected the invocation.  ``code`` is a short
    machine-readable reason (``Unauthorized``, ``NotFound``, ...)."""

    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class Contract(Protocol):
    def invoke(self, stub: "TxStub", function: str, args: list[bytes]) -> bytes: ...


class TxStub:
    def __init__(self, channel: Channel, tx_id: str, creator: Certificate) -> None:
        self.channel = channel
        self.tx_id = tx_id
        self.creator = creator
        self._reads: dict[str, Version | None] = {}
        self._writes: dict[str, bytes | None] = {}
        self._range_reads: list[RangeRead] = []

    @property
    def ledger_time(self) -> int:
        """Timestamp (ms) of the newest committed block: a clock every
        endorser at the same height agrees on."""
        return self.channel.head.timestamp

    def get_state(self, key: str) -> bytes | None:
        entry = self.channel.state_get(key)
        if key not in self._reads:
            self._reads[key] = entry[1] if entry else None
        return entry[0] if entry else None

    def put_state(self, key: str, value: bytes) -> None:
        if not isinstance(value, bytes):
            raise TypeError("state values are bytes")
        self._writes[key] = value

    def del_state(self, key: str) -> None:
        self._writes[key] = None

    def get_state_range(self, start: str, end: str) -> list[tuple[str, bytes]]:
        rows = self.channel.range_query(start, end)
        self._range_reads.append(RangeRead(start, end, tuple((k, v) for k, _, v in rows)))
        return [(k, value) for k, value, _ in rows]

    def get_history(self, key: str) -> list[HistoryEntry]:
        return self.channel.history_query(key)

    def get_transaction(self, tx_id: str) -> Transaction | None:
        """A committed, valid transaction by id, or None."""
        try:
            _, tx, flag = self.channel.get_transaction(tx_id)
        except NotFound:
            return None
        return tx if flag is ValidationFlag.VALID else None

    def rw_set(self) -> ReadWriteSet:
        return ReadWriteSet(
            reads=tuple(KVRead(k, v) for k, v in sorted(self._reads.items())),
            writes=tuple(KVWrite(k, v) for k, v in sorted(self._writes.items())),
            range_reads=tuple(self._range_reads),
        )


def simulate(
    contract: Contract,
    channel: Channel,
    tx_id: str,
    creator: Certificate,
    function: str,
    args: list[bytes],
) -> tuple[bytes, ReadWriteSet]:
    """Run one invocation against a consistent view of committed state."""
    with channel.lock:
        stub = TxStub(channel, tx_id, creator)
        payload = contract.invoke(stub, function, list(args))
        return payload, stub.rw_set()
