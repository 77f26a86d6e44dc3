"""Ledger records: versions, read/write sets, transactions and blocks.

Every record round-trips through ``to_dict``/``from_dict``; the canonical
JSON of ``to_dict`` is what gets hashed and what is written to block files.
Digests are lowercase hex strings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import total_ordering
from typing import Any

from ..encoding import (
    ZERO_DIGEST,
    as_bytes,
    as_int,
    check_hex_digest,
    digest_of,
)
from ..identity import Certificate


class ValidationFlag(str, enum.Enum):
    VALID = "Valid"
    MVCC_CONFLICT = "MvccConflict"
    POLICY_FAILURE = "PolicyFailure"
    BAD_SIGNATURE = "BadSignature"


@total_ordering
@dataclass(frozen=True)
class Version:
    block_num: int
    tx_num: int

    def __lt__(self, other: "Version") -> bool:
        return (self.block_num, self.tx_num) < (other.block_num, other.tx_num)

    def to_dict(self) -> dict[str, int]:
        return {"block_num": self.block_num, "tx_num": self.tx_num}

    @classmethod
    def from_dict(cls, d: dict[str, Any] | None) -> "Version | None":
        if d is None:
            return None
        _exact_keys(d, {"block_num", "tx_num"})
        return cls(as_int(d["block_num"]), as_int(d["tx_num"]))


def _exact_keys(d: Any, keys: set[str]) -> None:
    if not isinstance(d, dict) or set(d) != keys:
        got = sorted(d) if isinstance(d, dict) else type(d).__name__
        raise ValueError(f"expected keys {sorted(keys)}, got {got}")


@dataclass(frozen=True)
class KVRead:
    key: str
    version: Version | None


@dataclass(frozen=True)
class KVWrite:
    key: str
    value: bytes | None  # None marks a delete

    @property
    def is_delete(self) -> bool:
        return self.value is None


@dataclass(frozen=True)
class RangeRead:
    start: str
    end: str
    observed: tuple[tuple[str, Version], ...]


@dataclass(frozen=True)
class ReadWriteSet:
    reads: tuple[KVRead, ...] = ()
    writes: tuple[KVWrite, ...] = ()
    range_reads: tuple[RangeRead, ...] = ()

    def __post_init__(self) -> None:
        if len({r.key for r in self.reads}) != len(self.reads):
            raise ValueError("duplicate key in read set")
        if len({w.key for w in self.writes}) != len(self.writes):
            raise ValueError("duplicate key in write set")

    def to_dict(self) -> dict[str, Any]:
        return {
            "reads": [
                {"key": r.key, "version": r.version.to_dict() if r.version else None}
                for r in self.reads
            ],
            "writes": [
                {"key": w.key, "value": w.value, "is_delete": w.is_delete} for w in self.writes
            ],
            "range_reads": [
                {
                    "start": rr.start,
                    "end": rr.end,
                    "observed": [{"key": k, "version": v.to_dict()} for k, v in rr.observed],
                }
                for rr in self.range_reads
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ReadWriteSet":
        _exact_keys(d, {"reads", "writes", "range_reads"})
        reads = []
        for r in d["reads"]:
            _exact_keys(r, {"key", "version"})
            reads.append(KVRead(r["key"], Version.from_dict(r["version"])))
        writes = []
        for w in d["writes"]:
            _exact_keys(w, {"key", "value", "is_delete"})
            if w["is_delete"] is not (w["value"] is None):
                raise ValueError("is_delete disagrees with value")
            writes.append(KVWrite(w["key"], None if w["value"] is None else as_bytes(w["value"])))
        range_reads = []
        for rr in d["range_reads"]:
            _exact_keys(rr, {"start", "end", "observed"})
            observed = []
            for o in rr["observed"]:
                _exact_keys(o, {"key", "version"})
                observed.append((o["key"], Version.from_dict(o["version"])))
            range_reads.append(RangeRead(rr["start"], rr["end"], tuple(observed)))
        return cls(tuple(reads), tuple(writes), tuple(range_reads))

    def digest(self) -> str:
        return digest_of(self.to_dict())


@dataclass(frozen=True)
class Endorsement:
    endorser: Certificate
    rw_set_hash: str
    response_payload: bytes
    signature: bytes

    @staticmethod
    def signed_bytes(tx_id: str, rw_set_hash: str, response_payload: bytes) -> bytes:
        return tx_id.encode("ascii") + bytes.fromhex(rw_set_hash) + response_payload

    def to_dict(self) -> dict[str, Any]:
        return {
            "endorser": self.endorser.to_dict(),
            "rw_set_hash": self.rw_set_hash,
            "response_payload": self.response_payload,
            "signature": self.signature,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Endorsement":
        _exact_keys(d, {"endorser", "rw_set_hash", "response_payload", "signature"})
        return cls(
            endorser=_cert(d["endorser"]),
            rw_set_hash=check_hex_digest(d["rw_set_hash"]),
            response_payload=as_bytes(d["response_payload"]),
            signature=as_bytes(d["signature"]),
        )


def _cert(d: dict[str, Any]) -> Certificate:
    _exact_keys(
        d, {"subject", "org", "role", "public_key", "issuer", "serial", "not_after", "signature"}
    )
    return Certificate.from_dict(d)


def proposal_fields(
    channel_id: str,
    chaincode_id: str,
    function: str,
    args: tuple[bytes, ...] | list[bytes],
    creator: Certificate | None,
    nonce: bytes,
) -> dict[str, Any]:
    return {
        "channel_id": channel_id,
        "chaincode_id": chaincode_id,
        "function": function,
        "args": list(args),
        "creator": creator.to_dict() if creator is not None else None,
        "nonce": nonce,
    }


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    channel_id: str
    chaincode_id: str
    function: str
    args: tuple[bytes, ...]
    creator: Certificate | None
    nonce: bytes
    rw_set: ReadWriteSet
    endorsements: tuple[Endorsement, ...]
    client_signature: bytes

    def proposal_dict(self) -> dict[str, Any]:
        return proposal_fields(
            self.channel_id, self.chaincode_id, self.function, self.args, self.creator, self.nonce
        )

    def computed_tx_id(self) -> str:
        return digest_of(self.proposal_dict())

    def to_dict(self) -> dict[str, Any]:
        return {
            "tx_id": self.tx_id,
            **self.proposal_dict(),
            "rw_set": self.rw_set.to_dict(),
            "endorsements": [e.to_dict() for e in self.endorsements],
            "client_signature": self.client_signature,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transaction":
        _exact_keys(
            d,
            {
                "tx_id", "channel_id", "chaincode_id", "function", "args", "creator",
                "nonce", "rw_set", "endorsements", "client_signature",
            },
        )
        for name in ("channel_id", "chaincode_id", "function"):
            if not isinstance(d[name], str):
                raise ValueError(f"{name} must be a string")
        return cls(
            tx_id=check_hex_digest(d["tx_id"]),
            channel_id=d["channel_id"],
            chaincode_id=d["chaincode_id"],
            function=d["function"],
            args=tuple(as_bytes(a) for a in d["args"]),
            creator=None if d["creator"] is None else _cert(d["creator"]),
            nonce=as_bytes(d["nonce"]),
            rw_set=ReadWriteSet.from_dict(d["rw_set"]),
            endorsements=tuple(Endorsement.from_dict(e) for e in d["endorsements"]),
            client_signature=as_bytes(d["client_signature"]),
        )


CONFIG_CHAINCODE = "_config"


def data_hash(transactions: tuple[Transaction, ...] | list[Transaction]) -> str:
    return digest_of([tx.to_dict() for tx in transactions])


def header_hash(number: int, prev_hash: str, data_hash_: str, timestamp: int) -> str:
    return digest_of(
        {"number": number, "prev_hash": prev_hash, "data_hash": data_hash_, "timestamp": timestamp}
    )


def commit_hash(prev_commit_hash: str, block_hash: str, flags: tuple[ValidationFlag, ...]) -> str:
    return digest_of(
        {"prev_commit_hash": prev_commit_hash, "hash": block_hash, "flags": [f.value for f in flags]}
    )


@dataclass(frozen=True)
class Block:
    """A block as cut by the orderer (``validation_flags`` empty) or as
    committed by a peer (flags set and ``commit_hash`` chained over them)."""

    number: int
    prev_hash: str
    data_hash: str
    timestamp: int
    transactions: tuple[Transaction, ...]
    hash: str
    validation_flags: tuple[ValidationFlag, ...] = ()
    commit_hash: str = ""

    @classmethod
    def build(
        cls, number: int, prev_hash: str, timestamp: int, transactions: tuple[Transaction, ...]
    ) -> "Block":
        dh = data_hash(transactions)
        return cls(
            number=number,
            prev_hash=prev_hash,
            data_hash=dh,
            timestamp=timestamp,
            transactions=tuple(transactions),
            hash=header_hash(number, prev_hash, dh, timestamp),
        )

    def header(self) -> dict[str, Any]:
        return {
            "number": self.number,
            "prev_hash": self.prev_hash,
            "data_hash": self.data_hash,
            "timestamp": self.timestamp,
        }

    def with_flags(self, flags: tuple[ValidationFlag, ...], prev_commit_hash: str) -> "Block":
        if len(flags) != len(self.transactions):
            raise ValueError("one validation flag per transaction required")
        return Block(
            number=self.number,
            prev_hash=self.prev_hash,
            data_hash=self.data_hash,
            timestamp=self.timestamp,
            transactions=self.transactions,
            hash=self.hash,
            validation_flags=tuple(flags),
            commit_hash=commit_hash(prev_commit_hash, self.hash, tuple(flags)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.header(),
            "hash": self.hash,
            "transactions": [tx.to_dict() for tx in self.transactions],
            "validation_flags": [f.value for f in self.validation_flags],
            "commit_hash": self.commit_hash,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Block":
        _exact_keys(
            d,
            {
                "number", "prev_hash", "data_hash", "timestamp", "hash",
                "transactions", "validation_flags", "commit_hash",
            },
        )
        return cls(
            number=as_int(d["number"]),
            prev_hash=check_hex_digest(d["prev_hash"]),
            data_hash=check_hex_digest(d["data_hash"]),
            timestamp=as_int(d["timestamp"]),
            transactions=tuple(Transaction.from_dict(t) for t in d["transactions"]),
            hash=check_hex_digest(d["hash"]),
            validation_flags=tuple(ValidationFlag(f) for f in d["validation_flags"]),
            commit_hash=check_hex_digest(d["commit_hash"]) if d["commit_hash"] else "",
        )


def genesis_block(channel_id: str, members: list[str], timestamp: int = 0) -> Block:
    """Block 0: one config transaction listing the channel members."""
    args = tuple(m.encode("utf-8") for m in members)
    nonce = b"\x00" * 16
    tx_id = digest_of(proposal_fields(channel_id, CONFIG_CHAINCODE, "config", args, None, nonce))
    config_tx = Transaction(
        tx_id=tx_id,
        channel_id=channel_id,
        chaincode_id=CONFIG_CHAINCODE,
        function="config",
        args=args,
        creator=None,
        nonce=nonce,
        rw_set=ReadWriteSet(),
        endorsements=(),
        client_signature=b"",
    )
    block = Block.build(0, ZERO_DIGEST, timestamp, (config_tx,))
    return block.with_flags((ValidationFlag.VALID,), ZERO_DIGEST)


def channel_members(genesis: Block) -> list[str]:
    tx = genesis.transactions[0]
    if tx.chaincode_id != CONFIG_CHAINCODE:
        raise ValueError("block 0 is not a config block")
    return [a.decode("utf-8") for a in tx.args]


def verify_chain(blocks: list[Block] | tuple[Block, ...]) -> int | None:
    """Recompute every digest and link.  Returns the number of the first
    block that does not check out, or None when the whole chain is intact."""
    prev_hash = ZERO_DIGEST
    prev_commit = ZERO_DIGEST
    for i, block in enumerate(blocks):
        if block.number != i or block.prev_hash != prev_hash:
            return i
        if data_hash(block.transactions) != block.data_hash:
            return i
        if header_hash(block.number, block.prev_hash, block.data_hash, block.timestamp) != block.hash:
            return i
        if len(block.validation_flags) != len(block.transactions):
            return i
        if commit_hash(prev_commit, block.hash, block.validation_flags) != block.commit_hash:
            return i
        if i == 0 and (
            len(block.transactions) != 1 or block.transactions[0].chaincode_id != CONFIG_CHAINCODE
        ):
            return i
        prev_hash = block.hash
        prev_commit = block.commit_hash
    return None
