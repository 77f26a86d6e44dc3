"""Per-channel hash-chained block store, versioned world state and history."""

from .block import (
    Block,
    Endorsement,
    KVRead,
    KVWrite,
    RangeRead,
    ReadWriteSet,
    Transaction,
    ValidationFlag,
    Version,
    genesis_block,
    verify_chain,
)
from .channel import (
    ChainMismatch,
    Channel,
    ChannelRegistry,
    HistoryEntry,
    LedgerError,
    NotFound,
    NotMember,
    OutOfOrder,
    UnknownChannel,
)
from .state import Backend, DocumentStore, EmbeddedKV, InvalidRange

__all__ = [
    "Backend", "Block", "ChainMismatch", "Channel", "ChannelRegistry", "DocumentStore",
    "EmbeddedKV", "Endorsement", "HistoryEntry", "InvalidRange", "KVRead", "KVWrite",
    "LedgerError", "NotFound", "NotMember", "OutOfOrder", "RangeRead", "ReadWriteSet",
    "Transaction", "UnknownChannel", "ValidationFlag", "Version", "genesis_block",
    "verify_chain",
]
