from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass
from typing import Callable

from ..identity import Identity, MspRegistry, UnknownIssuer, ValidationResult
from ..ledger.block import Block, Endorsement, ReadWriteSet, ValidationFlag
from ..ledger.channel import Channel, ChannelRegistry, NotMember
from ..ledger.state import Backend
from .policy import Policy, default_policy
from .proposal import Proposal
from .simulate import ChaincodeError, Contract, simulate
from .validation import validate_block

log = logging.getLogger(__name__)


class AuthFailure(Exception):
    pass


class UnknownChaincode(Exception):
    pass


def now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class CommitEvent:
    tx_id: str
    block_number: int
    flag: ValidationFlag
    committed_at: float  # perf_counter seconds


class CommitNotifier:
    """Resolves per-transaction futures when a peer commits their block."""

    def __init__(self) -> None:
        self._waiters: dict[str, Future] = {}
        self._lock = threading.Lock()

    def expect(self, tx_id: str) -> Future:
        fut: Future = Future()
        with self._lock:
            self._waiters[tx_id] = fut
        return fut

    def forget(self, tx_id: str) -> None:
        with self._lock:
            self._waiters.pop(tx_id, None)

    def notify(self, block: Block) -> None:
        at = time.perf_counter()
        with self._lock:
            hits = [
                (self._waiters.pop(tx.tx_id), CommitEvent(tx.tx_id, block.number, flag, at))
                for tx, flag in zip(block.transactions, block.validation_flags)
                if tx.tx_id in self._waiters
            ]
        for fut, event in hits:
            if not fut.done():
                fut.set_result(event)


class Peer:
    """An endorsing and committing peer holding its own copy of each
    channel it has joined."""

    def __init__(
        self,
        identity: Identity,
        msp: MspRegistry,
        clock: Callable[[], int] = now_ms,
        backend: Backend | str = Backend.EMBEDDED_KV,
    ) -> None:
        self.identity = identity
        self.msp = msp
        self.clock = clock
        self.backend = Backend(backend)
        self.channels = ChannelRegistry()
        self.policies: dict[str, Policy] = {}
        self.contracts: dict[tuple[str, str], Contract] = {}
        self.notifiers: dict[str, CommitNotifier] = {}
        self._listeners: list[Callable[[str, Block], None]] = []
        self._commit_lock = threading.Lock()

    @property
    def name(self) -> str:
        return self.identity.subject

    @property
    def org(self) -> str:
        return self.identity.org

    def join(self, genesis: Block, policy: Policy | None = None) -> Channel:
        channel = Channel(genesis, self.backend)
        channel.require_member(self.org)
        self.channels.add(channel)
        self.policies[channel.channel_id] = policy or default_policy(sorted(channel.members))
        self.notifiers[channel.channel_id] = CommitNotifier()
        return channel

    def adopt(self, channel: Channel, policy: Policy | None = None) -> None:
        """Join with an already-built channel (e.g. replayed from disk)."""
        channel.require_member(self.org)
        self.channels.add(channel)
        self.policies[channel.channel_id] = policy or default_policy(sorted(channel.members))
        self.notifiers[channel.channel_id] = CommitNotifier()

    def install(self, channel_id: str, chaincode_id: str, contract: Contract) -> None:
        self.contracts[(channel_id, chaincode_id)] = contract

    def channel(self, channel_id: str) -> Channel:
        return self.channels.get(channel_id)

    def add_commit_listener(self, cb: Callable[[str, Block], None]) -> None:
        self._listeners.append(cb)

    # -- execute ----------------------------------------------------------

    def _authenticate(self, proposal: Proposal, channel: Channel) -> None:
        try:
            status = self.msp.validate(proposal.creator, self.clock())
        except UnknownIssuer as exc:
            raise AuthFailure(f"unknown issuer: {exc}") from None
        if status is not ValidationResult.VALID:
            raise AuthFailure(f"creator certificate {status.value}")
        if not proposal.signature_valid():
            raise AuthFailure("bad proposal signature")
        if not channel.is_member(proposal.creator.org):
            raise NotMember(f"{proposal.creator.org} is not a member of {channel.channel_id}")

    def _run(self, proposal: Proposal) -> tuple[bytes, ReadWriteSet]:
        channel = self.channels.get(proposal.channel_id)
        channel.require_member(self.org)
        self._authenticate(proposal, channel)
        contract = self.contracts.get((proposal.channel_id, proposal.chaincode_id))
        if contract is None:
            raise UnknownChaincode(f"{proposal.chaincode_id} on {proposal.channel_id}")
        return simulate(
            contract,
            channel,
            proposal.tx_id,
            proposal.creator,
            proposal.function,
            list(proposal.args),
        )

    def endorse(self, proposal: Proposal) -> tuple[Endorsement, ReadWriteSet]:
        payload, rw_set = self._run(proposal)
        rw_hash = rw_set.digest()
        signature = self.identity.sign(Endorsement.signed_bytes(proposal.tx_id, rw_hash, payload))
        return Endorsement(self.identity.cert, rw_hash, payload, signature), rw_set

    def query(self, proposal: Proposal) -> bytes:
        """Simulate without endorsing: a read-only evaluation."""
        return self._run(proposal)[0]

    # -- validate + commit ------------------------------------------------

    def deliver(self, block: Block) -> Block:
        channel_id = block.transactions[0].channel_id if block.transactions else None
        with self._commit_lock:
            channel = self.channels.get(channel_id)
            if block.number < channel.height:
                return channel.get_block(block.number)
            validated = validate_block(channel, block, self.msp, self.policies[channel.channel_id])
            channel.append_block(validated)
        self.notifiers[channel.channel_id].notify(validated)
        for cb in self._listeners:
            try:
                cb(channel.channel_id, validated)
            except Exception:
                log.exception("commit listener failed on %s", self.name)
        return validated


__all__ = [
    "AuthFailure",
    "ChaincodeError",
    "CommitEvent",
    "CommitNotifier",
    "Peer",
    "UnknownChaincode",
    "now_ms",
]
