"""Client side of the pipeline: propose, collect endorsements, hand the
transaction to the orderer and wait for the commit notification."""

from __future__ import annotations

import random
import time
from concurrent.futures import Future, TimeoutError as FutureTimeout
from dataclasses import dataclass
from typing import Sequence

from ..identity import Identity
from ..ledger.block import Endorsement, ReadWriteSet, Transaction, ValidationFlag
from .orderer import SoloOrderer
from .peer import CommitEvent, Peer
from .policy import Policy, minimal_endorsers
from .proposal import Proposal

DEFAULT_CHAINCODE = "iot-access"


class Timeout(Exception):
    pass


class EndorsementMismatch(Exception):
    pass


@dataclass(frozen=True)
class CommitResult:
    tx_id: str
    block_number: int
    flag: ValidationFlag
    latency_ms: float
    payload: bytes

    @property
    def valid(self) -> bool:
        return self.flag is ValidationFlag.VALID


class Gateway:
    def __init__(
        self,
        identity: Identity,
        channel_id: str,
        peers: Sequence[Peer],
        orderer: SoloOrderer,
        policy: Policy,
        chaincode_id: str = DEFAULT_CHAINCODE,
        rng: random.Random | None = None,
        timeout_s: float = 30.0,
        event_peer: Peer | None = None,
    ) -> None:
        self.identity = identity
        self.channel_id = channel_id
        self.peers = [p for p in peers if channel_id in p.channels]
        self.orderer = orderer
        self.policy = policy
        self.chaincode_id = chaincode_id
        self.rng = rng
        self.timeout_s = timeout_s
        by_org: dict[str, Peer] = {}
        for p in self.peers:
            by_org.setdefault(p.org, p)
        orgs = sorted(by_org, key=lambda o: (o != identity.org, o))
        self.endorsers = [by_org[o] for o in minimal_endorsers(policy, orgs)]
        own = [p for p in self.peers if p.org == identity.org]
        self.event_peer = event_peer or (own[0] if own else self.peers[0])

    def proposal(self, function: str, *args: bytes | str | int) -> Proposal:
        return Proposal.create(
            self.identity, self.channel_id, self.chaincode_id, function, list(args), self.rng
        )

    def evaluate(self, function: str, *args: bytes | str | int) -> bytes:
        """Read-only query at one peer; nothing is ordered."""
        return self.event_peer.query(self.proposal(function, *args))

    def endorse(self, proposal: Proposal) -> tuple[Transaction, bytes]:
        endorsements: list[Endorsement] = []
        rw_set: ReadWriteSet | None = None
        for peer in self.endorsers:
            endorsement, rws = peer.endorse(proposal)
            if rw_set is not None and rws != rw_set:
                raise EndorsementMismatch(f"{peer.name} produced a different read/write set")
            rw_set = rws
            endorsements.append(endorsement)
        tx = Transaction(
            tx_id=proposal.tx_id,
            channel_id=proposal.channel_id,
            chaincode_id=proposal.chaincode_id,
            function=proposal.function,
            args=proposal.args,
            creator=proposal.creator,
            nonce=proposal.nonce,
            rw_set=rw_set,
            endorsements=tuple(endorsements),
            client_signature=proposal.client_signature,
        )
        return tx, endorsements[0].response_payload

    def submit_proposal(self, proposal: Proposal, started: float | None = None) -> Future:
        """Endorse and order ``proposal``; the returned future resolves to
        a CommitResult once the event peer commits it.  Endorsement errors
        raise here, before anything is ordered."""
        started = time.perf_counter() if started is None else started
        tx, payload = self.endorse(proposal)
        notifier = self.event_peer.notifiers[self.channel_id]
        event_future = notifier.expect(tx.tx_id)
        result: Future = Future()

        def _done(f: Future) -> None:
            event: CommitEvent = f.result()
            result.set_result(
                CommitResult(
                    tx_id=event.tx_id,
                    block_number=event.block_number,
                    flag=event.flag,
                    latency_ms=(event.committed_at - started) * 1000.0,
                    payload=payload,
                )
            )

        event_future.add_done_callback(_done)
        try:
            self.orderer.submit(tx)
        except Exception:
            notifier.forget(tx.tx_id)
            raise
        result.tx_id = tx.tx_id  # type: ignore[attr-defined]
        return result

    def submit_async(self, function: str, *args: bytes | str | int) -> Future:
        started = time.perf_counter()
        return self.submit_proposal(self.proposal(function, *args), started)

    def submit(self, function: str, *args: bytes | str | int, timeout_s: float | None = None) -> CommitResult:
        """submit_and_await: the whole pipeline, blocking until commit."""
        fut = self.submit_async(function, *args)
        try:
            return fut.result(timeout=self.timeout_s if timeout_s is None else timeout_s)
        except FutureTimeout:
            self.event_peer.notifiers[self.channel_id].forget(fut.tx_id)
            raise Timeout(f"no commit for {fut.tx_id}") from None
