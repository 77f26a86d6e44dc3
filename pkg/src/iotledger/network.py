"""In-process network: CAs, membership registry, peers, the solo orderer
and channels, wired together from a topology config."""

from __future__ import annotations

import random
from typing import Callable

from .chaincode import AssetContract
from .identity import (
    MS_PER_YEAR,
    CertificateAuthority,
    Identity,
    KeyPair,
    MspRegistry,
    Role,
)
from .ledger.block import Block, genesis_block
from .ledger.channel import Channel
from .ledger.state import Backend
from .topology import ConfigError, NetworkConfig
from .txflow.gateway import DEFAULT_CHAINCODE, Gateway
from .txflow.orderer import OrdererConfig, SoloOrderer
from .txflow.peer import Peer, now_ms
from .txflow.policy import Policy, default_policy, parse_policy


class Network:
    def __init__(
        self,
        config: NetworkConfig,
        backend: Backend | str = Backend.EMBEDDED_KV,
        seed: int | None = None,
        clock: Callable[[], int] = now_ms,
        orderer_config: OrdererConfig | None = None,
        cas: dict[str, CertificateAuthority] | None = None,
        identities: dict[str, Identity] | None = None,
        msp: MspRegistry | None = None,
        create_channels: bool = True,
    ) -> None:
        self.config = config
        self.backend = Backend(backend)
        self.clock = clock
        self.rng = random.Random(seed) if seed is not None else None
        self.msp = msp or MspRegistry()
        self.cas: dict[str, CertificateAuthority] = cas or {}
        self.identities: dict[str, Identity] = dict(identities or {})
        self.policies: dict[str, Policy] = {}
        self.chaincode_id = DEFAULT_CHAINCODE
        self.contract = AssetContract()

        if not cas:
            for org in config.orgs:
                self._new_ca(org.name, org.ca.name)
            ocfg = config.orderer
            self._new_ca(ocfg.org, ocfg.ca.name if ocfg.ca else f"{ocfg.org}-CA")
        if not identities:
            self._issue_roster()

        self.peers: list[Peer] = []
        for org in config.orgs:
            for node in org.peers:
                self.peers.append(Peer(self.identities[node.name], self.msp, clock, self.backend))
        ocfg = config.orderer
        self.orderer = SoloOrderer(
            orderer_config
            or OrdererConfig(max_block_txs=ocfg.max_block_txs, batch_timeout_ms=ocfg.batch_timeout_ms),
            clock,
        )
        self.orderer.subscribe(self._deliver)
        if create_channels:
            for ch in config.channels:
                self.create_channel(ch.id, list(ch.members), ch.endorsement_policy)

    # -- membership -------------------------------------------------------

    def _new_ca(self, org: str, name: str) -> CertificateAuthority:
        ca = CertificateAuthority(name, org, self.msp, KeyPair.generate(self.rng))
        self.cas[org] = ca
        return ca

    def _issue_roster(self) -> None:
        for org in self.config.orgs:
            if org.tls_ca:
                self.enroll(org.tls_ca.name, org.name, Role.ADMIN)
            self.enroll(org.ca.name, org.name, Role.ADMIN)
            for p in org.peers:
                self.enroll(p.name, org.name, Role.PEER)
        o = self.config.orderer
        if o.tls_ca:
            self.enroll(o.tls_ca.name, o.org, Role.ADMIN)
        if o.ca:
            self.enroll(o.ca.name, o.org, Role.ADMIN)
        self.enroll(o.name, o.org, Role.ORDERER)

    def enroll(
        self, subject: str, org: str, role: Role | str, validity_ms: int = MS_PER_YEAR
    ) -> Identity:
        ca = self.cas.get(org)
        if ca is None:
            raise ConfigError(f"no CA for org {org!r}")
        ident = ca.enroll(subject, role, self.clock(), validity_ms, self.rng)
        self.identities[subject] = ident
        return ident

    def roster_identities(self) -> list[Identity]:
        return [self.identities[n.name] for n in self.config.roster()]

    def peers_of(self, org: str) -> list[Peer]:
        return [p for p in self.peers if p.org == org]

    def peer(self, name: str) -> Peer:
        for p in self.peers:
            if p.name == name:
                return p
        raise KeyError(name)

    # -- channels ---------------------------------------------------------

    def _policy(self, members: list[str], policy: Policy | str | None) -> Policy:
        if policy is None:
            return default_policy(members)
        return parse_policy(policy) if isinstance(policy, str) else policy

    def create_channel(
        self, channel_id: str, members: list[str], policy: Policy | str | None = None
    ) -> Block:
        for m in members:
            self.config.org(m)
        genesis = genesis_block(channel_id, members, self.clock())
        self._attach(channel_id, [genesis], self._policy(members, policy))
        return genesis

    def restore_channel(self, blocks: list[Block], policy: Policy | str | None = None) -> None:
        channel_id = blocks[0].transactions[0].channel_id
        members = sorted(Channel.from_blocks(blocks[:1]).members)
        self._attach(channel_id, blocks, self._policy(members, policy))

    def _attach(self, channel_id: str, blocks: list[Block], policy: Policy) -> None:
        self.policies[channel_id] = policy
        for peer in self.peers:
            channel = Channel.from_blocks(blocks, self.backend)
            if channel.is_member(peer.org):
                peer.adopt(channel, policy)
                peer.install(channel_id, self.chaincode_id, self.contract)
        self.orderer.resume(channel_id, blocks[-1])

    def channel(self, channel_id: str, org: str | None = None) -> Channel:
        """A member peer's copy of the channel."""
        for p in self.peers:
            if channel_id in p.channels and (org is None or p.org == org):
                return p.channel(channel_id)
        raise KeyError(channel_id)

    def _deliver(self, block: Block) -> None:
        channel_id = block.transactions[0].channel_id
        for peer in self.peers:
            if channel_id in peer.channels:
                peer.deliver(block)

    # -- clients ----------------------------------------------------------

    def gateway(self, identity: Identity, channel_id: str, **kwargs) -> Gateway:
        kwargs.setdefault("rng", random.Random(self.rng.random()) if self.rng else None)
        return Gateway(
            identity,
            channel_id,
            self.peers,
            self.orderer,
            self.policies[channel_id],
            self.chaincode_id,
            **kwargs,
        )

    def start(self) -> "Network":
        self.orderer.start()
        return self

    def stop(self) -> None:
        self.orderer.stop()

    def __enter__(self) -> "Network":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def verify_all(self) -> dict[str, int | None]:
        """First broken block per (peer, channel); None means intact."""
        out = {}
        for p in self.peers:
            for ch in p.channels:
                out[f"{p.name}/{ch.channel_id}"] = ch.verify()
        return out


def fast_orderer(max_block_txs: int = 10, batch_timeout_ms: int = 20) -> OrdererConfig:
    return OrdererConfig(max_block_txs=max_block_txs, batch_timeout_ms=batch_timeout_ms)


__all__ = ["Network", "fast_orderer"]

