"""Shared set-up: a started three-org network with an IoT device, an admin
and two org users wired up with the usual grants."""

from __future__ import annotations

import json
import random
import uuid
from dataclasses import dataclass

from iotledger.broker import (
    Broker,
    BrokerConfig,
    Client,
    LedgerAuthenticator,
    LedgerBridge,
    SimNetwork,
    StaticAuthenticator,
)
from iotledger.encoding import b64, unb64
from iotledger.identity import Identity, Role
from iotledger.network import Network, fast_orderer
from iotledger.topology import three_org_topology
from iotledger.txflow.gateway import Gateway

CHANNEL = "iotchannel"


def new_uuid(rng: random.Random) -> str:
    return str(uuid.UUID(int=rng.getrandbits(128), version=4))


@dataclass
class Fixture:
    net: Network
    admin: Identity
    device: Identity
    alice: Identity  # Org1 user with read on the device
    bob: Identity  # Org2 user without grants

    def gw(self, ident: Identity, **kw) -> Gateway:
        return self.net.gateway(ident, CHANNEL, **kw)

    def challenge(self, ident: Identity, now: int, ttl: int | None = None) -> tuple[str, bytes]:
        args = [ident.subject, now] + ([ttl] if ttl is not None else [])
        res = submit(self.net, self.gw(ident), "issue_challenge", *args)
        assert res.valid, res.flag
        c = json.loads(res.payload)
        return c["challenge_id"], unb64(c["nonce"])


def make_fixture(seed: int = 1, backend: str = "embedded-kv", start: bool = True,
                 topics=("plant/sensor-1/temperature",)) -> Fixture:
    net = Network(three_org_topology(), backend=backend, seed=seed, orderer_config=fast_orderer())
    if start:
        net.start()
    admin = net.enroll("iot-admin", "IoT", Role.ADMIN)
    device = net.enroll("sensor-1", "IoT", Role.DEVICE)
    alice = net.enroll("alice", "Org1", Role.CLIENT)
    bob = net.enroll("bob", "Org2", Role.CLIENT)
    fx = Fixture(net, admin, device, alice, bob)
    ga = fx.gw(admin)
    for fn, *args in [
        ("register_device", "sensor-1", b64(device.keys.public_key), json.dumps(list(topics))),
        ("grant", "alice", "sensor-1", "read"),
    ]:
        res = submit(net, ga, fn, *args)
        assert res.valid, (fn, res.flag)
    return fx


def submit(net: Network, gw: Gateway, fn: str, *args):
    """submit_and_await that also works with a manual (unstarted) orderer."""
    fut = gw.submit_async(fn, *args)
    if not net.orderer.running:
        net.orderer.cut(gw.channel_id)
    return fut.result(timeout=30)


# -- broker over the simulated transport ------------------------------------

def sim_broker(rights: dict, faults=None, seed: int = 0, config=None, bridge=None):
    net = SimNetwork(faults, seed)
    net.attach(Broker(StaticAuthenticator(rights), clock=net.clock, config=config, bridge=bridge))
    return net


def sim_connect(net, client_id: str, clean: bool = True, client=None):
    link = net.link(client or Client(client_id, clean))
    link.connect()
    net.run(until=lambda: link.client.connected or link.client.refused is not None, max_ticks=50)
    return link


def pub_rights(*resources: str) -> list[dict]:
    return [{"resource": r, "rights": ["publish"]} for r in resources]


def sub_rights(*resources: str) -> list[dict]:
    return [{"resource": r, "rights": ["subscribe"]} for r in resources]


def ledger_broker(fx: Fixture, bridge_topics=("plant/+/temperature",), seed: int = 1):
    """A broker that authenticates through verify_challenge and bridges
    device readings into store_asset, acting as its own 'broker' identity."""
    ident = fx.net.enroll("broker", "IoT", Role.CLIENT)
    res = fx.gw(fx.admin).submit("grant", "broker", "sensor-1", "write")
    assert res.valid
    gw = fx.gw(ident)
    bridge = LedgerBridge(gw, seed=seed)
    broker = Broker(LedgerAuthenticator(gw), config=BrokerConfig(bridge_topics=tuple(bridge_topics)), bridge=bridge)
    return broker, bridge


def signed_challenge(fx: Fixture, ident: Identity, now: int, ttl: int | None = None) -> tuple[str, str]:
    cid, nonce = fx.challenge(ident, now, ttl)
    return cid, b64(ident.sign(nonce))
