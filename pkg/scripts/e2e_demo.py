"""End-to-end walk-through on an in-process network: register a device,
grant access, log both parties in with one-time challenges, stream readings
through the broker into the ledger and query them back.

    python3 scripts/e2e_demo.py --readings 20
"""

import argparse
import hashlib
import json
import sys

from iotledger.broker import AuthFailure, Broker, BrokerConfig, LedgerAuthenticator, LedgerBridge
from iotledger.broker import TcpBrokerServer, TcpClient
from iotledger.encoding import b64, unb64
from iotledger.identity import Role
from iotledger.network import Network, fast_orderer
from iotledger.topology import three_org_topology
from iotledger.txflow.peer import now_ms

CHANNEL = "iotchannel"
TOPIC = "plant/sensor-1/temperature"


def login(net, ident):
    res = net.gateway(ident, CHANNEL).submit("issue_challenge", ident.subject, now_ms())
    c = json.loads(res.payload)
    return c["challenge_id"], b64(ident.sign(unb64(c["nonce"])))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--readings", type=int, default=20)
    p.add_argument("--seed", type=int, default=3)
    args = p.parse_args(argv)

    net = Network(three_org_topology(), seed=args.seed, orderer_config=fast_orderer())
    net.start()
    try:
        admin = net.enroll("iot-admin", "IoT", Role.ADMIN)
        device = net.enroll("sensor-1", "IoT", Role.DEVICE)
        alice = net.enroll("alice", "Org1", Role.CLIENT)
        broker_id = net.enroll("broker", "IoT", Role.CLIENT)
        ga = net.gateway(admin, CHANNEL)
        for fn, *a in [
            ("register_device", "sensor-1", b64(device.keys.public_key), json.dumps([TOPIC])),
            ("grant", "alice", "sensor-1", "read"),
            ("grant", "alice", "plant/+/temperature", "subscribe"),
            ("grant", "broker", "sensor-1", "write"),
        ]:
            print(f"{fn:<16} {a[:2]} -> {ga.submit(fn, *a).flag.value}")

        gw = net.gateway(broker_id, CHANNEL)
        bridge = LedgerBridge(gw, seed=args.seed)
        broker = Broker(LedgerAuthenticator(gw), config=BrokerConfig(bridge_topics=("plant/+/temperature",)), bridge=bridge)
        with TcpBrokerServer(broker) as server:
            sub_cred = login(net, alice)
            sub = TcpClient("alice", server.address)
            sub.connect(*sub_cred)
            sub.subscribe([("plant/+/temperature", 1)])
            dev_cred = login(net, device)
            dev = TcpClient("sensor-1", server.address)
            dev.connect(*dev_cred)
            readings = [f"{20 + i / 10:.1f}C".encode() for i in range(args.readings)]
            for r in readings:
                dev.publish(TOPIC, r, 1)
            dev.flush(30)
            got = sub.wait_for(len(readings), 30)
            print(f"subscriber received {len(got)}/{len(readings)}")
            records = bridge.drain()
            print(f"bridged {sum(1 for r in records if r.result and r.result.valid)} readings into the ledger")
            dev.disconnect()
            sub.disconnect()
            try:
                TcpClient("sensor-1", server.address).connect(*dev_cred)
                print("replayed challenge accepted (unexpected)")
            except AuthFailure as exc:
                print(f"replayed challenge refused: {exc.code}")
        bridge.close()

        ch = net.channel(CHANNEL)
        stored = {json.loads(v)["checksum"] for k, v, _ in ch.snapshot_items() if k.startswith("asset/")}
        expected = {hashlib.sha256(r).hexdigest() for r in readings}
        print(f"ledger assets {len(stored)}, checksums match: {stored == expected}")
        print(f"chain height {ch.height}, verify: {'ok' if ch.verify() is None else 'broken'}")
        return 0 if stored == expected else 1
    finally:
        net.stop()


if __name__ == "__main__":
    sys.exit(main())
