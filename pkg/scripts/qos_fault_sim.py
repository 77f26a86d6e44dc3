"""Deterministic QoS check over the lossy simulated transport.

Publishes N messages at QoS 1 and QoS 2 to two subscribers each and reports
missed, duplicated and out-of-order deliveries.

    python3 scripts/qos_fault_sim.py --messages 1000 --drop 0.3 --dup 0.1 --reorder 0.1 --seed 7
"""

import argparse
import sys
from collections import Counter

from iotledger.broker import Broker, Client, FaultConfig, SimNetwork, StaticAuthenticator


def connect(net: SimNetwork, client_id: str):
    link = net.link(Client(client_id))
    link.connect()
    net.run(until=lambda: link.client.connected, max_ticks=1000)
    return link


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--messages", type=int, default=1000)
    p.add_argument("--drop", type=float, default=0.3)
    p.add_argument("--dup", type=float, default=0.1)
    p.add_argument("--reorder", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rights = {"pub": [{"resource": "#", "rights": ["publish"]}]}
    rights |= {f"s{i}": [{"resource": "q/#", "rights": ["subscribe"]}] for i in range(4)}
    net = SimNetwork(FaultConfig(drop=args.drop, duplicate=args.dup, reorder=args.reorder), args.seed)
    net.attach(Broker(StaticAuthenticator(rights), clock=net.clock))
    subs = {}
    for i, qos in enumerate((1, 1, 2, 2)):
        link = connect(net, f"s{i}")
        pid = link.subscribe([(f"q/{qos}", qos)])
        net.run(until=lambda link=link, pid=pid: pid in link.client.subacks, max_ticks=1000)
        subs[f"s{i}"] = (qos, link)
    pub = connect(net, "pub")
    sent = [f"m{i}".encode() for i in range(args.messages)]
    for body in sent:
        pub.publish("q/1", body, 1)
        pub.publish("q/2", body, 2)
    ticks = net.run(max_ticks=1_000_000)

    print(f"ticks {ticks}, frames sent {net.frames_sent}, dropped {net.frames_dropped}, duplicated {net.frames_duplicated}")
    ok = True
    for name, (qos, link) in subs.items():
        got = [m.payload for m in link.client.received]
        counts = Counter(got)
        missed = sum(1 for b in sent if b not in counts)
        dups = sum(c - 1 for c in counts.values())
        in_order = got == sent
        print(f"{name} qos{qos}: received {len(got)}, missed {missed}, duplicates {dups}, in order {in_order}")
        ok &= missed == 0 and (qos == 1 or in_order)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
