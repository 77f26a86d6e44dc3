"""Network topology config.

Each organisation has one CA (the TLS-CA entry is carried for the node
roster only and issues through the same root), a list of peers, and the
orderer organisation hosts the solo orderer.  Endpoints are labels; the
in-process network ignores them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    name: str
    endpoint: str = ""


@dataclass(frozen=True)
class OrgSpec:
    name: str
    ca: NodeSpec
    tls_ca: NodeSpec | None = None
    peers: tuple[NodeSpec, ...] = ()


@dataclass(frozen=True)
class OrdererSpec:
    name: str = "Solo@Orderer"
    org: str = "Orderer"
    endpoint: str = ""
    mode: str = "solo"
    max_block_txs: int = 10
    batch_timeout_ms: int = 500
    ca: NodeSpec | None = None
    tls_ca: NodeSpec | None = None


@dataclass(frozen=True)
class ChannelSpec:
    id: str
    members: tuple[str, ...]
    endorsement_policy: str | None = None


@dataclass(frozen=True)
class NetworkConfig:
    orgs: tuple[OrgSpec, ...]
    orderer: OrdererSpec = field(default_factory=OrdererSpec)
    channels: tuple[ChannelSpec, ...] = ()

    def __post_init__(self) -> None:
        names = [o.name for o in self.orgs]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate org name")
        if self.orderer.org in names:
            raise ConfigError("orderer org must be distinct from peer orgs")
        for ch in self.channels:
            for m in ch.members:
                if m not in names:
                    raise ConfigError(f"channel {ch.id} names undeclared org {m!r}")
        endpoints = [n.endpoint for n in self.roster() if n.endpoint]
        if len(set(endpoints)) != len(endpoints):
            raise ConfigError("endpoints must be unique")
        if self.orderer.mode != "solo":
            raise ConfigError(f"unsupported orderer mode {self.orderer.mode!r}")

    def org(self, name: str) -> OrgSpec:
        for o in self.orgs:
            if o.name == name:
                return o
        raise ConfigError(f"unknown org {name!r}")

    def roster(self) -> list[NodeSpec]:
        nodes: list[NodeSpec] = []
        for o in self.orgs:
            if o.tls_ca:
                nodes.append(o.tls_ca)
            nodes.append(o.ca)
            nodes.extend(o.peers)
        if self.orderer.tls_ca:
            nodes.append(self.orderer.tls_ca)
        if self.orderer.ca:
            nodes.append(self.orderer.ca)
        nodes.append(NodeSpec(self.orderer.name, self.orderer.endpoint))
        return nodes

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkConfig":
        def node(x: Any) -> NodeSpec | None:
            if x is None:
                return None
            if isinstance(x, str):
                return NodeSpec(x)
            return NodeSpec(x["name"], x.get("endpoint", ""))

        try:
            orgs = tuple(
                OrgSpec(
                    name=o["name"],
                    ca=node(o.get("ca")) or NodeSpec(f"{o['name']}-CA"),
                    tls_ca=node(o.get("tls_ca")),
                    peers=tuple(node(p) for p in o.get("peers", [])),
                )
                for o in d["orgs"]
            )
            od = d.get("orderer", {})
            orderer = OrdererSpec(
                name=od.get("name", "Solo@Orderer"),
                org=od.get("org", "Orderer"),
                endpoint=od.get("endpoint", ""),
                mode=od.get("mode", "solo"),
                max_block_txs=int(od.get("max_block_txs", 10)),
                batch_timeout_ms=int(od.get("batch_timeout_ms", 500)),
                ca=node(od.get("ca")),
                tls_ca=node(od.get("tls_ca")),
            )
            channels = tuple(
                ChannelSpec(c["id"], tuple(c["members"]), c.get("endorsement_policy"))
                for c in d.get("channels", [])
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed network config: {exc!r}") from None
        return cls(orgs, orderer, channels)

    @classmethod
    def load(cls, path: str | Path) -> "NetworkConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        def node(n: NodeSpec | None) -> dict | None:
            return None if n is None else {"name": n.name, "endpoint": n.endpoint}

        return {
            "orgs": [
                {
                    "name": o.name,
                    "ca": node(o.ca),
                    "tls_ca": node(o.tls_ca),
                    "peers": [node(p) for p in o.peers],
                }
                for o in self.orgs
            ],
            "orderer": {
                "name": self.orderer.name,
                "org": self.orderer.org,
                "endpoint": self.orderer.endpoint,
                "mode": self.orderer.mode,
                "max_block_txs": self.orderer.max_block_txs,
                "batch_timeout_ms": self.orderer.batch_timeout_ms,
                "ca": node(self.orderer.ca),
                "tls_ca": node(self.orderer.tls_ca),
            },
            "channels": [
                {"id": c.id, "members": list(c.members), "endorsement_policy": c.endorsement_policy}
                for c in self.channels
            ],
        }


THREE_ORG = {
    "orgs": [
        {
            "name": "Org1",
            "tls_ca": {"name": "Org1-TLS-CA", "endpoint": "10.0.1.10"},
            "ca": {"name": "Org1-CA", "endpoint": "10.0.1.20"},
            "peers": [{"name": "peer@org1", "endpoint": "10.0.1.30"}],
        },
        {
            "name": "Org2",
            "tls_ca": {"name": "Org2-TLS-CA", "endpoint": "10.0.2.10"},
            "ca": {"name": "Org2-CA", "endpoint": "10.0.2.20"},
            "peers": [{"name": "peer@org2", "endpoint": "10.0.2.30"}],
        },
        {
            "name": "IoT",
            "tls_ca": {"name": "IoT-TLS-CA", "endpoint": "10.0.4.10"},
            "ca": {"name": "IoT-CA", "endpoint": "10.0.4.20"},
            "peers": [{"name": "peer@IoT", "endpoint": "192.168.10.30"}],
        },
    ],
    "orderer": {
        "name": "Solo@Orderer",
        "org": "Orderer",
        "endpoint": "10.0.5.30",
        "mode": "solo",
        "max_block_txs": 10,
        "batch_timeout_ms": 500,
        "tls_ca": {"name": "Orderer-TLS-CA", "endpoint": "10.0.5.10"},
        "ca": {"name": "Orderer-CA", "endpoint": "10.0.5.20"},
    },
    "channels": [
        {
            "id": "iotchannel",
            "members": ["Org1", "Org2", "IoT"],
            "endorsement_policy": "OUTOF(2,Org1,Org2,IoT)",
        }
    ],
}


def three_org_topology() -> NetworkConfig:
    """The three-org experimental network plus its solo orderer."""
    return NetworkConfig.from_dict(THREE_ORG)
