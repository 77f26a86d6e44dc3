"""Fixed-rate load generation against the full endorse/order/commit
pipeline.

Transactions are paced by a shared schedule: the i-th transaction of a
round may start no earlier than ``t0 + i / send_rate``.  Workers take the
next index from a shared counter, sleep until its slot and submit without
waiting for the commit, so a slow commit never slows the send rate.
"""

from __future__ import annotations

import itertools
import logging
import random
import threading
import time
import uuid
from concurrent.futures import Future
from dataclasses import dataclass

from ..encoding import b64
from ..identity import DuplicateSubject, Identity, Role
from ..network import Network
from ..topology import NetworkConfig, three_org_topology
from ..txflow.gateway import Gateway
from ..txflow.orderer import OrdererConfig
from .config import BenchmarkConfig, Round
from .report import MetricsReport, RoundMetrics, aggregate

log = logging.getLogger(__name__)

CHANNEL = "iotchannel"
DEVICE = "bench-sensor"


class BenchmarkError(Exception):
    pass


@dataclass(frozen=True)
class PlannedTx:
    client: int  # index into the runner's gateways
    function: str
    args: tuple


def pool_ids(pool_size: int, seed: int) -> list[str]:
    rng = random.Random(f"pool:{seed}")
    return [str(uuid.UUID(int=rng.getrandbits(128), version=4)) for _ in range(pool_size)]


class BenchRunner:
    def __init__(
        self,
        config: BenchmarkConfig,
        network: Network | None = None,
        topology: NetworkConfig | None = None,
        channel_id: str = CHANNEL,
    ) -> None:
        self.config = config
        self.channel_id = channel_id
        self._owns_network = network is None
        if network is None:
            network = Network(
                topology or three_org_topology(),
                backend=config.state_db,
                seed=config.seed,
                orderer_config=OrdererConfig(
                    max_block_txs=config.max_block_txs, batch_timeout_ms=config.batch_timeout_ms
                ),
            )
            network.start()
        self.net = network
        self.pool: list[str] = []
        self._setup()

    def _identity(self, subject: str, org: str, role: Role) -> Identity:
        try:
            return self.net.enroll(subject, org, role)
        except DuplicateSubject:
            return self.net.identities[subject]

    def _gateway(self, ident: Identity, salt: int) -> Gateway:
        rng = random.Random(f"{self.config.seed}:{ident.subject}:{salt}")
        return self.net.gateway(ident, self.channel_id, rng=rng, timeout_s=self.config.commit_timeout_s)

    def _setup(self) -> None:
        admin = self._identity("bench-admin", "IoT", Role.ADMIN)
        device = self._identity(DEVICE, "IoT", Role.DEVICE)
        users = [
            self._identity("bench-user-org1", "Org1", Role.CLIENT),
            self._identity("bench-user-org2", "Org2", Role.CLIENT),
        ]
        ga = self._gateway(admin, 0)
        if self.net.channel(self.channel_id).state_get(f"dev/{DEVICE}") is None:
            steps = [("register_device", DEVICE, b64(device.keys.public_key), "[]")]
            steps += [("grant", u.subject, DEVICE, "read,write") for u in users]
            for fn, *args in steps:
                res = ga.submit(fn, *args)
                if not res.valid:
                    raise BenchmarkError(f"setup {fn} committed as {res.flag.value}")
        # workload clients cycle through two org users and the device itself
        self.gateways = [self._gateway(i, 1) for i in (*users, device)]
        self.device_gateway = self.gateways[-1]

    def prepare_state(self, pool_size: int, seed: int | None = None) -> list[str]:
        """Commit ``pool_size`` seeded assets (reusing any already made)."""
        seed = self.config.seed if seed is None else seed
        ids = pool_ids(pool_size, seed)
        if self.pool[: len(ids)] == ids:
            return ids
        have = len(self.pool) if self.pool == ids[: len(self.pool)] else 0
        rng = random.Random(f"payload:{seed}")
        payloads = [rng.randbytes(self.config.asset_bytes) for _ in ids]
        futures: list[Future] = []
        for i in range(have, len(ids)):
            futures.append(
                self.device_gateway.submit_async(
                    "store_asset", ids[i], DEVICE, "temperature", payloads[i], i
                )
            )
        for f in futures:
            res = f.result(timeout=self.config.commit_timeout_s)
            if not res.valid:
                raise BenchmarkError(f"preparing asset {res.tx_id} committed as {res.flag.value}")
        self.pool = ids
        return ids

    def workload(self, rnd: Round, pool: list[str]) -> list[PlannedTx]:
        """The exact (client, function, args) sequence for a round; depends
        only on the seed, the round and the pool."""
        rng = random.Random(f"{self.config.seed}:{rnd.label}:{rnd.function}:{rnd.batch_size}")
        n_clients = len(self.gateways)
        plan = []
        for i in range(rnd.tx_count):
            if rnd.function == "get_assets_from_batch":
                args: tuple = tuple(rng.sample(pool, rnd.batch_size))
            elif rnd.function == "query_checksum":
                args = (rng.choice(pool),)
            else:
                payload = rng.randbytes(self.config.asset_bytes)
                args = (rng.choice(pool), DEVICE, "temperature", payload, i)
            plan.append(PlannedTx(i % n_clients, rnd.function, args))
        return plan

    def run_round(self, rnd: Round) -> RoundMetrics:
        pool = self.prepare_state(rnd.asset_pool)
        plan = self.workload(rnd, pool)
        n = len(plan)
        interval = 1.0 / rnd.send_rate_tps
        counter = itertools.count()
        take = threading.Lock()
        started: list[float] = [0.0] * n
        futures: list[Future | None] = [None] * n
        errors: list[str | None] = [None] * n
        t0 = time.perf_counter() + 0.005

        def worker() -> None:
            while True:
                with take:
                    i = next(counter)
                if i >= n:
                    return
                delay = t0 + i * interval - time.perf_counter()
                if delay > 0:
                    time.sleep(delay)
                tx = plan[i]
                gw = self.gateways[tx.client]
                started[i] = time.perf_counter()
                try:
                    futures[i] = gw.submit_proposal(gw.proposal(tx.function, *tx.args), started[i])
                except Exception as exc:
                    errors[i] = f"{type(exc).__name__}: {exc}"

        threads = [threading.Thread(target=worker, daemon=True) for _ in range(self.config.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        deadline = time.perf_counter() + self.config.commit_timeout_s
        latencies: list[float] = []
        failed = 0
        last_event = max(started)
        for i, fut in enumerate(futures):
            if fut is None:
                failed += 1
                continue
            try:
                res = fut.result(timeout=max(0.0, deadline - time.perf_counter()))
            except Exception:
                self.gateways[plan[i].client].event_peer.notifiers[self.channel_id].forget(fut.tx_id)
                failed += 1
                continue
            last_event = max(last_event, started[i] + res.latency_ms / 1000.0)
            if res.valid:
                latencies.append(res.latency_ms)
            else:
                failed += 1
        if any(errors):
            log.warning("%s: %d submissions failed, first: %s", rnd.label, sum(map(bool, errors)),
                        next(e for e in errors if e))
        send_duration = max(started) - t0 + interval
        return aggregate(rnd.label, n, latencies, failed, send_duration, last_event - t0)

    def run(self) -> MetricsReport:
        report = MetricsReport()
        for rnd in self.config.rounds:
            report.rounds.append(self.run_round(rnd))
            log.info("round %s done", rnd.label)
        report.chain_intact = all(v is None for v in self.net.verify_all().values())
        return report

    def close(self) -> None:
        if self._owns_network:
            self.net.stop()

    def __enter__(self) -> "BenchRunner":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def run_benchmark(config: BenchmarkConfig, network: Network | None = None) -> MetricsReport:
    with BenchRunner(config, network) as runner:
        return runner.run()
