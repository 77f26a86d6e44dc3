"""Forwards device publishes on configured topics into store_asset.

Runs on its own worker thread so subscriber delivery never waits for a
commit.  Ledger errors are logged and recorded, not surfaced to the
publisher.
"""

from __future__ import annotations

import logging
import queue
import random
import threading
import uuid
from concurrent.futures import Future, wait
from dataclasses import dataclass

from ..chaincode.model import SensorType
from ..txflow.gateway import CommitResult, Gateway

log = logging.getLogger(__name__)

_SENSOR_TYPES = {t.value for t in SensorType}


def sensor_type_for(topic: str) -> str:
    """The last topic level if it names a sensor type, else ``other``."""
    last = topic.rsplit("/", 1)[-1]
    return last if last in _SENSOR_TYPES else SensorType.OTHER.value


@dataclass
class BridgeRecord:
    device_id: str
    topic: str
    asset_id: str
    payload: bytes
    tx_id: str | None = None
    result: CommitResult | None = None
    error: str | None = None


class LedgerBridge:
    def __init__(self, gateway: Gateway, seed: int | None = None) -> None:
        self.gateway = gateway
        self.rng = random.Random(seed)
        self.records: list[BridgeRecord] = []
        self._futures: list[Future] = []
        self._queue: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._worker = threading.Thread(target=self._run, name="ledger-bridge", daemon=True)
        self._worker.start()

    def submit(self, device_id: str, topic: str, payload: bytes, timestamp: int) -> None:
        asset_id = str(uuid.UUID(int=self.rng.getrandbits(128), version=4))
        self._queue.put((BridgeRecord(device_id, topic, asset_id, payload), timestamp))

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                self._queue.task_done()
                return
            rec, ts = item
            with self._lock:
                self.records.append(rec)
            try:
                fut = self.gateway.submit_async(
                    "store_asset", rec.asset_id, rec.device_id, sensor_type_for(rec.topic), rec.payload, ts
                )
                rec.tx_id = fut.tx_id
                fut.add_done_callback(lambda f, rec=rec: self._done(rec, f))
                with self._lock:
                    self._futures.append(fut)
            except Exception as exc:  # ledger errors never reach the publisher
                rec.error = f"{type(exc).__name__}: {exc}"
                log.warning("bridge store_asset for %s failed: %s", rec.device_id, rec.error)
            finally:
                self._queue.task_done()

    @staticmethod
    def _done(rec: BridgeRecord, fut: Future) -> None:
        rec.result = fut.result()
        if not rec.result.valid:
            rec.error = rec.result.flag.value
            log.warning("bridge tx %s committed as %s", rec.tx_id, rec.error)

    def drain(self, timeout: float = 30.0) -> list[BridgeRecord]:
        """Wait until every queued publish has been committed or failed."""
        self._queue.join()
        with self._lock:
            futures = list(self._futures)
        _, pending = wait(futures, timeout=timeout)
        if pending:
            raise TimeoutError(f"{len(pending)} bridged transactions still uncommitted")
        with self._lock:
            return list(self.records)

    def close(self) -> None:
        self._queue.put(None)
        self._worker.join(timeout=5)
