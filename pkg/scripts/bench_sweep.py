"""Batch-size sweep at a fixed send rate; prints the report table and the
per-batch median average latency.

    python3 scripts/bench_sweep.py --config configs/bench_default.json --out sweep.json
"""

import argparse
import logging
import statistics
import sys
from pathlib import Path

from iotledger.bench import BenchRunner, default_config
from iotledger.bench.config import BenchmarkConfig
from iotledger.bench.report import render_report


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", help="benchmark JSON (default: pool 500, batches 1/10/20/50 at 50 TPS)")
    p.add_argument("--repeats", type=int, default=3, help="repeats when no --config is given")
    p.add_argument("--tx-count", type=int, default=100)
    p.add_argument("--out", help="write the JSON report here")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    cfg = BenchmarkConfig.load(args.config) if args.config else default_config(args.tx_count, args.repeats)
    with BenchRunner(cfg) as runner:
        report = runner.run()
    sys.stdout.write(render_report(report, "text").decode())

    by_batch: dict[int, list[float]] = {}
    for rnd, m in zip(cfg.rounds, report.rounds):
        if m.latency_avg is not None:
            by_batch.setdefault(rnd.batch_size, []).append(m.latency_avg)
    for b in sorted(by_batch):
        print(f"batch {b:>3}: median avg latency {statistics.median(by_batch[b]):8.2f} ms over {len(by_batch[b])} rounds")
    print(f"chain intact: {report.chain_intact}")
    if args.out:
        Path(args.out).write_bytes(render_report(report, "json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
