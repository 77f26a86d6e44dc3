import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from iotledger.bench import BenchConfigError, BenchmarkConfig, BenchRunner, Round, default_config
from iotledger.bench.report import METRIC_FIELDS, MetricsReport, aggregate, percentile, render_report


def small(rounds, **kw):
    kw.setdefault("asset_bytes", 64)
    kw.setdefault("batch_timeout_ms", 20)
    return BenchmarkConfig(rounds=tuple(rounds), **kw)


# -- configuration --------------------------------------------------------


def test_config_roundtrip(tmp_path):
    cfg = default_config(tx_count=20, repeats=2)
    assert [r.batch_size for r in cfg.rounds] == [1, 10, 20, 50] * 2
    assert all(r.asset_pool == 500 and r.send_rate_tps == 50 for r in cfg.rounds)
    path = tmp_path / "b.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert BenchmarkConfig.load(path) == cfg


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(bogus=1),
        lambda d: d.update(rounds=[]),
        lambda d: d.update(workers=0),
        lambda d: d.update(state_db="mongo"),
        lambda d: d["rounds"][0].update(function="rm_rf"),
        lambda d: d["rounds"][0].update(batch_size=0),
        lambda d: d["rounds"][0].update(batch_size=600),
        lambda d: d["rounds"][0].update(colour="red"),
        lambda d: d.pop("rounds"),
    ],
)
def test_config_rejects(mutate):
    d = default_config().to_dict()
    mutate(d)
    with pytest.raises(BenchConfigError):
        BenchmarkConfig.from_dict(d)


def test_config_load_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(BenchConfigError):
        BenchmarkConfig.load(p)


# -- metrics ----------------------------------------------------------------


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=200), st.floats(0.1, 100))
def test_percentile_nearest_rank(values, q):
    s = sorted(values)
    expect = s[max(1, math.ceil(q / 100 * len(s))) - 1]
    assert percentile(values, q) == expect
    assert min(values) <= percentile(values, q) <= max(values)


@given(
    st.lists(st.floats(0.1, 1e4, allow_nan=False), max_size=50),
    st.integers(0, 10),
    st.floats(0.01, 100),
    st.floats(0.0, 200),
)
def test_aggregate_bounds(lat, failed, send_s, dur_s):
    submitted = len(lat) + failed
    if submitted == 0:
        return
    m = aggregate("r", submitted, lat, failed, send_s, dur_s)
    assert m.committed + m.failed == m.submitted
    assert m.duration >= send_s
    assert m.throughput <= m.send_rate_actual + 1e-9
    if lat:
        assert m.latency_min <= m.latency_avg <= m.latency_max
        assert m.latency_min <= m.latency_p95 <= m.latency_max


def test_aggregate_rejects_overcount():
    with pytest.raises(ValueError):
        aggregate("r", 1, [1.0, 2.0], 0, 1, 1)


def test_render_text_table():
    rep = MetricsReport([aggregate("batch-1", 2, [1.0, 3.0], 0, 1.0, 1.0),
                         aggregate("dead", 2, [], 2, 1.0, 1.0)], True)
    text = render_report(rep, "text").decode()
    header = [c.strip() for c in text.splitlines()[1].strip("|").split("|")]
    assert header == ["Label", "Send Rate", "Throughput", "Min", "Avg", "Max", "P95"]
    assert "2.0 TPS" in text and "3.00 ms" in text and "| -" in text
    back = MetricsReport.from_dict(json.loads(render_report(rep)))
    assert back == rep
    assert list(back.rounds[0].to_dict()) == list(METRIC_FIELDS)
    with pytest.raises(ValueError):
        render_report(rep, "xml")


# -- the runner ---------------------------------------------------------------


@pytest.fixture(scope="module")
def runner():
    r = BenchRunner(small([Round("warm", tx_count=1, asset_pool=60)]))
    r.prepare_state(60)
    yield r
    r.close()


def test_workload_is_deterministic(runner):
    rnd = Round("x", tx_count=30, batch_size=5, asset_pool=60)
    pool = runner.prepare_state(60)
    a, b = runner.workload(rnd, pool), runner.workload(rnd, pool)
    assert a == b
    assert all(len(set(tx.args)) == 5 and set(tx.args) <= set(pool) for tx in a)
    other = BenchRunner.__new__(BenchRunner)
    other.config = small([rnd], seed=7)
    other.gateways = runner.gateways
    assert other.workload(rnd, pool) != a


def test_pacing_and_report(runner):
    rnd = Round("paced", tx_count=10, send_rate_tps=10, batch_size=3, asset_pool=60)
    m = runner.run_round(rnd)
    assert m.submitted == m.committed == 10 and m.failed == 0
    assert m.duration >= 0.95
    assert abs(m.send_rate_actual - 10) <= 1.0
    assert m.throughput <= m.send_rate_actual + 1e-9
    assert m.latency_min <= m.latency_avg <= m.latency_max
    assert m.latency_min <= m.latency_p95 <= m.latency_max


def test_send_rate_within_ten_percent(runner):
    m = runner.run_round(Round("rate", tx_count=40, send_rate_tps=40, asset_pool=60))
    assert abs(m.send_rate_actual - 40) <= 4.0
    assert m.committed == 40


def test_other_workloads(runner):
    for fn in ("query_checksum", "store_asset"):
        m = runner.run_round(Round(fn, function=fn, tx_count=5, send_rate_tps=50, asset_pool=60))
        assert m.committed + m.failed == 5 and m.committed >= 1
    assert all(v is None for v in runner.net.verify_all().values())


def test_stopped_orderer_fails_everything():
    r = BenchRunner(small([Round("x", tx_count=1, asset_pool=10)]))
    r.prepare_state(10)
    r.net.stop()
    m = r.run_round(Round("down", tx_count=8, send_rate_tps=100, asset_pool=10))
    assert m.failed == m.submitted == 8 and m.committed == 0
    assert m.latency_avg is None and m.throughput == 0


def test_run_reports_chain_intact():
    cfg = small([Round("a", tx_count=5, send_rate_tps=50, asset_pool=20),
                 Round("b", tx_count=5, send_rate_tps=50, batch_size=4, asset_pool=20)])
    with BenchRunner(cfg) as r:
        rep = r.run()
    assert [x.label for x in rep.rounds] == ["a", "b"] and rep.chain_intact is True
