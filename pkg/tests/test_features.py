from datetime import datetime, time

import numpy as np
import pytest

from conftest import zi_trades
from impactlab.features import (
    N_BUCKETS,
    ExtractCounters,
    ObservationSet,
    ThinBook,
    ZeroMeanReturn,
    build_features,
    extract,
    extract_all,
    feature_columns,
    intraday_bucket,
    normalize,
    observation_stats,
    read_features,
    write_features,
)
from impactlab.lob import Side, book_from_levels
from impactlab.regression import aggregate_by_size
from impactlab.trades import TradeRecord, TradeType, classify

BIDS = [(2000, 2), (1998, 3), (1996, 1), (1994, 5)]
ASKS = [(2002, 3), (2004, 2), (2006, 4), (2009, 1)]


def _trade(side, price, size, ts=datetime(2003, 6, 2, 9, 45), bids=BIDS, asks=ASKS):
    book = book_from_levels(bids, asks, tick_size=0.005)
    pre = book.snapshot(4)
    fill = book.submit(side, price, size, "x")
    return TradeRecord(classify(side, fill.remainder), fill.executed, fill.remainder, price, size,
                       pre, book.snapshot(4), ts, "000001", fill.levels_cleared)


@pytest.mark.parametrize(
    "t, b",
    [(time(9, 30), 0), (time(9, 39, 59, 999999), 0), (time(9, 40), 1), (time(11, 29, 59), 11),
     (time(13, 0), 12), (time(14, 59, 59, 999999), 23)],
)
def test_buckets(t, b):
    assert intraday_bucket(t) == b


@pytest.mark.parametrize("t", [time(9, 29, 59), time(11, 30), time(15, 0)])
def test_bucket_outside_session(t):
    with pytest.raises(ValueError):
        intraday_bucket(t)


def test_extract_relative_and_raw():
    t = _trade(Side.SELL, 1998, 4)
    rel = extract(t, 3)
    assert rel.va == (3.0, 2.0, 4.0) and rel.vb == (2.0, 3.0, 1.0)
    assert rel.spread == pytest.approx(2 / 4002)
    assert rel.ga == pytest.approx((2 / 4002, 2 / 4002, 3 / 4002))
    assert rel.gb == pytest.approx((2 / 4002, 2 / 4002, 2 / 4002))
    assert rel.bucket == 1 and rel.omega == 4 and rel.kind is TradeType.FS
    raw = extract(t, 3, mode="raw")
    assert raw.spread == pytest.approx(0.01) and raw.ga[2] == pytest.approx(0.015)
    with pytest.raises(ValueError):
        extract(t, 3, mode="log")


def test_thin_book_needs_one_extra_level():
    t = _trade(Side.SELL, 1998, 4)
    with pytest.raises(ThinBook):
        extract(t, 4)


def test_extract_all_counts_skips():
    trades = [_trade(Side.SELL, 1998, 4), _trade(Side.BUY, 2002, 1)]
    c = ExtractCounters()
    sets = extract_all(trades, 4, counters=c)
    assert c.thin_book == 2 and c.kept == 0 and all(len(s) == 0 for s in sets.values())


def test_normalize_identities_and_scaling():
    trades = [_trade(Side.SELL, 1998, k) for k in (3, 4, 5, 6)]
    raw = extract_all(trades, 3)[TradeType.FS]
    st = observation_stats(raw)
    norm = normalize(raw, st)
    assert norm.r.mean() == pytest.approx(1, abs=1e-12)
    assert norm.omega.mean() == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(norm.va, raw.va / st.mean_omega)
    np.testing.assert_allclose(norm.gb, raw.gb / abs(st.mean_r))
    np.testing.assert_array_equal(norm.spread, raw.spread)
    with pytest.raises(ValueError):
        normalize(norm)


def test_zero_mean_return_is_refused_and_type_excluded():
    trades = [_trade(Side.SELL, 2000, 1), _trade(Side.SELL, 2000, 1)]
    raw = extract_all(trades, 3)[TradeType.FS]
    with pytest.raises(ZeroMeanReturn):
        normalize(raw)
    f = build_features(trades, 3)
    assert "FS" in f.excluded and TradeType.FS not in f.sets


def test_feature_store_roundtrip(tmp_path):
    f = build_features(zi_trades(1), 5)
    obs = f.sets[TradeType.PB]
    p = tmp_path / "features_000001_PB.csv"
    write_features(p, obs, comment="config_hash=0")
    lines = p.read_text().splitlines()
    assert lines[1] == ",".join(feature_columns(5))
    back = read_features(p, TradeType.PB, "000001")
    for name in ("r", "omega", "spread", "va", "vb", "ga", "gb", "buckets"):
        np.testing.assert_array_equal(getattr(back, name), getattr(obs, name))
    with pytest.raises(ValueError, match="before aggregating"):
        write_features(tmp_path / "agg.csv", aggregate_by_size(obs))


def test_sidecar_has_stats_and_counters():
    f = build_features(zi_trades(1), 5, instrument="000001")
    side = f.sidecar()
    assert set(side["stats"]) == {"PB", "PS", "FB", "FS"}
    assert side["counters"]["kept"] == sum(len(s) for s in f.sets.values())


def test_take_and_concat():
    f = build_features(zi_trades(1), 5)
    obs = f.sets[TradeType.FB]
    head, tail = obs.take(slice(0, 10)), obs.take(slice(10, None))
    both = ObservationSet.concat([head, tail])
    np.testing.assert_array_equal(both.r, obs.r)
    assert both.kind is TradeType.FB and both.buckets.shape == (len(obs), N_BUCKETS)
