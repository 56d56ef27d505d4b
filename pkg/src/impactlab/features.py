"""Regression observations built from trade records.

Each observation carries the trade's return and size, the relative spread,
and L depths and L gaps on each side of the pre-trade book, plus a one-hot
ten-minute intraday bucket.  Observations are stored column-wise in an
:class:`ObservationSet`, one set per instrument and trade type.

Normalization divides returns by the per-type mean return, sizes and depths
by the per-type mean size, and gaps by the absolute mean return.  By default
spread and gaps are first expressed relative to a1 + b1, which makes every
regressor dimensionless; ``mode="raw"`` keeps them in price units.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, time
from typing import Iterable, Optional

import numpy as np

from .trades import TRADE_TYPES, TradeRecord, TradeType

logger = logging.getLogger(__name__)

N_BUCKETS = 24


class ThinBook(ValueError):
    """The pre-trade book has too few levels for the requested L."""


class ZeroMeanReturn(ValueError):
    """The mean return of a trade type is zero, so it cannot normalize."""


def intraday_bucket(ts: datetime | time) -> int:
    """Ten-minute bin index: 0-11 for 9:30-11:30, 12-23 for 13:00-15:00."""
    t = ts.time() if isinstance(ts, datetime) else ts
    us = ((t.hour * 60 + t.minute) * 60 + t.second) * 1_000_000 + t.microsecond
    bin_us = 600 * 1_000_000
    am, am_end = (9 * 60 + 30) * 60_000_000, (11 * 60 + 30) * 60_000_000
    pm, pm_end = 13 * 60 * 60_000_000, 15 * 60 * 60_000_000
    if am <= us < am_end:
        return (us - am) // bin_us
    if pm <= us < pm_end:
        return 12 + (us - pm) // bin_us
    raise ValueError(f"{t} is outside continuous trading")


@dataclass(frozen=True)
class RawObservation:
    r: float
    omega: int
    spread: float
    va: tuple[float, ...]
    vb: tuple[float, ...]
    ga: tuple[float, ...]
    gb: tuple[float, ...]
    bucket: int
    kind: TradeType
    instrument: str


def extract(trade: TradeRecord, levels: int, mode: str = "rel") -> RawObservation:
    """Read the determinants of one trade off its pre-trade snapshot.

    Needs ``levels + 1`` price levels per side (L gaps need L+1 prices) and a
    defined return.
    """
    pre = trade.pre
    r = trade.r_exact
    if pre is None or r is None:
        raise ValueError("trade has no defined return")
    if pre.n_ask < levels + 1 or pre.n_bid < levels + 1:
        raise ThinBook(f"book has {pre.n_ask}/{pre.n_bid} levels, need {levels + 1}")
    ga = pre.ask_gaps[:levels]
    gb = pre.bid_gaps[:levels]
    if mode == "rel":
        q = pre.quote_sum
        spread = pre.spread_ticks / q
        ga = tuple(g / q for g in ga)
        gb = tuple(g / q for g in gb)
    elif mode == "raw":
        tick = pre.tick_size
        spread = pre.spread_ticks * tick
        ga = tuple(g * tick for g in ga)
        gb = tuple(g * tick for g in gb)
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return RawObservation(
        r=float(r),
        omega=trade.omega,
        spread=spread,
        va=tuple(float(v) for v in pre.ask_volumes[:levels]),
        vb=tuple(float(v) for v in pre.bid_volumes[:levels]),
        ga=ga,
        gb=gb,
        bucket=intraday_bucket(trade.timestamp),
        kind=trade.type,
        instrument=trade.instrument,
    )


@dataclass
class ObservationSet:
    """Column-wise observations for one trade type.

    ``buckets`` is an (n, 24) matrix of bucket frequencies: one-hot for
    individual trades, group frequencies after aggregation.  ``weight`` counts
    how many trades each row stands for.
    """

    r: np.ndarray
    omega: np.ndarray
    spread: np.ndarray
    va: np.ndarray
    vb: np.ndarray
    ga: np.ndarray
    gb: np.ndarray
    buckets: np.ndarray
    instrument: np.ndarray
    weight: np.ndarray
    kind: Optional[TradeType] = None
    normalized: bool = False

    def __len__(self) -> int:
        return len(self.r)

    @property
    def levels(self) -> int:
        return self.va.shape[1]

    @property
    def bucket(self) -> np.ndarray:
        return np.argmax(self.buckets, axis=1)

    @classmethod
    def from_raw(cls, rows: list[RawObservation], levels: int, kind=None) -> "ObservationSet":
        n = len(rows)
        buckets = np.zeros((n, N_BUCKETS))
        buckets[np.arange(n), [o.bucket for o in rows]] = 1.0
        return cls(
            r=np.array([o.r for o in rows], dtype=float),
            omega=np.array([o.omega for o in rows], dtype=float),
            spread=np.array([o.spread for o in rows], dtype=float),
            va=np.array([o.va for o in rows], dtype=float).reshape(n, levels),
            vb=np.array([o.vb for o in rows], dtype=float).reshape(n, levels),
            ga=np.array([o.ga for o in rows], dtype=float).reshape(n, levels),
            gb=np.array([o.gb for o in rows], dtype=float).reshape(n, levels),
            buckets=buckets,
            instrument=np.array([o.instrument for o in rows], dtype=object),
            weight=np.ones(n),
            kind=kind if kind is not None else (rows[0].kind if rows else None),
        )

    def first_levels(self, levels: int) -> "ObservationSet":
        """View keeping only the first ``levels`` depth and gap columns."""
        if levels > self.levels:
            raise ValueError(f"set carries {self.levels} levels, asked for {levels}")
        if levels == self.levels:
            return self
        L = levels
        return ObservationSet(
            self.r, self.omega, self.spread, self.va[:, :L], self.vb[:, :L], self.ga[:, :L],
            self.gb[:, :L], self.buckets, self.instrument, self.weight, self.kind, self.normalized,
        )

    def take(self, idx) -> "ObservationSet":
        return ObservationSet(
            self.r[idx], self.omega[idx], self.spread[idx], self.va[idx], self.vb[idx],
            self.ga[idx], self.gb[idx], self.buckets[idx], self.instrument[idx],
            self.weight[idx], self.kind, self.normalized,
        )

    @classmethod
    def concat(cls, sets: list["ObservationSet"]) -> "ObservationSet":
        if not sets:
            raise ValueError("nothing to concatenate")
        if len({s.levels for s in sets}) != 1:
            raise ValueError("observation sets have different L")
        kinds = {s.kind for s in sets}
        cat = np.concatenate
        return cls(
            r=cat([s.r for s in sets]),
            omega=cat([s.omega for s in sets]),
            spread=cat([s.spread for s in sets]),
            va=cat([s.va for s in sets]),
            vb=cat([s.vb for s in sets]),
            ga=cat([s.ga for s in sets]),
            gb=cat([s.gb for s in sets]),
            buckets=cat([s.buckets for s in sets]),
            instrument=cat([s.instrument for s in sets]),
            weight=cat([s.weight for s in sets]),
            kind=kinds.pop() if len(kinds) == 1 else None,
            normalized=all(s.normalized for s in sets),
        )


@dataclass
class ExtractCounters:
    trades: int = 0
    kept: int = 0
    undefined_return: int = 0
    thin_book: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def extract_all(
    trades: Iterable[TradeRecord],
    levels: int,
    mode: str = "rel",
    counters: Optional[ExtractCounters] = None,
) -> dict[TradeType, ObservationSet]:
    """Extract every usable trade, grouped by trade type."""
    c = counters if counters is not None else ExtractCounters()
    rows: dict[TradeType, list[RawObservation]] = {t: [] for t in TRADE_TYPES}
    for tr in trades:
        c.trades += 1
        if tr.pre is None or tr.post is None:
            c.undefined_return += 1
            continue
        try:
            obs = extract(tr, levels, mode)
        except ThinBook:
            c.thin_book += 1
            continue
        rows[tr.type].append(obs)
        c.kept += 1
    return {t: ObservationSet.from_raw(rows[t], levels, kind=t) for t in TRADE_TYPES}


@dataclass(frozen=True)
class NormStats:
    mean_r: float
    mean_omega: float
    n: int


def observation_stats(obs: ObservationSet) -> NormStats:
    """Mean return and mean size over the observations themselves."""
    if len(obs) == 0:
        raise ValueError("empty observation set")
    return NormStats(
        mean_r=math.fsum(obs.r) / len(obs),
        mean_omega=math.fsum(obs.omega) / len(obs),
        n=len(obs),
    )


def normalize(obs: ObservationSet, stats: Optional[NormStats] = None) -> ObservationSet:
    """Scale a raw set into dimensionless regression variables."""
    if obs.normalized:
        raise ValueError("observations are already normalized")
    stats = stats or observation_stats(obs)
    if stats.mean_r == 0:
        raise ZeroMeanReturn(f"mean return of {obs.kind} is zero")
    mr, mw = stats.mean_r, stats.mean_omega
    return ObservationSet(
        r=obs.r / mr,
        omega=obs.omega / mw,
        spread=obs.spread.copy(),
        va=obs.va / mw,
        vb=obs.vb / mw,
        ga=obs.ga / abs(mr),
        gb=obs.gb / abs(mr),
        buckets=obs.buckets.copy(),
        instrument=obs.instrument.copy(),
        weight=obs.weight.copy(),
        kind=obs.kind,
        normalized=True,
    )


@dataclass
class InstrumentFeatures:
    instrument: str
    levels: int
    mode: str
    sets: dict[TradeType, ObservationSet]
    stats: dict[TradeType, NormStats]
    excluded: list[str] = field(default_factory=list)
    counters: Optional[ExtractCounters] = None

    def sidecar(self) -> dict:
        return {
            "instrument": self.instrument,
            "levels": self.levels,
            "mode": self.mode,
            "stats": {
                t.value: {"mean_r": s.mean_r, "mean_omega": s.mean_omega, "n": s.n}
                for t, s in self.stats.items()
            },
            "excluded_types": self.excluded,
            "counters": self.counters.as_dict() if self.counters else {},
        }


def build_features(
    trades: Iterable[TradeRecord], levels: int, mode: str = "rel", instrument: str = ""
) -> InstrumentFeatures:
    """Two-pass pipeline for one instrument: extract, then normalize each type
    by its own means.  Types with no observations or a zero mean return are
    excluded with a warning."""
    c = ExtractCounters()
    raw = extract_all(trades, levels, mode, c)
    sets, stats, excluded = {}, {}, []
    for t, obs in raw.items():
        if len(obs) == 0:
            excluded.append(t.value)
            continue
        st = observation_stats(obs)
        if st.mean_r == 0:
            logger.warning("%s %s: mean return is zero, type excluded", instrument, t.value)
            excluded.append(t.value)
            continue
        sets[t] = normalize(obs, st)
        stats[t] = st
    return InstrumentFeatures(instrument, levels, mode, sets, stats, excluded, c)


def feature_columns(levels: int) -> list[str]:
    cols = ["r_norm", "omega_norm", "spread_rel"]
    for prefix in ("VA", "VB", "GA", "GB"):
        cols += [f"{prefix}{i}" for i in range(1, levels + 1)]
    return cols + ["bucket"]


def write_features(path, obs: ObservationSet, comment: Optional[str] = None) -> None:
    """Write a normalized, unaggregated set to the feature-store CSV."""
    if np.any(obs.weight != 1):
        raise ValueError("feature CSVs hold individual trades; write before aggregating")
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(feature_columns(obs.levels))
        bucket = obs.bucket
        for i in range(len(obs)):
            row = [obs.r[i], obs.omega[i], obs.spread[i], *obs.va[i], *obs.vb[i], *obs.ga[i], *obs.gb[i]]
            w.writerow([repr(float(x)) for x in row] + [int(bucket[i])])


def read_features(path, kind: Optional[TradeType] = None, instrument: str = "") -> ObservationSet:
    with open(path, newline="") as fh:
        rd = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rd, [])
        levels = (len(header) - 4) // 4
        if header != feature_columns(levels):
            raise ValueError(f"{path}: not a feature file (header {header[:4]}...)")
        data = [row for row in rd if row]
    n = len(data)
    arr = np.array([[float(x) for x in row[:-1]] for row in data], dtype=float).reshape(n, 3 + 4 * levels)
    buckets = np.zeros((n, N_BUCKETS))
    buckets[np.arange(n), [int(row[-1]) for row in data]] = 1.0
    L = levels
    return ObservationSet(
        r=arr[:, 0], omega=arr[:, 1], spread=arr[:, 2],
        va=arr[:, 3:3 + L], vb=arr[:, 3 + L:3 + 2 * L],
        ga=arr[:, 3 + 2 * L:3 + 3 * L], gb=arr[:, 3 + 3 * L:3 + 4 * L],
        buckets=buckets,
        instrument=np.array([instrument] * n, dtype=object),
        weight=np.ones(n),
        kind=kind,
        normalized=True,
    )


def write_sidecar(path, features: InstrumentFeatures) -> None:
    with open(path, "w") as fh:
        json.dump(features.sidecar(), fh, indent=2, sort_keys=True)
        fh.write("\n")
