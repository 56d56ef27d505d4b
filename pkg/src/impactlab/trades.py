"""Trade typology (PB/PS/FB/FS), immediate returns and per-stock statistics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional

from .lob import BookSnapshot, Execution, Side

logger = logging.getLogger(__name__)


class TradeType(str, Enum):
    PB = "PB"
    PS = "PS"
    FB = "FB"
    FS = "FS"

    @property
    def side(self) -> Side:
        return Side.BUY if self in (TradeType.PB, TradeType.FB) else Side.SELL

    @property
    def partial(self) -> bool:
        return self in (TradeType.PB, TradeType.PS)


TRADE_TYPES = (TradeType.PB, TradeType.PS, TradeType.FB, TradeType.FS)


class UndefinedReturn(ValueError):
    """One side of the book is empty, so the mid-quote does not exist."""


def classify(side: Side | str, remainder: int) -> TradeType:
    side = Side(side)
    if side is Side.BUY:
        return TradeType.PB if remainder > 0 else TradeType.FB
    return TradeType.PS if remainder > 0 else TradeType.FS


def immediate_return_exact(pre: Optional[BookSnapshot], post: Optional[BookSnapshot]) -> Fraction:
    """Relative mid-quote change (a1+ + b1+ - a1- - b1-) / (a1- + b1-), exactly."""
    if pre is None or post is None:
        raise UndefinedReturn("mid-quote undefined on a one-sided book")
    return Fraction(post.quote_sum - pre.quote_sum, pre.quote_sum)


def immediate_return(pre: Optional[BookSnapshot], post: Optional[BookSnapshot]) -> float:
    return float(immediate_return_exact(pre, post))


@dataclass(frozen=True)
class TradeRecord:
    """One incoming order's execution outcome and the book around it.

    ``r`` is None when either snapshot is missing (one-sided book).
    """

    type: TradeType
    omega: int
    remainder: int
    price: int
    size: int
    pre: Optional[BookSnapshot]
    post: Optional[BookSnapshot]
    timestamp: datetime
    instrument: str
    n_levels_eaten: int
    order_id: str = ""
    executions: tuple[Execution, ...] = field(default=(), repr=False)

    @property
    def side(self) -> Side:
        return self.type.side

    @property
    def r_exact(self) -> Optional[Fraction]:
        try:
            return immediate_return_exact(self.pre, self.post)
        except UndefinedReturn:
            return None

    @property
    def r(self) -> Optional[float]:
        x = self.r_exact
        return None if x is None else float(x)


@dataclass
class StockStats:
    instrument: str
    n_trades: int
    counts: dict[TradeType, int]
    mean_r: dict[TradeType, Optional[float]]
    mean_omega: dict[TradeType, Optional[float]]
    zero_fraction: dict[TradeType, Optional[float]]
    n_undefined: int = 0

    @property
    def partial_fraction(self) -> float:
        return (self.counts[TradeType.PB] + self.counts[TradeType.PS]) / self.n_trades

    @property
    def partial_symmetry(self) -> Optional[float]:
        """<r_PB> + <r_PS>; near zero when buy and sell impacts are symmetric."""
        a, b = self.mean_r[TradeType.PB], self.mean_r[TradeType.PS]
        return None if a is None or b is None else a + b

    @property
    def filled_symmetry(self) -> Optional[float]:
        a, b = self.mean_r[TradeType.FB], self.mean_r[TradeType.FS]
        return None if a is None or b is None else a + b

    def row(self) -> dict:
        def fmt(x):
            return "" if x is None else repr(float(x))

        out = {"code": self.instrument}
        for t in TRADE_TYPES:
            out[f"r_{t.value}"] = fmt(self.mean_r[t])
        out["N"] = self.n_trades
        out["F"] = repr(float(self.partial_fraction))
        return out


def stock_stats(trades: Iterable[TradeRecord], instrument: Optional[str] = None) -> StockStats:
    """Per-type mean return, mean size and zero-return fraction for one stock.

    Trades with an undefined return still count towards N, F and the size
    means but are left out of every return statistic.
    """
    counts = {t: 0 for t in TRADE_TYPES}
    r_n = {t: 0 for t in TRADE_TYPES}
    zeros = {t: 0 for t in TRADE_TYPES}
    w_sum = {t: 0 for t in TRADE_TYPES}
    undefined = 0
    rs: dict[TradeType, list[float]] = {t: [] for t in TRADE_TYPES}
    for tr in trades:
        if instrument is None:
            instrument = tr.instrument
        counts[tr.type] += 1
        w_sum[tr.type] += tr.omega
        r = tr.r_exact
        if r is None:
            undefined += 1
            continue
        rs[tr.type].append(float(r))
        r_n[tr.type] += 1
        if r == 0:
            zeros[tr.type] += 1
    n = sum(counts.values())
    if n == 0:
        raise ValueError("stock_stats needs at least one trade")
    if undefined:
        logger.info("%s: %d trades with undefined return excluded", instrument, undefined)
    r_sum = {t: math.fsum(rs[t]) for t in TRADE_TYPES}
    return StockStats(
        instrument=instrument or "",
        n_trades=n,
        counts=counts,
        mean_r={t: (r_sum[t] / r_n[t] if r_n[t] else None) for t in TRADE_TYPES},
        mean_omega={t: (w_sum[t] / counts[t] if counts[t] else None) for t in TRADE_TYPES},
        zero_fraction={t: (zeros[t] / r_n[t] if r_n[t] else None) for t in TRADE_TYPES},
        n_undefined=undefined,
    )


STATS_COLUMNS = ["code", "r_PB", "r_PS", "r_FB", "r_FS", "N", "F"]


def write_stats_csv(path, stats: Iterable[StockStats], comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.DictWriter(fh, fieldnames=STATS_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in stats:
            w.writerow(s.row())
