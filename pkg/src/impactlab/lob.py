"""Limit order book with price-time priority matching.

Prices are integer tick counts and volumes are integer share counts, so every
comparison inside the book is exact.  Conversion to currency units happens at
the edges (parsing, reporting) using the instrument's tick size.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from itertools import islice
from typing import Hashable, Optional

from sortedcontainers import SortedDict


class Side(str, Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class OrderRejected(ValueError):
    """An incoming order violated a book precondition (bad size, duplicate id)."""


@dataclass(frozen=True)
class Execution:
    price: int
    volume: int
    resting_order_id: Hashable


@dataclass(frozen=True)
class Fill:
    """Outcome of one incoming limit order."""

    side: Side
    price: int
    size: int
    executions: tuple[Execution, ...]
    remainder: int
    levels_cleared: int

    @property
    def executed(self) -> int:
        return self.size - self.remainder


class _Level:
    __slots__ = ("orders", "total")

    def __init__(self) -> None:
        # dicts keep insertion order, which is the time priority within the level
        self.orders: dict[Hashable, int] = {}
        self.total = 0


@dataclass(frozen=True)
class BookSnapshot:
    """Immutable top-of-book view.

    ``ask_prices[0]`` is the best ask and ``bid_prices[0]`` the best bid.  A
    side holding fewer than ``depth`` levels records only the levels that
    exist; ``*_truncated`` tells whether the book held more levels than were
    captured.
    """

    ask_prices: tuple[int, ...]
    ask_volumes: tuple[int, ...]
    bid_prices: tuple[int, ...]
    bid_volumes: tuple[int, ...]
    depth: int
    ask_truncated: bool = False
    bid_truncated: bool = False
    tick_size: float = 0.01

    @property
    def n_ask(self) -> int:
        return len(self.ask_prices)

    @property
    def n_bid(self) -> int:
        return len(self.bid_prices)

    @property
    def best_ask(self) -> int:
        return self.ask_prices[0]

    @property
    def best_bid(self) -> int:
        return self.bid_prices[0]

    @property
    def quote_sum(self) -> int:
        """a1 + b1 in ticks; twice the mid-price."""
        return self.ask_prices[0] + self.bid_prices[0]

    @property
    def mid(self) -> Fraction:
        return Fraction(self.quote_sum, 2)

    @property
    def spread_ticks(self) -> int:
        return self.ask_prices[0] - self.bid_prices[0]

    @property
    def spread_rel_exact(self) -> Fraction:
        return Fraction(self.spread_ticks, self.quote_sum)

    @property
    def spread_rel(self) -> float:
        return self.spread_ticks / self.quote_sum

    @property
    def ask_gaps(self) -> tuple[int, ...]:
        """GA_i = a_{i+1} - a_i for every pair of captured levels."""
        p = self.ask_prices
        return tuple(p[i + 1] - p[i] for i in range(len(p) - 1))

    @property
    def bid_gaps(self) -> tuple[int, ...]:
        """GB_i = b_i - b_{i+1} for every pair of captured levels."""
        p = self.bid_prices
        return tuple(p[i] - p[i + 1] for i in range(len(p) - 1))

    def mirrored(self) -> "BookSnapshot":
        """Reflect prices p -> (a1 + b1) - p, swapping the two sides.

        The reflection keeps a1 + b1 fixed, so a buy on this book and the
        matching sell on the mirror have returns of opposite sign.
        """
        k = self.quote_sum
        return BookSnapshot(
            ask_prices=tuple(k - p for p in self.bid_prices),
            ask_volumes=self.bid_volumes,
            bid_prices=tuple(k - p for p in self.ask_prices),
            bid_volumes=self.ask_volumes,
            depth=self.depth,
            ask_truncated=self.bid_truncated,
            bid_truncated=self.ask_truncated,
            tick_size=self.tick_size,
        )


class OrderBook:
    """Two-sided price ladder with FIFO queues per price level.

    Not thread-safe: one book is mutated by a single replay thread.
    Snapshots are immutable and can be shared freely.
    """

    def __init__(self, tick_size: float = 0.01, lot_size: int = 1):
        self.tick_size = tick_size
        self.lot_size = lot_size
        self._asks: SortedDict = SortedDict()
        self._bids: SortedDict = SortedDict()
        self._index: dict[Hashable, tuple[Side, int]] = {}

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, order_id: Hashable) -> bool:
        return order_id in self._index

    def _ladder(self, side: Side) -> SortedDict:
        return self._bids if side is Side.BUY else self._asks

    @property
    def best_ask(self) -> Optional[int]:
        return self._asks.peekitem(0)[0] if self._asks else None

    @property
    def best_bid(self) -> Optional[int]:
        return self._bids.peekitem(-1)[0] if self._bids else None

    def level_count(self, side: Side) -> int:
        return len(self._ladder(side))

    def levels(self, side: Side) -> list[tuple[int, int]]:
        """All (price, volume) levels on one side, best first."""
        ladder = self._ladder(side)
        keys = reversed(ladder.keys()) if side is Side.BUY else iter(ladder.keys())
        return [(p, ladder[p].total) for p in keys]

    def queue(self, side: Side, price: int) -> list[tuple[Hashable, int]]:
        level = self._ladder(side).get(price)
        return list(level.orders.items()) if level else []

    def submit(self, side: Side, price: int, size: int, order_id: Hashable) -> Fill:
        """Execute an incoming limit order and rest any remainder at ``price``."""
        side = Side(side)
        if size <= 0:
            raise OrderRejected(f"order {order_id!r}: size must be positive, got {size}")
        if price <= 0:
            raise OrderRejected(f"order {order_id!r}: price must be positive, got {price}")
        if order_id in self._index:
            raise OrderRejected(f"duplicate order id {order_id!r}")

        remaining = size
        executions: list[Execution] = []
        cleared = 0
        if side is Side.SELL:
            ladder = self._bids
            while remaining and ladder:
                best, level = ladder.peekitem(-1)
                if best < price:
                    break
                remaining = self._eat(level, best, remaining, executions)
                if not level.orders:
                    del ladder[best]
                    cleared += 1
        else:
            ladder = self._asks
            while remaining and ladder:
                best, level = ladder.peekitem(0)
                if best > price:
                    break
                remaining = self._eat(level, best, remaining, executions)
                if not level.orders:
                    del ladder[best]
                    cleared += 1

        if remaining:
            own = self._ladder(side)
            level = own.get(price)
            if level is None:
                level = own[price] = _Level()
            level.orders[order_id] = remaining
            level.total += remaining
            self._index[order_id] = (side, price)

        return Fill(side, price, size, tuple(executions), remaining, cleared)

    def _eat(self, level: _Level, price: int, remaining: int, out: list[Execution]) -> int:
        orders = level.orders
        while remaining and orders:
            oid = next(iter(orders))
            avail = orders[oid]
            take = min(avail, remaining)
            out.append(Execution(price, take, oid))
            remaining -= take
            level.total -= take
            if take == avail:
                del orders[oid]
                del self._index[oid]
            else:
                orders[oid] = avail - take
        return remaining

    def cancel(self, order_id: Hashable) -> bool:
        """Remove a resting order.  Returns False (a no-op) for unknown ids."""
        loc = self._index.pop(order_id, None)
        if loc is None:
            return False
        side, price = loc
        ladder = self._ladder(side)
        level = ladder[price]
        level.total -= level.orders.pop(order_id)
        if not level.orders:
            del ladder[price]
        return True

    def clear(self) -> None:
        self._asks.clear()
        self._bids.clear()
        self._index.clear()

    def snapshot(self, depth: int) -> Optional[BookSnapshot]:
        """Top ``depth`` levels per side, or None when either side is empty."""
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if not self._asks or not self._bids:
            return None
        asks = self._asks
        bids = self._bids
        ask_keys = list(islice(asks.keys(), depth))
        bid_keys = list(islice(reversed(bids.keys()), depth))
        return BookSnapshot(
            ask_prices=tuple(ask_keys),
            ask_volumes=tuple(asks[p].total for p in ask_keys),
            bid_prices=tuple(bid_keys),
            bid_volumes=tuple(bids[p].total for p in bid_keys),
            depth=depth,
            ask_truncated=len(asks) > depth,
            bid_truncated=len(bids) > depth,
            tick_size=self.tick_size,
        )

    def check_invariants(self) -> None:
        """Raise AssertionError if the ladder is inconsistent.  Used by tests."""
        seen = set()
        for side, ladder in ((Side.BUY, self._bids), (Side.SELL, self._asks)):
            for price, level in ladder.items():
                assert price > 0
                assert level.orders, f"empty level {price} left on {side}"
                assert level.total == sum(level.orders.values())
                for oid, vol in level.orders.items():
                    assert vol > 0
                    assert oid not in seen
                    seen.add(oid)
                    assert self._index[oid] == (side, price)
        assert len(seen) == len(self._index)
        if self._asks and self._bids:
            assert self.best_bid < self.best_ask


def book_from_levels(
    bids: list[tuple[int, int]],
    asks: list[tuple[int, int]],
    tick_size: float = 0.01,
) -> OrderBook:
    """Build a book holding one order per (price, volume) level.

    Order ids are ``"b0", "b1", ...`` and ``"a0", ...`` in the given order.
    """
    book = OrderBook(tick_size=tick_size)
    for i, (p, v) in enumerate(bids):
        book.submit(Side.BUY, p, v, f"b{i}")
    for i, (p, v) in enumerate(asks):
        book.submit(Side.SELL, p, v, f"a{i}")
    return book


def to_ticks(price: str | float, tick_size: float) -> int:
    """Convert a decimal price to integer ticks, refusing off-grid prices."""
    q = Decimal(str(price)) / Decimal(str(tick_size))
    if q != q.to_integral_value():
        raise ValueError(f"price {price} is not a multiple of tick size {tick_size}")
    return int(q)


def from_ticks(ticks: int, tick_size: float) -> float:
    return float(Decimal(ticks) * Decimal(str(tick_size)))
