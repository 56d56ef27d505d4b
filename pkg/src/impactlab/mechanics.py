"""Closed-form immediate impact of a single order on a known book.

Given the pre-trade snapshot and an incoming limit order (price, size), the
post-trade best quotes follow mechanically from price-time priority:

* a sell that exhausts every crossing bid level rests its remainder at its
  limit price, so a1+ = price and b1+ = b_{n+1};
* a sell that fills leaves a1 unchanged and b1+ = b_{n+1}, where level n+1
  may be partially consumed (its price, not its depth, sets the quote).

Buys are the mirror image.  Everything is computed in exact tick fractions so
the result can be compared bit-for-bit with a replay through the engine.

A tie (limit price exactly equal to a level price) counts as crossing, as in
the matching engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .lob import BookSnapshot, Side
from .trades import TradeType, UndefinedReturn


class InsufficientDepth(ValueError):
    """The snapshot is too shallow to tell where the order stops."""


@dataclass(frozen=True)
class MechanicalOutcome:
    """Predicted outcome of one order.

    ``n`` counts fully consumed opposite levels (0 when the order fills inside
    level 1).  For partial fills the three terms are the spread, gap and
    residual parts of the return and sum to it; for fills only ``gap_term``
    is nonzero.
    """

    kind: TradeType
    n: int
    omega: int
    remainder: int
    r_exact: Fraction
    spread_term: Fraction
    gap_term: Fraction
    residual_term: Fraction

    @property
    def r_pred(self) -> float:
        return float(self.r_exact)


def _walk(prices, volumes, truncated, crosses, size):
    """Consume levels best-first.

    Returns (n_full, executed, remainder, next_price) where next_price is the
    price of the first level left standing (possibly partially consumed), or
    None if the side is emptied.
    """
    remaining = size
    n = 0
    for p, v in zip(prices, volumes):
        if not crosses(p):
            return n, size - remaining, remaining, p
        if remaining < v:
            return n, size, 0, p
        remaining -= v
        n += 1
        if remaining == 0:
            break
    # every captured level crossed and was consumed
    if n < len(prices):
        return n, size, 0, prices[n]
    if truncated:
        raise InsufficientDepth(f"need more than {len(prices)} levels to resolve the order")
    return n, size - remaining, remaining, None


def predict_sell(snapshot: BookSnapshot, pi: int, size: int) -> MechanicalOutcome:
    """Immediate return of a sell limit order at ``pi`` ticks for ``size`` shares."""
    if pi <= 0 or size <= 0:
        raise ValueError("price and size must be positive")
    a1, b1 = snapshot.best_ask, snapshot.best_bid
    if pi > b1:
        raise ValueError(f"sell at {pi} does not cross best bid {b1}")
    d = a1 + b1
    n, omega, rem, b_next = _walk(
        snapshot.bid_prices, snapshot.bid_volumes, snapshot.bid_truncated,
        lambda p: p >= pi, size,
    )
    if b_next is None:
        raise UndefinedReturn("sell empties the bid side")
    zero = Fraction(0)
    if rem:
        spread = Fraction(-(a1 - b1), d)
        gap = Fraction(-(b1 - b_next), d)
        resid = Fraction(-(b1 - pi), d)
        r = Fraction(pi + b_next - a1 - b1, d)
        assert spread + gap + resid == r
        return MechanicalOutcome(TradeType.PS, n, omega, rem, r, spread, gap, resid)
    r = Fraction(b_next - b1, d)
    return MechanicalOutcome(TradeType.FS, n, omega, 0, r, zero, r, zero)


def predict_buy(snapshot: BookSnapshot, pi: int, size: int) -> MechanicalOutcome:
    """Immediate return of a buy limit order at ``pi`` ticks for ``size`` shares."""
    if pi <= 0 or size <= 0:
        raise ValueError("price and size must be positive")
    a1, b1 = snapshot.best_ask, snapshot.best_bid
    if pi < a1:
        raise ValueError(f"buy at {pi} does not cross best ask {a1}")
    d = a1 + b1
    n, omega, rem, a_next = _walk(
        snapshot.ask_prices, snapshot.ask_volumes, snapshot.ask_truncated,
        lambda p: p <= pi, size,
    )
    if a_next is None:
        raise UndefinedReturn("buy empties the ask side")
    zero = Fraction(0)
    if rem:
        spread = Fraction(a1 - b1, d)
        gap = Fraction(a_next - a1, d)
        resid = Fraction(pi - a1, d)
        r = Fraction(a_next + pi - a1 - b1, d)
        assert spread + gap + resid == r
        return MechanicalOutcome(TradeType.PB, n, omega, rem, r, spread, gap, resid)
    r = Fraction(a_next - a1, d)
    return MechanicalOutcome(TradeType.FB, n, omega, 0, r, zero, r, zero)


def predict(snapshot: BookSnapshot, side, pi: int, size: int) -> MechanicalOutcome:
    if Side(side) is Side.SELL:
        return predict_sell(snapshot, pi, size)
    return predict_buy(snapshot, pi, size)


def ps_fs_gap(snapshot: BookSnapshot, pi: int) -> Fraction:
    """r_PS - r_FS for a sell at ``pi`` that stops at the same bid level.

    Equals -(a1 - pi)/(a1 + b1); its magnitude is at least the relative
    spread (a1 - b1)/(a1 + b1) whenever pi <= b1.
    """
    a1, b1 = snapshot.best_ask, snapshot.best_bid
    return Fraction(-(a1 - pi), a1 + b1)


def crossing_volume(snapshot: BookSnapshot, side, pi: int) -> Optional[int]:
    """Opposite-side volume at prices the order would cross, or None if the
    snapshot is truncated inside the crossing range."""
    if Side(side) is Side.SELL:
        prices, vols, trunc = snapshot.bid_prices, snapshot.bid_volumes, snapshot.bid_truncated
        ok = [v for p, v in zip(prices, vols) if p >= pi]
    else:
        prices, vols, trunc = snapshot.ask_prices, snapshot.ask_volumes, snapshot.ask_truncated
        ok = [v for p, v in zip(prices, vols) if p <= pi]
    if trunc and len(ok) == len(prices):
        return None
    return sum(ok)
