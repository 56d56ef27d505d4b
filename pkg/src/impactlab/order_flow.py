"""Order-flow files, the exchange session calendar and book replay.

CSV layout (UTF-8, optionally gzip-compressed when the file name ends in
``.gz``)::

    timestamp,seq,action,side,price,size,order_id,instrument
    2003-06-02T09:31:05,1042,S,B,9.99,500,ord-77,000001

``action`` is ``S`` (submit) or ``C`` (cancel); ``side`` is ``B`` or ``S``.
Cancels may leave side, price and size blank.
"""

from __future__ import annotations

import csv
import gzip
import io
import logging
from contextlib import ExitStack
from dataclasses import dataclass, field
from datetime import datetime, time
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .lob import OrderBook, OrderRejected, Side, from_ticks, to_ticks
from .trades import TradeRecord, classify

logger = logging.getLogger(__name__)

HEADER = ["timestamp", "seq", "action", "side", "price", "size", "order_id", "instrument"]


class OrderFlowError(ValueError):
    """Malformed record or out-of-order stream."""


class Action(str, Enum):
    SUBMIT = "S"
    CANCEL = "C"


@dataclass(frozen=True)
class OrderEvent:
    timestamp: datetime
    seq: int
    action: Action
    side: Optional[Side]
    price: Optional[int]
    size: Optional[int]
    order_id: str
    instrument: str


class SessionPhase(str, Enum):
    CLOSED = "closed"
    CALL_AUCTION = "call_auction"
    COOLING = "cooling"
    CONTINUOUS_AM = "continuous_am"
    FREEZE = "freeze"
    CONTINUOUS_PM = "continuous_pm"

    @property
    def continuous(self) -> bool:
        return self in (SessionPhase.CONTINUOUS_AM, SessionPhase.CONTINUOUS_PM)


# each boundary belongs to the phase that starts there
_SCHEDULE = (
    (time(9, 15), SessionPhase.CALL_AUCTION),
    (time(9, 25), SessionPhase.COOLING),
    (time(9, 30), SessionPhase.CONTINUOUS_AM),
    (time(11, 30), SessionPhase.FREEZE),
    (time(13, 0), SessionPhase.CONTINUOUS_PM),
    (time(15, 0), SessionPhase.CLOSED),
)


def session_phase(ts: datetime | time) -> SessionPhase:
    t = ts.time() if isinstance(ts, datetime) else ts
    phase = SessionPhase.CLOSED
    for start, p in _SCHEDULE:
        if t >= start:
            phase = p
    return phase


_SIDES = {"B": Side.BUY, "S": Side.SELL}


def parse_event(line: str, tick_size: float = 0.01, lineno: Optional[int] = None) -> OrderEvent:
    """Parse one CSV record (without the header)."""
    where = f"line {lineno}: " if lineno is not None else ""
    fields = next(csv.reader([line.rstrip("\r\n")]))
    if len(fields) != len(HEADER):
        raise OrderFlowError(f"{where}expected {len(HEADER)} fields, got {len(fields)}")
    ts_s, seq_s, act_s, side_s, price_s, size_s, oid, inst = (f.strip() for f in fields)
    try:
        ts = datetime.fromisoformat(ts_s)
    except ValueError:
        raise OrderFlowError(f"{where}bad timestamp {ts_s!r}") from None
    try:
        seq = int(seq_s)
    except ValueError:
        raise OrderFlowError(f"{where}bad seq {seq_s!r}") from None
    try:
        action = Action(act_s)
    except ValueError:
        raise OrderFlowError(f"{where}bad action {act_s!r}") from None
    if not oid:
        raise OrderFlowError(f"{where}missing order_id")

    side = price = size = None
    if side_s:
        if side_s not in _SIDES:
            raise OrderFlowError(f"{where}bad side {side_s!r}")
        side = _SIDES[side_s]
    if price_s:
        try:
            price = to_ticks(price_s, tick_size)
        except (ValueError, ArithmeticError) as exc:
            raise OrderFlowError(f"{where}bad price {price_s!r}: {exc}") from None
        if price <= 0:
            raise OrderFlowError(f"{where}price must be positive")
    if size_s:
        try:
            size = int(size_s)
        except ValueError:
            raise OrderFlowError(f"{where}bad size {size_s!r}") from None
        if size <= 0:
            raise OrderFlowError(f"{where}size must be positive, got {size}")

    if action is Action.SUBMIT and (side is None or price is None or size is None):
        raise OrderFlowError(f"{where}submit needs side, price and size")
    return OrderEvent(ts, seq, action, side, price, size, oid, inst)


def format_event(ev: OrderEvent, tick_size: float = 0.01) -> str:
    side = "" if ev.side is None else ("B" if ev.side is Side.BUY else "S")
    price = "" if ev.price is None else f"{from_ticks(ev.price, tick_size):.{_decimals(tick_size)}f}"
    size = "" if ev.size is None else str(ev.size)
    ts = ev.timestamp.isoformat()
    return ",".join([ts, str(ev.seq), ev.action.value, side, price, size, ev.order_id, ev.instrument])


def _decimals(tick_size: float) -> int:
    s = repr(tick_size)
    return len(s.split(".")[1]) if "." in s else 0


def _open_text(path: Path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def read_events(path, tick_size: float = 0.01) -> Iterator[OrderEvent]:
    """Stream events from an order-flow file, checking that seq increases."""
    with _open_text(path) as fh:
        line = fh.readline()
        while line.startswith("#"):  # provenance comments
            line = fh.readline()
        header = line.strip().split(",")
        if header != HEADER:
            raise OrderFlowError(f"{path}: unexpected header {header}")
        last = None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            ev = parse_event(line, tick_size, lineno)
            if last is not None and ev.seq <= last:
                raise OrderFlowError(f"line {lineno}: seq {ev.seq} not after {last}")
            last = ev.seq
            yield ev


def write_events(
    path, events: Iterable[OrderEvent], tick_size: float = 0.01, comment: Optional[str] = None
) -> None:
    """Write events in seq order; ``comment`` becomes a leading ``#`` line."""
    path = Path(path)
    with ExitStack() as stack:
        if path.suffix == ".gz":
            # no name and mtime=0 in the gzip header keep the bytes stable
            raw = stack.enter_context(open(path, "wb"))
            gz = stack.enter_context(gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0))
            fh = stack.enter_context(io.TextIOWrapper(gz, encoding="utf-8", newline=""))
        else:
            fh = stack.enter_context(open(path, "w", encoding="utf-8", newline=""))
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(HEADER) + "\n")
        for ev in events:
            fh.write(format_event(ev, tick_size) + "\n")

@dataclass
class ReplayCounters:
    events: int = 0
    submits: int = 0
    cancels: int = 0
    trades: int = 0
    rejected: int = 0
    cancel_noop: int = 0
    auction_queued: int = 0
    auction_cancelled: int = 0
    ignored_cooling_cancel: int = 0
    ignored_freeze: int = 0
    ignored_closed: int = 0
    open_crosses: int = 0
    warnings: list[str] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("warnings")
        return d


def replay(
    events: Iterable[OrderEvent],
    levels: int = 5,
    tick_size: float = 0.01,
    counters: Optional[ReplayCounters] = None,
) -> Iterator[TradeRecord]:
    """Run one instrument's events through a book and yield a TradeRecord for
    every continuous-session submit that executes.

    Snapshots are captured ``levels + 1`` deep so that ``levels`` gaps per side
    are available downstream.

    Session handling:

    * call auction (9:15-9:25) and cooling (9:25-9:30): submits are queued and
      inserted in seq order when continuous trading opens; any crossing among
      them executes silently.  Auction cancels drop queued orders; cooling
      cancels are ignored.
    * freeze (11:30-13:00) and closed: events are ignored.
    * at 15:00, or when the date changes, the book is cleared.
    """
    c = counters if counters is not None else ReplayCounters()
    book = OrderBook(tick_size=tick_size)
    depth = levels + 1
    queue: dict[str, OrderEvent] = {}
    day = None
    closed_today = False

    def warn(msg: str) -> None:
        c.warnings.append(msg)
        logger.debug(msg)

    for ev in events:
        c.events += 1
        if ev.timestamp.date() != day:
            day = ev.timestamp.date()
            book.clear()
            queue.clear()
            closed_today = False
        phase = session_phase(ev.timestamp)

        if phase is SessionPhase.CLOSED:
            if ev.timestamp.time() >= time(15, 0) and not closed_today:
                book.clear()
                queue.clear()
                closed_today = True
            c.ignored_closed += 1
            continue
        if phase is SessionPhase.FREEZE:
            c.ignored_freeze += 1
            continue
        if phase in (SessionPhase.CALL_AUCTION, SessionPhase.COOLING):
            if ev.action is Action.SUBMIT:
                queue[ev.order_id] = ev
                c.auction_queued += 1
            elif phase is SessionPhase.CALL_AUCTION and queue.pop(ev.order_id, None) is not None:
                c.auction_cancelled += 1
            else:
                c.ignored_cooling_cancel += 1
            continue

        if queue:
            for qev in queue.values():
                try:
                    fill = book.submit(qev.side, qev.price, qev.size, qev.order_id)
                except OrderRejected as exc:
                    c.rejected += 1
                    warn(f"seq {qev.seq}: {exc}")
                    continue
                if fill.executions:
                    c.open_crosses += 1
            queue.clear()

        if ev.action is Action.CANCEL:
            c.cancels += 1
            if not book.cancel(ev.order_id):
                c.cancel_noop += 1
            continue

        c.submits += 1
        crosses = (
            book.best_bid is not None and ev.price <= book.best_bid
            if ev.side is Side.SELL
            else book.best_ask is not None and ev.price >= book.best_ask
        )
        pre = book.snapshot(depth) if crosses else None
        try:
            fill = book.submit(ev.side, ev.price, ev.size, ev.order_id)
        except OrderRejected as exc:
            c.rejected += 1
            warn(f"seq {ev.seq}: {exc}")
            continue
        if not fill.executions:
            continue
        c.trades += 1
        yield TradeRecord(
            type=classify(ev.side, fill.remainder),
            omega=fill.executed,
            remainder=fill.remainder,
            price=ev.price,
            size=ev.size,
            pre=pre,
            post=book.snapshot(depth),
            timestamp=ev.timestamp,
            instrument=ev.instrument,
            n_levels_eaten=fill.levels_cleared,
            order_id=ev.order_id,
            executions=fill.executions,
        )
