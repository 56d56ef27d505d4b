"""Synthetic inputs with known answers.

* :func:`scripted_scenario` -- small hand-checked books with one incoming order.
* :func:`zero_intelligence_flow` -- a seeded stream of random limit orders,
  marketable orders and cancels for one trading day.
* :func:`model_observations` -- regression rows drawn from the impact model
  itself, for calibration recovery tests.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta
from fractions import Fraction
from typing import Optional

import numpy as np

from .features import N_BUCKETS, ObservationSet
from .lob import OrderBook, Side, book_from_levels
from .mechanics import MechanicalOutcome
from .order_flow import Action, OrderEvent
from .regression import LOGARITHMIC, POWER_LAW
from .trades import TradeType


# --------------------------------------------------------------------------
# scripted scenarios

@dataclass
class Scenario:
    name: str
    bids: list[tuple[int, int]]
    asks: list[tuple[int, int]]
    side: Side
    price: int
    size: int
    expected: MechanicalOutcome
    tick_size: float = 0.01

    def book(self) -> OrderBook:
        return book_from_levels(self.bids, self.asks, self.tick_size)


# Prices in ticks of 0.005: 2000 = 10.00, 1995 = 9.975, 2002 = 10.01.
_FIG1_BIDS = [(2000, 2), (1998, 3), (1996, 1), (1994, 5), (1992, 2)]
_FIG1_ASKS = [(2002, 3), (2004, 2), (2006, 4), (2008, 1), (2010, 2)]
_Q = 2002 + 2000


def _outcome(kind, n, omega, rem, r, spread=0, gap=None, resid=0, den=_Q):
    r = Fraction(r, den)
    gap = r if gap is None else Fraction(gap, den)
    return MechanicalOutcome(kind, n, omega, rem, r, Fraction(spread, den), gap, Fraction(resid, den))


def _base_scenarios() -> dict[str, Scenario]:
    return {
        # sell 7 at 9.975 eats 10.00x2, 9.99x3, 9.98x1; 1 share rests as the new best ask
        "fig1_ps": Scenario(
            "fig1_ps", _FIG1_BIDS, _FIG1_ASKS, Side.SELL, 1995, 7,
            _outcome(TradeType.PS, 3, 6, 1, -13, spread=-2, gap=-6, resid=-5), 0.005,
        ),
        # sell 5 at 9.98 clears exactly two bid levels; best bid drops to 9.98
        "fig1_fs": Scenario(
            "fig1_fs", _FIG1_BIDS, _FIG1_ASKS, Side.SELL, 1996, 5,
            _outcome(TradeType.FS, 2, 5, 0, -4), 0.005,
        ),
        # sell 1 at 10.00 fills inside the first bid level: quotes unchanged
        "level1_fs": Scenario(
            "level1_fs", _FIG1_BIDS, _FIG1_ASKS, Side.SELL, 2000, 1,
            _outcome(TradeType.FS, 0, 1, 0, 0), 0.005,
        ),
        # buy 4 at 10.02 takes the whole 10.02 level; best ask moves to 10.03
        "exact_fill": Scenario(
            "exact_fill", [(1000, 5)], [(1002, 4), (1003, 6)], Side.BUY, 1002, 4,
            _outcome(TradeType.FB, 1, 4, 0, 1, den=2002), 0.01,
        ),
        # sell 20 at 9.955 sweeps five bid levels (13 shares), 7 rest at 9.955
        "deep_sweep": Scenario(
            "deep_sweep", _FIG1_BIDS + [(1990, 4)], _FIG1_ASKS, Side.SELL, 1991, 20,
            _outcome(TradeType.PS, 5, 13, 7, -21, spread=-2, gap=-10, resid=-9), 0.005,
        ),
    }


_MIRROR_KIND = {TradeType.PS: TradeType.PB, TradeType.PB: TradeType.PS,
                TradeType.FS: TradeType.FB, TradeType.FB: TradeType.FS}


def _mirror(s: Scenario) -> Scenario:
    k = max(p for p, _ in s.bids) + min(p for p, _ in s.asks)
    e = s.expected
    exp = MechanicalOutcome(
        _MIRROR_KIND[e.kind], e.n, e.omega, e.remainder, -e.r_exact,
        -e.spread_term, -e.gap_term, -e.residual_term,
    )
    return Scenario(
        s.name + "_mirror",
        bids=[(k - p, v) for p, v in s.asks],
        asks=[(k - p, v) for p, v in s.bids],
        side=s.side.opposite,
        price=k - s.price,
        size=s.size,
        expected=exp,
        tick_size=s.tick_size,
    )


def scenario_names() -> list[str]:
    base = list(_base_scenarios())
    return base + [n + "_mirror" for n in base]


def scripted_scenario(name: str) -> Scenario:
    base = _base_scenarios()
    if name in base:
        return base[name]
    if name.endswith("_mirror") and name[: -len("_mirror")] in base:
        return _mirror(base[name[: -len("_mirror")]])
    raise KeyError(f"unknown scenario {name!r}; choose from {scenario_names()}")


# --------------------------------------------------------------------------
# zero-intelligence order flow

@dataclass
class GeneratorConfig:
    seed: int = 0
    instrument: str = "000001"
    day: date = date(2003, 6, 2)
    tick_size: float = 0.01
    start_price: int = 1000
    n_events: int = 60000
    # relative rates of continuous-session event types
    rate_limit: float = 0.45
    rate_marketable: float = 0.17
    rate_cancel: float = 0.38
    # limit placement: ticks behind own best, geometric with this mean
    placement_mean: float = 8.0
    inside_spread_prob: float = 0.15
    # sizes are lot * geometric(size_p)
    lot: int = 100
    size_p: float = 0.05
    # marketable orders reach this many extra ticks through the best quote
    sweep_p: float = 0.45
    marketable_size_scale: float = 2.0
    min_levels: int = 8
    auction_orders: int = 40
    off_session_events: int = 0

    def __post_init__(self):
        if min(self.rate_limit, self.rate_marketable, self.rate_cancel) <= 0:
            raise ValueError("event rates must be positive")


def _clock(day: date, offset_us: int) -> datetime:
    """Map an offset into the four continuous hours onto wall-clock time."""
    two_h = 2 * 3600 * 1_000_000
    base = datetime(day.year, day.month, day.day, 9, 30)
    if offset_us >= two_h:
        base = datetime(day.year, day.month, day.day, 13, 0)
        offset_us -= two_h
    return base + timedelta(microseconds=int(offset_us))


class _ZIState:
    def __init__(self, cfg: GeneratorConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.book = OrderBook(cfg.tick_size)
        self.ids: list[str] = []
        self.counter = 0
        self.last_mid = cfg.start_price

    def new_id(self) -> str:
        self.counter += 1
        return f"{self.cfg.instrument}-{self.counter}"

    def size(self, scale: float = 1.0) -> int:
        k = int(self.rng.geometric(self.cfg.size_p))
        return max(1, int(round(k * scale))) * self.cfg.lot

    def limit(self, side: Side) -> tuple[Side, int, int]:
        cfg, rng, book = self.cfg, self.rng, self.book
        bb, ba = book.best_bid, book.best_ask
        if bb is None and ba is None:
            ref_b, ref_a = self.last_mid - 1, self.last_mid + 1
        else:
            ref_b = bb if bb is not None else ba - 2
            ref_a = ba if ba is not None else bb + 2
        spread = ref_a - ref_b
        if spread > 1 and rng.random() < cfg.inside_spread_prob:
            step = int(rng.integers(1, spread))
            price = ref_b + step if side is Side.BUY else ref_a - step
        else:
            off = int(rng.geometric(1.0 / cfg.placement_mean)) - 1
            price = ref_b - off if side is Side.BUY else ref_a + off
        return side, max(1, price), self.size()

    def marketable(self, side: Side) -> Optional[tuple[Side, int, int]]:
        book = self.book
        depth = int(self.rng.geometric(self.cfg.sweep_p)) - 1
        if side is Side.BUY:
            if book.best_ask is None:
                return None
            price = book.best_ask + depth
        else:
            if book.best_bid is None:
                return None
            price = max(1, book.best_bid - depth)
        return side, price, self.size(self.cfg.marketable_size_scale)

    def thin_side(self) -> Optional[Side]:
        nb = self.book.level_count(Side.BUY)
        na = self.book.level_count(Side.SELL)
        m = self.cfg.min_levels
        if nb < m or na < m:
            return Side.BUY if nb <= na else Side.SELL
        return None

    def pick_cancel(self) -> Optional[str]:
        ids, book, rng = self.ids, self.book, self.rng
        while ids:
            j = int(rng.integers(0, len(ids)))
            oid = ids[j]
            if oid in book:
                ids[j] = ids[-1]
                ids.pop()
                return oid
            ids[j] = ids[-1]
            ids.pop()
        return None

    def apply(self, side: Side, price: int, size: int, oid: str) -> None:
        fill = self.book.submit(side, price, size, oid)
        if fill.remainder:
            self.ids.append(oid)
        bb, ba = self.book.best_bid, self.book.best_ask
        if bb is not None and ba is not None:
            self.last_mid = (bb + ba) // 2


def zero_intelligence_flow(cfg: GeneratorConfig) -> list[OrderEvent]:
    """One trading day of random order flow for one instrument.

    The generator keeps its own copy of the book so cancels target resting
    orders and prices track the quotes.  Whenever either side has fewer than
    ``min_levels`` levels the next event replenishes the thinner side.  With
    ``off_session_events > 0`` a few events are also placed before the open,
    in the freeze and after the close; replay ignores them.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    st = _ZIState(cfg, rng)
    events: list[OrderEvent] = []
    seq = 0
    d = cfg.day

    def emit(ts, action, side, price, size, oid):
        nonlocal seq
        seq += 1
        events.append(OrderEvent(ts, seq, action, side, price, size, oid, cfg.instrument))

    def at(h, m, s=0, us=0):
        return datetime(d.year, d.month, d.day, h, m, s, us)

    def off_session(start: datetime, span_s: int):
        for i in range(cfg.off_session_events):
            side = Side.BUY if rng.random() < 0.5 else Side.SELL
            ts = start + timedelta(seconds=int(span_s * (i + 0.5) / cfg.off_session_events))
            # an aggressive order that would trade if it were processed
            ref = st.book.best_ask if side is Side.BUY else st.book.best_bid
            price = (ref or st.last_mid) + (3 if side is Side.BUY else -3)
            emit(ts, Action.SUBMIT, side, max(1, price), st.size(), st.new_id())

    off_session(at(9, 0), 600)

    # opening call auction: build a non-crossing book around the start price
    n_auc = cfg.auction_orders
    for i in range(n_auc):
        side = Side.BUY if i % 2 == 0 else Side.SELL
        off = int(rng.geometric(1.0 / cfg.placement_mean))
        price = cfg.start_price - off if side is Side.BUY else cfg.start_price + off
        oid = st.new_id()
        ts = at(9, 15) + timedelta(microseconds=int(600e6 * (i + 0.5) / max(n_auc, 1)))
        size = st.size()
        emit(ts, Action.SUBMIT, side, price, size, oid)
        st.apply(side, price, size, oid)
    if cfg.off_session_events:
        # a cancel during cooling is ignored by the exchange, so not applied here
        emit(at(9, 27), Action.CANCEL, None, None, None, f"{cfg.instrument}-1")

    span = 4 * 3600 * 1_000_000
    offsets = np.sort(rng.integers(0, span, cfg.n_events))
    total = cfg.rate_limit + cfg.rate_marketable + cfg.rate_cancel
    p_lim = cfg.rate_limit / total
    p_mkt = (cfg.rate_limit + cfg.rate_marketable) / total
    freeze_done = False
    for off in offsets:
        ts = _clock(d, int(off))
        if not freeze_done and ts.hour >= 13:
            off_session(at(11, 30), 5400)
            freeze_done = True
        thin = st.thin_side()
        u = rng.random()
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        if thin is not None:
            order = st.limit(thin)
        elif u < p_lim:
            order = st.limit(side)
        elif u < p_mkt:
            order = st.marketable(side) or st.limit(side)
        else:
            oid = st.pick_cancel()
            if oid is not None:
                emit(ts, Action.CANCEL, None, None, None, oid)
                st.book.cancel(oid)
                continue
            order = st.limit(side)
        side, price, size = order
        oid = st.new_id()
        emit(ts, Action.SUBMIT, side, price, size, oid)
        st.apply(side, price, size, oid)
    if not freeze_done:
        off_session(at(11, 30), 5400)
    off_session(at(15, 0), 1800)
    return events


# --------------------------------------------------------------------------
# observations drawn from the model

DEFAULT_COEFS = {
    "a0": 0.5,
    "a": 1.2,
    "b": 20.0,
    "c": [-1.5, -0.3, 0.1, 0.08, 0.02],
    "d": [0.2, -0.05, 0.03, 0.02, -0.1],
    "e": [0.4, 0.2, 0.05, 0.02, -0.01],
    "f": [-0.1, -0.1, 0.0, 0.05, 0.03],
}


def _pad(v, L):
    v = list(v)[:L]
    return np.array(v + [0.0] * (L - len(v)))


@dataclass
class TruthConfig:
    seed: int = 0
    n: int = 10_000
    kind: str = POWER_LAW
    levels: int = 5
    alpha: float = 0.55
    beta: float = 0.10
    sigma: float = 0.05
    a0: float = DEFAULT_COEFS["a0"]
    a: float = DEFAULT_COEFS["a"]
    b: float = DEFAULT_COEFS["b"]
    c: list = field(default_factory=lambda: list(DEFAULT_COEFS["c"]))
    d: list = field(default_factory=lambda: list(DEFAULT_COEFS["d"]))
    e: list = field(default_factory=lambda: list(DEFAULT_COEFS["e"]))
    f: list = field(default_factory=lambda: list(DEFAULT_COEFS["f"]))
    g: Optional[list] = None
    dummies: bool = True
    # depth regressors: lognormal(0, volume_sigma), or uniform on volume_range
    volume_dist: str = "lognormal"
    volume_sigma: float = 1.0
    volume_range: tuple = (0.5, 2.0)
    omega_sigma: float = 1.0
    spread_range: tuple = (0.0002, 0.004)
    gap_mean: float = 1.0
    trade_type: str = "FB"
    instrument: str = "SYN"

    def dummy_coefs(self) -> np.ndarray:
        if not self.dummies:
            return np.zeros(N_BUCKETS - 1)
        if self.g is not None:
            return np.asarray(self.g, dtype=float)
        return np.array([0.02 * ((i % 5) - 2) for i in range(1, N_BUCKETS)])

    def coefficient_vector(self) -> dict[str, float]:
        """Truth keyed by the names the calibration reports."""
        L = self.levels
        out = {"a0": self.a0, "a": self.a, "b": self.b}
        for p in "cdef":
            for i, v in enumerate(_pad(getattr(self, p), L), start=1):
                out[f"{p}{i}"] = float(v)
        if self.dummies:
            for i, v in enumerate(self.dummy_coefs(), start=1):
                out[f"g{i}"] = float(v)
        return out

    def record(self) -> dict:
        d = asdict(self)
        d["coefficients"] = self.coefficient_vector()
        return d


def model_observations(cfg: TruthConfig) -> tuple[ObservationSet, dict]:
    """Draw regressors, then responses from the model plus Gaussian noise."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n, L = cfg.n, cfg.levels
    omega = rng.lognormal(0.0, cfg.omega_sigma, n)
    spread = rng.uniform(*cfg.spread_range, n)
    if cfg.volume_dist == "lognormal":
        va = rng.lognormal(0.0, cfg.volume_sigma, (n, L))
        vb = rng.lognormal(0.0, cfg.volume_sigma, (n, L))
    elif cfg.volume_dist == "uniform":
        va = rng.uniform(*cfg.volume_range, (n, L))
        vb = rng.uniform(*cfg.volume_range, (n, L))
    else:
        raise ValueError(f"unknown volume_dist {cfg.volume_dist!r}")
    ga = rng.exponential(cfg.gap_mean, (n, L))
    gb = rng.exponential(cfg.gap_mean, (n, L))
    bucket = rng.integers(0, N_BUCKETS, n)
    noise = rng.standard_normal(n)

    if cfg.kind == POWER_LAW:
        ha, hb = va ** cfg.beta, vb ** cfg.beta
    elif cfg.kind == LOGARITHMIC:
        ha, hb = np.log(va), np.log(vb)
    else:
        raise ValueError(f"unknown kind {cfg.kind!r}")
    buckets = np.zeros((n, N_BUCKETS))
    buckets[np.arange(n), bucket] = 1.0
    g = np.concatenate([[0.0], cfg.dummy_coefs()])
    r = (
        cfg.a0
        + cfg.a * omega ** cfg.alpha
        + cfg.b * spread
        + ha @ _pad(cfg.c, L)
        + hb @ _pad(cfg.d, L)
        + ga @ _pad(cfg.e, L)
        + gb @ _pad(cfg.f, L)
        + g[bucket]
        + cfg.sigma * noise
    )
    obs = ObservationSet(
        r=r, omega=omega, spread=spread, va=va, vb=vb, ga=ga, gb=gb,
        buckets=buckets,
        instrument=np.array([cfg.instrument] * n, dtype=object),
        weight=np.ones(n),
        kind=TradeType(cfg.trade_type),
        normalized=True,
    )
    return obs, cfg.record()
