"""Immediate price impact toolkit: order book replay, trade typology, impact
determinants and grid-scanned calibration of power-law and logarithmic
impact models."""

from .lob import BookSnapshot, Execution, Fill, OrderBook, OrderRejected, Side
from .trades import TradeRecord, TradeType, classify, immediate_return, stock_stats
from .mechanics import predict_buy, predict_sell, ps_fs_gap
from .order_flow import OrderEvent, SessionPhase, parse_event, read_events, replay, session_phase
from .features import ObservationSet, build_features, extract, intraday_bucket, normalize
from .regression import (
    CalibrationResult,
    ModelSpec,
    aggregate_by_size,
    asymmetry_compare,
    build_design,
    grid_calibrate,
    ols_fit,
    significance_pattern,
    taylor_linkage,
)

__version__ = "0.1.0"

__all__ = [
    "BookSnapshot", "Execution", "Fill", "OrderBook", "OrderRejected", "Side",
    "TradeRecord", "TradeType", "classify", "immediate_return", "stock_stats",
    "predict_buy", "predict_sell", "ps_fs_gap",
    "OrderEvent", "SessionPhase", "parse_event", "read_events", "replay", "session_phase",
    "ObservationSet", "build_features", "extract", "intraday_bucket", "normalize",
    "CalibrationResult", "ModelSpec", "aggregate_by_size", "asymmetry_compare", "build_design",
    "grid_calibrate", "ols_fit", "significance_pattern", "taylor_linkage",
]
