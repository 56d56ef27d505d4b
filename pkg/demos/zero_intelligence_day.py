"""
One simulated trading day, end to end
=====================================

Random limit orders, marketable orders and cancels are replayed through
the book.  Every crossing order becomes a trade record carrying the book
before and after, which is all the later stages need.
"""

import numpy as np

from impactlab.features import build_features
from impactlab.order_flow import ReplayCounters, replay
from impactlab.synth import GeneratorConfig, zero_intelligence_flow
from impactlab.trades import TRADE_TYPES

events = zero_intelligence_flow(GeneratorConfig(seed=4))
print(f"{len(events)} events from {events[0].timestamp} to {events[-1].timestamp}")

counters = ReplayCounters()
trades = list(replay(events, levels=5, counters=counters))
print(f"{counters.trades} trades; {counters.auction_queued} orders queued before the open")

# Partial fills move the price much more than fills, and most fills
# leave the quotes untouched.
print("\ntype     n    mean r       share r=0")
for t in TRADE_TYPES:
    rs = np.array([float(x.r_exact) for x in trades if x.type is t and x.r_exact is not None])
    print(f"{t.value:4s} {len(rs):6d}  {rs.mean():+.3e}   {np.mean(rs == 0):.2f}")

# Feature extraction keeps only trades whose book has enough levels and
# normalizes each trade type by its own averages.
f = build_features(trades, 5, instrument="SIM")
for t, obs in f.sets.items():
    print(f"{t.value}: {len(obs)} observations, mean r_norm {obs.r.mean():.12f}")
