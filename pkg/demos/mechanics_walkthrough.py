"""
Walking a sell order through a five-level book
==============================================

A sell limit order that crosses the bid either fills completely or leaves
a remainder that becomes the new best ask.  The two cases move the mid
price in very different ways, and the closed forms in
``impactlab.mechanics`` say exactly how.
"""

from impactlab.lob import Side
from impactlab.mechanics import predict, ps_fs_gap
from impactlab.synth import scripted_scenario
from impactlab.trades import immediate_return_exact

# The book below uses a 0.005 tick: 2000 ticks is 10.00.
s = scripted_scenario("fig1_ps")
book = s.book()
pre = book.snapshot(5)
print("bids:", list(zip(pre.bid_prices, pre.bid_volumes)))
print("asks:", list(zip(pre.ask_prices, pre.ask_volumes)))

# Sell 7 shares at 1995.  Only 6 shares rest at or above that price, so one
# share is left over and sits on the ask side.
out = predict(pre, Side.SELL, s.price, s.size)
print(f"\n{out.kind.value}: n={out.n} omega={out.omega} remainder={out.remainder}")
print(f"  r = {out.r_exact} = {out.r_pred:.6f}")
print(f"  spread {out.spread_term}, gap {out.gap_term}, residual {out.residual_term}")

# Replaying the same order on the live book gives the same number.
book.submit(Side.SELL, s.price, s.size, "demo")
print("  replayed r =", immediate_return_exact(pre, book.snapshot(5)))

# A sell for 5 at 1996 clears two levels and leaves nothing behind.
fs = predict(pre, Side.SELL, 1996, 5)
print(f"\n{fs.kind.value}: r = {fs.r_exact} ({fs.r_pred:.6f})")

# At the same limit price the partial fill lands below the full fill by
# (a1 - pi)/(a1 + b1), at least the relative spread since pi <= b1.
print("\nPS minus FS at the same price:", ps_fs_gap(pre, s.price))
print("relative spread:              ", pre.spread_rel_exact)

# Buys are the mirror image: reflect every price through a1 + b1.
m = scripted_scenario("fig1_ps_mirror")
mo = predict(m.book().snapshot(5), m.side, m.price, m.size)
print(f"\nmirrored order is a {mo.kind.value} with r = {mo.r_exact}")
