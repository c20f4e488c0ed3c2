"""
Selling attack information
==========================

Two defenders can pay ``delta`` to defend or risk losing ``alpha``.  Each can
also buy the other's bit "were you attacked last round?".  This script
walks through when buying pays, what price a seller should ask, and what a
long simulated run looks like.
"""

import sys

from trident.game import GameParams, Regime, classify_regime, buying_conditions, optimal_price, purchase_threshold
from trident.sim import simulate, sweep, trace_stats, write_sweep_csv

base = GameParams(p=0.05, q=0.6, alpha=10, delta=2, s=0.2)

# Only when defending is neither always nor never worth it does information
# have any value.
for delta in (0.4, 2, 7):
    print(f"delta={delta:<4} regime {classify_regime(GameParams(0.05, 0.6, 10, delta))}")

# %%
# The buyer's threshold
# ---------------------
price = optimal_price(base)
print(f"highest acceptable price {purchase_threshold(base):.4f}, seller asks {price:.4f}")
for x in (0.5, price, 1.2):
    lem = buying_conditions(base, x)
    print(f"price {x:<4}: buying preferred {lem.buying_preferred.lhs}")

# %%
# A simulated season
# ------------------
# Both players ask the optimal price and follow the myopic policy.  Money is
# tracked in thousandths of a token, so the accounts reconcile exactly.

trace = simulate(base.with_prices(price, price), 100_000, seed=7)
st = trace_stats(trace)
for i in (0, 1):
    print(f"player {i}: {st.purchases[i]} purchases, mean gap "
          f"{st.mean_purchase_gap[i]:.2f} +/- {st.purchase_gap_se[i]:.2f}, "
          f"mean cost per round {st.mean_cost[i]:.3f}")

print(trace.to_csv().splitlines()[:3])

# %%
# A small sweep
# -------------
# Every grid point reuses the same seed, so differences between rows come
# from the parameters and not from the dice.

grid = [GameParams(0.05, q, 10, 2, 0.2) for q in (0.4, 0.6, 0.8)]
grid = [g.with_prices(optimal_price(g)) if classify_regime(g) is Regime.CONDITIONAL else g for g in grid]
write_sweep_csv(sweep(grid, 20_000, seed=1), sys.stdout, seed=1, horizon=20_000)
