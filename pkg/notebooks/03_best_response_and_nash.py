# %% [markdown]
# # Best responses and the contraction check

# %%
import numpy as np

from relayshare.channel import ChannelGains, y_factor
from relayshare.mmd_game import best_response_price, nash_prices, supermodularity_check

ys = (y_factor(ChannelGains(0.3, 0.25, 0.4)), y_factor(ChannelGains(0.25, 0.21, 0.35)))
omegas = (20.0, 40.0)

# %%
for p in np.linspace(0.5, 4.0, 8):
    b1 = best_response_price(p, omegas[0], omegas[1], ys[0], ys[1]).price_star
    b2 = best_response_price(p, omegas[1], omegas[0], ys[1], ys[0]).price_star
    print(f"p_other={p:.2f}  B1={b1:.4f}  B2={b2:.4f}")

# %% [markdown]
# Slopes in (0, 1) make the best-response map monotone and contracting, so
# alternating best responses reach one fixed point from any start.

# %%
grid = np.linspace(0.1, 5.0, 50)
for form in ("exact", "printed"):
    rep = supermodularity_check(grid, grid, omegas, ys, form=form)
    print(form, rep.ok, round(rep.min_slope, 4), round(rep.max_slope, 4), round(rep.max_lambda, 4))

rng = np.random.default_rng(0)
pts = np.array([nash_prices(omegas, ys, start=tuple(rng.uniform(0, 5, 2))).prices for _ in range(16)])
print("fixed point", pts.mean(axis=0), "spread", np.ptp(pts, axis=0).max())
