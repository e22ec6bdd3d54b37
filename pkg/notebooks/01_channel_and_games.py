# %% [markdown]
# # Channel factors and the two games
#
# Two relay owners (MMDs) sell forwarding capacity to two groups of ordinary
# devices (OMDs). This script computes the channel factors that drive both
# games, then the pricing point and the bandwidth point of the leader game.

# %%
import math

import numpy as np

from relayshare.channel import ChannelGains, b_factor, capacity_direct, capacity_relay, tau_factor, y_factor
from relayshare.mmd_game import bandwidth_equilibrium, nash_prices

gains = [ChannelGains(h_sr=0.3, h_sd=0.25, h_rd=0.4), ChannelGains(h_sr=0.25, h_sd=0.21, h_rd=0.35)]
for k, g in enumerate(gains, 1):
    print(f"MMD {k}: tau={tau_factor(g):.6f} b={b_factor(g):.6f} Y={y_factor(g):.6f}")

# %% [markdown]
# The relayed link only pays off when its half-rate capacity beats the direct one.

# %%
for k, g in enumerate(gains, 1):
    d, r = b_factor(g) - 1.0, tau_factor(g) - b_factor(g)
    print(f"MMD {k}: direct {capacity_direct(1.0, d):.5f} relayed {capacity_relay(1.0, d, r):.5f} bit/s/Hz")

# %% [markdown]
# Pricing point for fixed offers (20, 40), then the bandwidth point at price 1.

# %%
ys = tuple(y_factor(g) for g in gains)
ne = nash_prices((20.0, 40.0), ys)
print("prices", np.round(ne.prices, 6), "after", ne.iterations, "sweeps")
bw = bandwidth_equilibrium((1.0, 1.0), ys, 40, (0.5, 0.5))
print("bandwidth", np.round(bw.omegas, 4))
