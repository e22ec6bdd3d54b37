# %% [markdown]
# # The distributed protocol
#
# OMDs imitate better-off peers in their group; MMDs nudge price and
# bandwidth from their observed market share. With bandwidth frozen the
# prices should land on the solver's pricing point.

# %%
import math

import numpy as np

from relayshare.channel import ChannelGains, b_factor, tau_factor, y_factor
from relayshare.imes import ImesConfig, ImesScenario, MmdAgent, run_imes
from relayshare.mmd_game import nash_prices
from relayshare.omd_game import equilibrium_share_closed

gains = [ChannelGains(0.3, 0.25, 0.4), ChannelGains(0.25, 0.21, 0.35)]
tau = [tau_factor(g) for g in gains]
b = [b_factor(g) for g in gains]
ys = tuple(y_factor(g) for g in gains)
mmds = [MmdAgent(20, 1.0, 0.5, mu_omega=0.0), MmdAgent(40, 1.0, 0.5, mu_omega=0.0)]
scen = ImesScenario.from_groups([10, 30], [tau, tau], [b, b], mmds, group_names=("a", "b"))

# %%
trace = run_imes(ImesConfig(seed=7), scen)
p = trace.final_prices
print(trace.status, "after", len(trace.rounds), "rounds")
print("protocol prices", np.round(p, 4), "solver", np.round(nash_prices((20, 40), ys).prices, 4))
print("attached", trace.final_attached,
      "closed form", round(equilibrium_share_closed(p[0], p[1], 20, 40, *ys, 40, base=math.e), 2))

# %%
print(trace.to_csv().splitlines()[:5])
