# %% [markdown]
# # Follower dynamics in the phase plane
#
# Delayed replicator dynamics for groups of 10 and 30 OMDs choosing between
# two MMDs with prices (1, 2). The terminal point equalises each group's
# utilities across both MMDs.

# %%
import numpy as np

from relayshare.config import ScenarioConfig
from relayshare.omd_game import PopulationState, evolve, group_utilities, replicator_field

cfg = ScenarioConfig()
econ = cfg.economics()
sizes = cfg.group_sizes

# %%
xs = np.linspace(0.05, 0.95, 10)
field = np.array([[replicator_field(PopulationState([[a, 1 - a], [b, 1 - b]], sizes), econ)[:, 0]
                   for b in xs] for a in xs])
print("largest field magnitude on the grid:", float(np.abs(field).max()))

# %%
for start in [(0.56, 0.21), (0.1, 0.9), (0.9, 0.1)]:
    st = PopulationState([[start[0], 1 - start[0]], [start[1], 1 - start[1]]], sizes)
    res = evolve(st, econ, cfg.evo_params())
    u = group_utilities(res.state, econ)
    print(start, "->", np.round(res.state.fractions[:, 0], 5), "steps", res.steps,
          "utility gap", float(np.abs(u[:, 0] - u[:, 1]).max()))

# %% [markdown]
# Every start settles on the same attached count for MMD 1, even though the
# split between groups depends on where the trajectory began.
