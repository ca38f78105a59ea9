# %% [markdown]
# # Level functions of a stopping walk
#
# From `x` the walk steps to `x - 1` with probability `phi(x)`.  `xi(x)` is
# the expected number of steps.  Away from the bump, `xi` grows by one per
# step of the orbit.

# %%
import numpy as np

from mdimlab import eval_level_function, make_level_function, make_rotation
from mdimlab.levelfn import level_report

rot = make_rotation("sqrt(2)-1")
samples = rot.sample(500, 0)
lf = make_level_function(rot, rot.from_angles([0.3]), 0.05, samples=samples)
rep = level_report(lf, 10, samples)
print({k: rep[k] for k in ("recursion_residual", "translation_residual_segmentwise", "checked_count", "hitting_horizon")})

# %% [markdown]
# Along one orbit `xi` is a saw-tooth: it rises by one each step and drops
# when the orbit enters the bump around 0.3.

# %%
x0 = rot.from_angles([0.0])
orbit = np.vstack([rot.act(x0, z) for z in range(40)])
vals, bounds = eval_level_function(lf, orbit)
print(np.round(vals, 2))
print("largest truncation bound", bounds.max())
