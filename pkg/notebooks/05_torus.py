# %% [markdown]
# # The mapping torus and chains of shifted covers
#
# The torus of a rotation is `X x R` glued by `(x, t) ~ (x + z, t - z)`;
# it carries a real flow.  Lifting a slab cover at most doubles the order,
# and only on the slice `t = 0`.

# %%
import numpy as np

from mdimlab.systems import make_rotation
from mdimlab.torus import (
    arc_cover,
    build_shift_chain,
    build_torus,
    lift_cover,
    slab_grid_cover,
    torus_audit_sample,
    torus_box_cover,
)

rot = make_rotation("sqrt(2)-1")
ts = build_torus(rot)
rng = np.random.default_rng(0)
t = rng.random(2000)
t[:500] = 0.0
S = np.column_stack([rot.sample(2000, 0), t])
B = slab_grid_cover(arc_cover(rot, 5, 0.02, S[:, :-1]), [(0.0, 0.6), (0.4, 1.0)], S)
C, rep = lift_cover(B, ts, torus_audit_sample(ts, 3000, 1))
print(rep)

# %% [markdown]
# Joining `C + i/n` shifted back by `floor(n/d) i` keeps every integer
# translate of the join fine over a window of length `floor(n/d) n`.

# %%
T = torus_audit_sample(ts, 600, 0)
box = torus_box_cover(ts, 24, 16, 0.002, T)
D, rep = build_shift_chain(box, ts, 4, 0.5, 0.2, rgrid=32)
print(rep["window"], rep["ord_D"], round(rep["max_mesh"], 4), rep["passed"])
