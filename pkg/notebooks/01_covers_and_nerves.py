# %% [markdown]
# # Covers, orders and nerves on a circle rotation
#
# A cover is a finite list of regions audited against a sample.  Its order
# is the largest number of regions through one point and its mesh the
# largest diameter.  Joining a cover with its translates keeps the mesh
# small along an orbit window.

# %%
import numpy as np

from mdimlab import build_nerve, canonical_map, finite_to_one_map, make_rotation, mesh, order_profile
from mdimlab.covers import join_with_shifts, mesh_under_translates
from mdimlab.torus import arc_cover

rot = make_rotation("sqrt(2)-1")
pts = rot.sample(2000, 0)
arcs = arc_cover(rot, 8, 0.01, pts)
ord_, counts = order_profile(arcs)
print("order", ord_, "mesh", round(mesh(arcs), 4))

# %% [markdown]
# Translates of an arc cover of a rotation are again arc covers, so the
# mesh does not move along the orbit.

# %%
print([round(m, 4) for _, m in mesh_under_translates(arcs, rot, 5)])

# %% [markdown]
# The join with two shifted copies has more, smaller pieces.

# %%
J = join_with_shifts([arcs, arcs], rot, 3, pts)
print(len(arcs.regions), "->", len(J.regions), "regions; order", order_profile(J)[0])

# %% [markdown]
# The nerve has one vertex per arc and an edge for each overlap: a cycle.
# The canonical map sends the circle into it, and a generic PL map sends
# the nerve into the plane with finite fibers.

# %%
K = build_nerve(arcs)
print("nerve dim", K.dim, "maximal simplices", len(K.maximal))
cm = canonical_map(arcs)
weights = cm(pts[:5])
print(np.round(weights, 3))
g = finite_to_one_map(K, 2, seed=0)
print({k: v for k, v in g.audit.items() if k != "general_position_violations"})
