# %% [markdown]
# # Kolmogorov cube families
#
# `m + 1` families of disjoint cubes in `R^n` cover every point at least
# `m - n + 1` times.  The audit runs on a rational grid in exact integer
# arithmetic.

# %%
from fractions import Fraction

import numpy as np

from mdimlab.kolmogorov import exact_grid_audit, ko_audit, kolmogorov_ostrand_cover
from mdimlab.systems import make_rotation
from mdimlab.torus import arc_cover

for n, m in [(1, 2), (2, 3), (2, 5), (3, 4)]:
    _, audit = exact_grid_audit(n, m, Fraction(1, 4), [[0, 1]] * n)
    print(n, m, audit["min_multiplicity"], ">=", m - n + 1, "cube side", audit["cube_diameter"])

# %% [markdown]
# Pulled back to a circle through the nerve of a three-arc cover, the
# families refine the arcs and still cover (almost) every sample `m` times.

# %%
rot = make_rotation("sqrt(2)-1")
pts = rot.sample(2000, 0)
U = arc_cover(rot, 3, 0.03, pts)
for m in (3, 5):
    F = kolmogorov_ostrand_cover(rot, U, 1, m, pts, 0)
    a = ko_audit(F, U)
    print(m, len(F.regions), "pieces", a["refines_U"], a["family_disjoint"], a["fraction_at_required"])
