# %% [markdown]
# # Interval families met by every coset of Z
#
# `q - 1` disjoint intervals of length > 1 in `[0, q)` each meet every
# coset `t + Z`.  Cutting out a neighbourhood of a rationally independent
# set makes the pieces short while each coset still meets `q - 2`
# families.

# %%
import numpy as np

from mdimlab.intervals import build_interval_system, count_met_many

for q in (3, 5, 8):
    E = build_interval_system(q, 0.05, seed=0)
    met = count_met_many(np.linspace(0, 1, 5000, endpoint=False), E)
    print(q, "pieces", sum(len(f) for f in E.families), "mesh", round(E.mesh, 4),
          "sigma >=", round(E.sigma_lower, 5), "min met", met.min())

# %% [markdown]
# Histogram of how many families each coset meets for `q = 5`.

# %%
E = build_interval_system(5, 0.05, seed=0)
met = count_met_many(np.linspace(0, 1, 5000, endpoint=False), E)
print(dict(zip(*np.unique(met, return_counts=True))))
