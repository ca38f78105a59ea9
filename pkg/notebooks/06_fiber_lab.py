# %% [markdown]
# # Fibers of equivariant maps
#
# The full chain on the torus of a rotation: a box cover refined into
# `m = qk` disjoint families, a level function, interval families, the
# collections `D_1..D_k`, marking counts and the collapsed map `psi`.

# %%
from mdimlab.fiber import cosine_observable, fiber_multiplicity, gamma_bound
from mdimlab.pipeline import fiber_pipeline
from mdimlab.systems import make_rotation

timings = {}
report = fiber_pipeline({"torus_samples": 600, "x_samples": 700, "marking_points": 30, "fiber_samples": 150}, timings=timings)
print("marking", report["marking"])
print("psi", report["psi"]["passed"], "groups", report["psi"]["groups"])
print("fiber", report["fiber"])
print({k: round(v, 1) for k, v in timings.items()})

# %% [markdown]
# For a rotation a single observable already separates points: every
# fiber of `f^Z` is a point, matching `floor(gamma) = 1` for `d = 0`.

# %%
rot = make_rotation("sqrt(2)-1")
X = rot.sample(2000, 0)
mult, classes = fiber_multiplicity(rot, cosine_observable(rot, 1), 64, 0.03, 1e-9, X)
print(mult, gamma_bound(1, 0), gamma_bound(2, 1), gamma_bound(3, 1))
