"""Desk-scale constructions around mean dimension: covers, nerves, level
functions, the mapping torus and fiber-multiplicity audits."""
from .covers import FiniteCover, Region, mesh, order_profile
from .errors import AuditError, ConstructionError
from .fiber import FiberParams, fiber_multiplicity, gamma_bound
from .intervals import build_interval_system, count_met
from .kolmogorov import kolmogorov_cover, kolmogorov_ostrand_cover
from .levelfn import eval_level_function, make_level_function
from .nerves import build_nerve, canonical_map, finite_to_one_map
from .systems import make_product, make_rotation, make_sturmian, system_from_descriptor
from .torus import build_torus

__version__ = "0.1.0"

__all__ = [
    "AuditError",
    "ConstructionError",
    "FiberParams",
    "FiniteCover",
    "Region",
    "build_interval_system",
    "build_nerve",
    "build_torus",
    "canonical_map",
    "count_met",
    "eval_level_function",
    "fiber_multiplicity",
    "finite_to_one_map",
    "gamma_bound",
    "kolmogorov_cover",
    "kolmogorov_ostrand_cover",
    "make_level_function",
    "make_product",
    "make_rotation",
    "make_sturmian",
    "mesh",
    "order_profile",
    "system_from_descriptor",
]
