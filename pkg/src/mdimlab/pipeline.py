"""End-to-end runs on the torus of an irrational rotation.

``fiber_pipeline`` chains every construction: a torus box cover, its
Kolmogorov-Ostrand refinement ``F``, the neighbourhood ``W`` and its
translates ``D_W``, the level function of ``W`` on ``X``, the interval
system, the collections ``D_1..D_k``, the marking counts, the collapsed
map ``psi`` and the fiber multiplicity of ``psi^Z``.
"""
from __future__ import annotations

import time

import numpy as np

from .covers import FiniteCover, Region, check_small, mesh, order_profile
from .fiber import (
    FiberParams,
    build_marked_collections,
    build_psi,
    cosine_observable,
    fiber_multiplicity,
    marking_report,
    psi_audit,
)
from .intervals import build_interval_system
from .kolmogorov import kolmogorov_ostrand_cover
from .levelfn import eval_level_function, make_level_function
from .systems import make_rotation
from .torus import ball_region, build_torus, torus_audit_sample, torus_box_cover

__all__ = ["fiber_pipeline", "translate_balls", "DEFAULT_PIPELINE"]

DEFAULT_PIPELINE = {
    "alpha": "sqrt(2)-1",
    "k": 2,
    "d": 1.0,
    "n": 4,
    "q": 5,
    "l": 40,
    "eps": 0.25,
    "delta": 0.3,
    "amplitude": 0.05,
    "w_angle": 0.3,
    "w_radius": 0.002,
    "torus_samples": 1200,
    "x_samples": 1500,
    "arcs": 12,
    "rows": 6,
    "overlap": 0.01,
    "mesh_E": 0.05,
    "marking_points": 120,
    "window": 4,
    "fiber_samples": 400,
    "nb": 3,
    "rgrid": 24,
    "seed": 0,
}


class _Clock:
    def __init__(self, sink: dict | None):
        self.sink = sink
        self.t = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        if self.sink is not None:
            self.sink[name] = now - self.t
        self.t = now


def translate_balls(rot, center, radius: float, zs, samples) -> FiniteCover:
    """Balls of ``radius`` around ``center + z``; each keeps its center as a point."""
    regions = []
    for i, z in enumerate(zs):
        c = rot.act(np.atleast_2d(center), z)
        r = ball_region(rot, c, radius, samples, rid=i, family=0)
        r.label = ("W", int(z))
        regions.append(r)
    return FiniteCover(regions, rot, samples, kind="closed")


def fiber_pipeline(cfg: dict | None = None, timings: dict | None = None) -> dict:
    """Run every stage and return a JSON-ready report.

    ``timings``, if given, receives wall-clock seconds per stage; they are
    kept out of the report so that reports stay reproducible.
    """
    clock = _Clock(timings)
    c = dict(DEFAULT_PIPELINE)
    c.update(cfg or {})
    params = FiberParams(c["k"], c["d"], c["n"], c["q"], c["l"], c["eps"], c["delta"])
    k, q, l, m = params.k, params.q, params.l, params.m
    rot = make_rotation(c["alpha"], horizon=max(4 * l, 2 * c["window"] + 2))
    ts = build_torus(rot)
    seed = int(c["seed"])
    report: dict = {"params": params.to_json(), "config": {key: c[key] for key in sorted(c)}}

    # torus cover U and its Kolmogorov-Ostrand refinement
    T = torus_audit_sample(ts, c["torus_samples"], seed)
    U = torus_box_cover(ts, c["arcs"], c["rows"], c["overlap"], T)
    ord_u, _ = order_profile(U)
    n_ko = ord_u - 1
    F = kolmogorov_ostrand_cover(ts, U, n_ko, m, T, seed)
    report["U"] = {"regions": len(U.regions), "ord": ord_u, "mesh": mesh(U)}
    ko = dict(F.meta["audit"])
    ko.pop("below_required", None)
    report["F"] = {"pieces": len(F.regions), "n_ko": n_ko, "audit": ko, "eps_cube": F.meta["eps"]}

    clock.lap("F")

    # W, D_W and the level function of W on X
    w_base = rot.from_angles([c["w_angle"]])
    X = rot.sample(c["x_samples"], seed + 3)
    W = ball_region(ts, ts.embed(w_base), c["w_radius"], T)
    D_W = translate_balls(rot, w_base, c["w_radius"], range(-2 * l, 2 * l + 1), X)
    centers = rot.act(np.repeat(w_base, 4 * l + 1, axis=0), np.arange(-2 * l, 2 * l + 1))
    cd = rot.pairwise(centers, centers)
    np.fill_diagonal(cd, np.inf)
    report["W"] = {
        "radius": c["w_radius"],
        "small_eps_3l": check_small(W, ts, params.eps, 3 * l, rgrid=c["rgrid"] * 3),
        "D_W_disjoint": bool(cd.min() > 2 * c["w_radius"]),
        "D_W_min_center_gap": float(cd.min()),
    }
    # probes inside the zero ball of phi (radius w_radius/3) witness its interior
    probes = rot.from_angles(c["w_angle"] + c["w_radius"] * np.array([-1 / 6, 0.0, 1 / 6]))
    lf = make_level_function(rot, w_base, c["w_radius"], samples=np.vstack([X, probes]))
    xi = lambda s: eval_level_function(lf, s)[0]  # noqa: E731

    clock.lap("W")

    # interval system and D_1..D_k
    E = build_interval_system(q, c["mesh_E"], seed)
    report["E"] = {"mesh": E.mesh, "sigma_lower": E.sigma_lower, "min_count_met": E.report["min_count_met"]}
    D, dreport = build_marked_collections(
        F, E, xi, params, ts, X, W=W, D_W=D_W, strict=False, nb=c["nb"], rgrid=c["rgrid"]
    )
    report["D"] = dreport

    clock.lap("D")

    # marking counts on X- = X minus W + [-l, l]
    def in_w_plus(states):
        out = np.zeros(len(states), dtype=bool)
        for z in range(-l, l + 1):
            out |= lf.U.member(rot.act(states, -z))
        return out

    cand = X[~in_w_plus(X)]
    x_list = cand[: c["marking_points"]]
    mr = marking_report(x_list, D, params, rot, xi, W_plus=in_w_plus)
    report["marking"] = mr.to_json()
    report["marking_rows"] = mr.rows()

    clock.lap("marking")

    # psi and its fiber multiplicity
    f = cosine_observable(rot, k, amplitude=c["amplitude"])
    Ds = [D.collection(j) for j in range(1, k + 1)]
    psi = build_psi(f, D_W, Ds, params.delta, seed, eps=params.eps)
    report["psi"] = psi_audit(psi, X, params.eps)
    clock.lap("psi")
    fs = X[: c["fiber_samples"]]
    mult, classes = fiber_multiplicity(rot, psi, c["window"], 3 * params.eps, 1e-9, fs)
    report["fiber"] = {
        "max_mult": mult,
        "classes": len(classes),
        "window": c["window"],
        "sep": 3 * params.eps,
        "gamma": mr.gamma,
        "floor_gamma": int(np.floor(mr.gamma)),
    }
    clock.lap("fiber")
    report["passed"] = bool(mr.passed and report["psi"]["passed"] and ko["refines_U"] and ko["family_disjoint"])
    return report
