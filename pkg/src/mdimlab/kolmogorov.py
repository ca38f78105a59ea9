"""Kolmogorov cube families on ``R^n`` and Kolmogorov-Ostrand covers of sampled systems.

Family ``i`` (``1 <= i <= m+1``) consists of the intervals
``eps/(m+1) * [z(m+1) + i, z(m+1) + i + m]``, ``z`` in ``Z``, and of their
``n``-fold products.  In the scaled coordinate ``u = t (m+1)/eps`` the point
``t`` lies in family ``i`` iff ``(u - i) mod (m+1)`` is in ``[0, m]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .covers import FiniteCover, Region, mesh, order_profile
from .errors import ConstructionError
from .nerves import build_nerve, canonical_map, finite_to_one_map
from .systems import DynSystem, EuclideanSpace

__all__ = [
    "CubeFamilySpec",
    "interval_families",
    "kolmogorov_cover",
    "exact_grid_audit",
    "kolmogorov_ostrand_cover",
]


@dataclass(frozen=True)
class CubeFamilySpec:
    """Family ``i`` of disjoint cubes of side ``eps*m/(m+1)`` in ``R^n``."""

    n: int
    m: int
    i: int
    eps: Fraction

    def __post_init__(self):
        object.__setattr__(self, "eps", Fraction(self.eps))
        if self.m < 1 or self.n < 0:
            raise ValueError("need m >= 1 and n >= 0")
        if not 1 <= self.i <= self.m + 1:
            raise ValueError("family index must be in 1..m+1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    @property
    def unit(self) -> Fraction:
        return self.eps / (self.m + 1)

    @property
    def gap(self) -> Fraction:
        return self.unit

    @property
    def side(self) -> Fraction:
        return self.unit * self.m

    def interval(self, z: int) -> tuple[Fraction, Fraction]:
        lo = self.unit * (z * (self.m + 1) + self.i)
        return lo, lo + self.side

    def contains(self, points) -> np.ndarray:
        """Float membership of points (rows) in the union of the family's cubes."""
        return self.cube_keys(points)[1]

    def contains_exact(self, t) -> bool:
        u = Fraction(t) / self.unit - self.i
        return u - math.floor(u / (self.m + 1)) * (self.m + 1) <= self.m

    def cube_keys(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Integer cube indices ``z`` per coordinate and an inside mask."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u = pts / float(self.unit) - self.i
        z = np.floor(u / (self.m + 1))
        inside = (u - z * (self.m + 1) <= self.m).all(axis=1)
        return z.astype(np.int64), inside

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "i": self.i, "eps": str(self.eps)}

    @classmethod
    def from_json(cls, data: dict) -> "CubeFamilySpec":
        return cls(int(data["n"]), int(data["m"]), int(data["i"]), Fraction(data["eps"]))


def interval_families(m: int, eps) -> list[CubeFamilySpec]:
    """The ``m+1`` interval families; together they cover ``R`` at least ``m`` times."""
    if m < 1:
        raise ValueError("m must be >= 1")
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return [CubeFamilySpec(1, m, i, eps) for i in range(1, m + 2)]


def _bbox(bbox, n) -> list[tuple[Fraction, Fraction]]:
    box = [(Fraction(lo), Fraction(hi)) for lo, hi in bbox]
    if len(box) != n:
        raise ValueError(f"bbox has {len(box)} axes, expected {n}")
    if any(hi <= lo for lo, hi in box):
        raise ValueError("bbox must have positive extent on every axis")
    return box


def kolmogorov_cover(n: int, m: int, eps, bbox, samples=None, points_per_axis: int | None = None) -> FiniteCover:
    """All cubes of the ``m+1`` families meeting ``bbox``, as a cover of the box.

    ``samples`` defaults to the exact audit grid; ``meta["audit"]`` holds
    the result of :func:`exact_grid_audit`.
    """
    if n > m:
        raise ValueError(f"need n <= m, got n={n}, m={m}")
    eps = Fraction(eps)
    box = _bbox(bbox, n)
    fams = [CubeFamilySpec(n, m, i, eps) for i in range(1, m + 2)]
    regions: list[Region] = []
    keys: list[tuple] = []
    for fam in fams:
        ranges = []
        for lo, hi in box:
            zlo = math.floor((lo / fam.unit - fam.i - m) / (m + 1))
            zhi = math.floor((hi / fam.unit - fam.i) / (m + 1))
            ranges.append(range(zlo, zhi + 1))
        for key in product(*ranges):
            # keep cubes that actually meet the box
            if all(fam.interval(z)[1] >= lo and fam.interval(z)[0] <= hi for z, (lo, hi) in zip(key, box)):
                keys.append((fam.i,) + key)
    code = {k: idx for idx, k in enumerate(keys)}

    def incidence_fn(states):
        states = np.atleast_2d(states)
        out = np.zeros((len(keys), len(states)), dtype=bool)
        for fam in fams:
            z, inside = fam.cube_keys(states)
            for row in np.flatnonzero(inside):
                idx = code.get((fam.i,) + tuple(int(v) for v in z[row]))
                if idx is not None:
                    out[idx, row] = True
        return out

    for idx, k in enumerate(keys):
        regions.append(Region(idx, k[0], label=("cube",) + k))
    grid, audit = exact_grid_audit(n, m, eps, bbox, points_per_axis)
    if samples is None:
        samples = grid
    cover = FiniteCover(
        regions,
        EuclideanSpace(n),
        samples,
        kind="closed",
        incidence_fn=incidence_fn,
        meta={"n": n, "m": m, "eps": str(eps), "families": [f.to_json() for f in fams], "audit": audit},
    )
    return cover


def exact_grid_audit(n: int, m: int, eps, bbox, points_per_axis: int | None = None) -> tuple[np.ndarray, dict]:
    """Multiplicity and per-family disjointness on a rational grid, in integers.

    Grid coordinates are ``lo + k*(hi - lo)/(N - 1)``; scaled by ``(m+1)/eps``
    and a common denominator they become integers, so the audit involves no
    rounding at all.
    """
    if n > m:
        raise ValueError(f"need n <= m, got n={n}, m={m}")
    eps = Fraction(eps)
    box = _bbox(bbox, n)
    if points_per_axis is None:
        points_per_axis = max(2, math.ceil(10_000 ** (1.0 / n) - 1e-9))
    N = int(points_per_axis)
    scale = (m + 1) / eps
    starts = [lo * scale for lo, _ in box]
    steps = [(hi - lo) * scale / (N - 1) for lo, hi in box]
    den = 1
    for f in starts + steps:
        den = den * f.denominator // math.gcd(den, f.denominator)
    period = (m + 1) * den
    k = np.arange(N, dtype=object)
    ints = [np.array([int(a * den) + int(b * den) * kk for kk in k], dtype=object) for a, b in zip(starts, steps)]
    if max(max(abs(int(v)) for v in col) for col in ints) < 2**53:
        ints = [col.astype(np.int64) for col in ints]
    mesh_grid = np.meshgrid(*ints, indexing="ij")
    U = np.stack([g.ravel() for g in mesh_grid], axis=1)
    counts = np.zeros(len(U), dtype=np.int64)
    max_in_family = 0
    for i in range(1, m + 2):
        shifted = U - i * den
        z0 = shifted // period
        in_family = np.ones(len(U), dtype=bool)
        per_coord_max = np.zeros(len(U), dtype=np.int64)
        for ax in range(n):
            hits = np.zeros(len(U), dtype=np.int64)
            for dz in (0, -1, 1):
                lo_int = (z0[:, ax] + dz) * period
                hits += ((shifted[:, ax] >= lo_int) & (shifted[:, ax] <= lo_int + m * den)).astype(np.int64)
            in_family &= hits >= 1
            per_coord_max = np.maximum(per_coord_max, hits)
        counts += in_family
        max_in_family = max(max_in_family, int(per_coord_max.max()))
    side = eps * m / (m + 1)
    grid = np.stack(
        [g.ravel() for g in np.meshgrid(*[np.linspace(float(lo), float(hi), N) for lo, hi in box], indexing="ij")],
        axis=1,
    )
    audit = {
        "grid_points": int(len(U)),
        "min_multiplicity": int(counts.min()),
        "required": m - n + 1,
        "max_cubes_per_family": max_in_family,
        "cube_diameter": str(side),
        "mesh_below_eps": side < eps,
        "passed": bool(counts.min() >= m - n + 1 and max_in_family <= 1 and side < eps),
        "counts": counts,
    }
    return grid, audit


# -- Kolmogorov-Ostrand -------------------------------------------------------


def _fill_distance(sys: DynSystem, samples: np.ndarray) -> float:
    best = 0.0
    for s in range(0, len(samples), 1024):
        d = sys.pairwise(samples[s : s + 1024], samples)
        d[np.arange(d.shape[0]), np.arange(s, s + d.shape[0])] = np.inf
        best = max(best, float(d.min(axis=1).max()))
    return best


def _slope(sys: DynSystem, samples: np.ndarray, y: np.ndarray, radius: float) -> float:
    worst = 0.0
    for s in range(0, len(samples), 1024):
        d = sys.pairwise(samples[s : s + 1024], samples)
        dy = np.abs(y[s : s + 1024, None, :] - y[None, :, :]).max(axis=2)
        near = (d > 0) & (d <= radius)
        if near.any():
            worst = max(worst, float((dy[near] / d[near]).max()))
    return worst


def _clusters(sys: DynSystem, pts: np.ndarray, radius: float) -> np.ndarray:
    if len(pts) == 1:
        return np.zeros(1, dtype=int)
    d = sys.pairwise(pts, pts)
    i, j = np.nonzero(d <= radius)
    graph = coo_matrix((np.ones(len(i)), (i, j)), shape=(len(pts), len(pts)))
    return connected_components(graph, directed=False)[1]


def kolmogorov_ostrand_cover(
    sys: DynSystem,
    U: FiniteCover,
    n: int,
    m: int,
    samples=None,
    seed: int = 0,
    max_iter: int = 20,
) -> FiniteCover:
    """Refine ``U`` (``ord U <= n+1``) by ``m+1`` families of disjoint closed pieces.

    Pipeline: canonical map to the nerve of ``U``, a generic PL map ``g``
    of the nerve into ``R^n``, pull-back of the Kolmogorov cubes of scale
    ``eps`` and splitting of each pull-back into clusters.  ``eps`` is
    halved from ``mesh(U)`` until every piece lies in a region of ``U``.
    Sampled multiplicity is at least ``m - n + 1`` wherever the cubes do.
    """
    if m < n:
        raise ValueError(f"need m >= n, got m={m}, n={n}")
    samples = U.samples if samples is None else np.atleast_2d(samples)
    U = U.rebind(samples) if samples is not U.samples else U
    ord_u, _ = order_profile(U)
    if ord_u > n + 1:
        raise ValueError(f"ord U = {ord_u} exceeds n + 1 = {n + 1}")
    if not U.is_cover():
        raise ValueError("U does not cover the sample")
    inc_u = U.sample_incidence
    cm = canonical_map(U)
    K = build_nerve(U)
    vertices = cm.vertices
    if n == 0:
        g = None
        y = np.zeros((len(samples), 0))
    else:
        g = finite_to_one_map(K, n, seed)
        y = g(cm(samples), vertices)
    fill = _fill_distance(sys, samples)
    slope = _slope(sys, samples, y, 4 * fill) if n > 0 else 0.0
    eps = max(mesh(U), 1e-12)
    tried = []
    for it in range(max_iter):
        gap = eps / (m + 1)
        radius = max(0.5 * gap / slope if slope > 0 else 0.0, 2 * fill)
        pieces = []  # (family, key, cluster, hit indices)
        ok = True
        for i in range(1, m + 2):
            if n == 0:
                groups = {(): np.arange(len(samples))}
            else:
                fam = CubeFamilySpec(n, m, i, Fraction(eps).limit_denominator(10**12))
                z, inside = fam.cube_keys(y)
                groups = {}
                for row in np.flatnonzero(inside):
                    groups.setdefault(tuple(int(v) for v in z[row]), []).append(row)
            for key in sorted(groups):
                hits = np.asarray(groups[key], dtype=int)
                labels = _clusters(sys, samples[hits], radius)
                for lab in range(labels.max() + 1):
                    part = hits[labels == lab]
                    if not inc_u[:, part].all(axis=1).any():
                        ok = False
                    pieces.append((i, key, lab, part, hits, labels))
        tried.append({"eps": eps, "radius": radius, "pieces": len(pieces), "refines": ok})
        if ok:
            break
        eps /= 2.0
    else:
        raise ConstructionError(
            "Kolmogorov-Ostrand eps search failed",
            {"module": "kolmogorov", "operation": "kolmogorov_ostrand_cover", "iterations": tried},
        )
    eps_used = Fraction(eps).limit_denominator(10**12)
    fams = [CubeFamilySpec(max(n, 1), m, i, eps_used) for i in range(1, m + 2)]
    piece_index = {(p[0], p[1], p[2]): idx for idx, p in enumerate(pieces)}
    cube_hits = {(p[0], p[1]): (p[4], p[5]) for p in pieces}

    def incidence_fn(states):
        states = np.atleast_2d(states)
        out = np.zeros((len(pieces), len(states)), dtype=bool)
        covered = U.incidence(states).any(axis=0)
        rows_ok = np.flatnonzero(covered)
        if len(rows_ok) == 0:
            return out
        if n == 0:
            ys = np.zeros((len(rows_ok), 0))
        else:
            ys = g(cm(states[rows_ok]), vertices)
        for i in range(1, m + 2):
            if n == 0:
                keyed = {(): np.arange(len(rows_ok))}
            else:
                z, inside = fams[i - 1].cube_keys(ys)
                keyed = {}
                for r in np.flatnonzero(inside):
                    keyed.setdefault(tuple(int(v) for v in z[r]), []).append(r)
            for key, rows in keyed.items():
                found = cube_hits.get((i, key))
                if found is None:
                    continue
                hits, labels = found
                rows = np.asarray(rows, dtype=int)
                nearest = sys.pairwise(states[rows_ok[rows]], samples[hits]).argmin(axis=1)
                for r, lab in zip(rows, labels[nearest]):
                    out[piece_index[(i, key, int(lab))], rows_ok[r]] = True
        return out

    regions = [
        Region(idx, p[0], hits=p[3], label=("piece", p[0], p[1], int(p[2]))) for idx, p in enumerate(pieces)
    ]
    F = FiniteCover(
        regions,
        sys,
        samples,
        kind="closed",
        incidence_fn=incidence_fn,
        meta={"n": n, "m": m, "eps": eps, "iterations": tried, "fill_distance": fill, "slope": slope},
    )
    F.meta["audit"] = ko_audit(F, U)
    return F


def ko_audit(F: FiniteCover, U: FiniteCover) -> dict:
    """Refinement, per-family disjointness and multiplicity on F's sample."""
    n, m = F.meta["n"], F.meta["m"]
    inc = F.sample_incidence
    inc_u = U.rebind(F.samples).sample_incidence if U.samples is not F.samples else U.sample_incidence
    refines = all(inc_u[:, r.hits].all(axis=1).any() for r in F.regions if len(r.hits))
    fam = np.array([r.family for r in F.regions])
    per_family = max(int(inc[fam == i].sum(axis=0).max()) for i in range(1, m + 2) if (fam == i).any())
    counts = np.zeros(inc.shape[1], dtype=int)
    for i in range(1, m + 2):
        counts += inc[fam == i].any(axis=0)
    need = m - n + 1
    return {
        "refines_U": bool(refines),
        "family_disjoint": per_family <= 1,
        "required_multiplicity": need,
        "min_multiplicity": int(counts.min()),
        "fraction_at_required": float((counts >= need).mean()),
        "below_required": np.flatnonzero(counts < need).tolist(),
        "samples": int(inc.shape[1]),
    }
