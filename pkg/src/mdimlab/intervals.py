"""Families of disjoint closed intervals in ``[0, q)`` met by every coset ``t + Z``.

``E_1, ..., E_{q-1}`` are disjoint closed intervals of length > 1, so each
coset meets all of them.  Removing a small neighbourhood ``Omega`` of a
``Q``-independent set ``A`` (containing 1) chops them into short pieces;
``Omega`` holds at most one point of any coset, so every coset still meets
at least ``q - 2`` of the chopped families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConstructionError
from .quadratic import QuadraticNumber, independence_certificate, primes

__all__ = [
    "IndependentSet",
    "IntervalSystem",
    "build_independent_set",
    "phi_sigma",
    "phi_values",
    "exact_sigma",
    "build_interval_system",
    "count_met",
    "count_met_many",
    "MAX_GENERATORS",
]

MAX_GENERATORS = 10_000
MAX_SIGMA_GRID = 2**22


@dataclass(frozen=True)
class IndependentSet:
    q: int
    points: tuple
    certificate: dict = field(compare=False)

    @property
    def values(self) -> np.ndarray:
        return np.array([float(p) for p in self.points])

    @property
    def independent(self) -> bool:
        return bool(self.certificate["independent"])


def make_independent_set(q: int, points) -> IndependentSet:
    """Wrap explicit quadratic numbers; the certificate records (in)dependence."""
    points = tuple(points)
    return IndependentSet(q, points, independence_certificate(points))


def build_independent_set(q: int, count: int, seed: int = 0) -> IndependentSet:
    """``{1}`` plus ``count - 1`` points ``(q/count)(slot + frac(sqrt(p)))``.

    The slots are the ``count`` cells of width ``q/count`` except the one
    containing 1, so consecutive points are at most ``2q/count`` apart.
    Distinct primes make the set ``Q``-independent.
    """
    if q <= 2:
        raise ValueError("q must be > 2")
    if count < 2:
        raise ValueError("count must be >= 2")
    if count > MAX_GENERATORS:
        raise ValueError(f"count {count} exceeds the generator bound {MAX_GENERATORS}")
    width = Fraction(q, count)
    one_slot = int(Fraction(1) / width)
    ps = primes(count + seed)[seed:]
    points = [QuadraticNumber(Fraction(1))]
    k = 0
    for slot in range(count):
        if slot == one_slot:
            continue
        p = ps[k]
        k += 1
        root_floor = math.isqrt(p)
        # width * (slot + sqrt(p) - floor(sqrt(p)))
        points.append(QuadraticNumber(width * (slot - root_floor), width, p))
    return make_independent_set(q, points)


def _coset_points(values: np.ndarray) -> np.ndarray:
    base = np.sort(values % 1.0)
    return np.concatenate([base - 2.0, base - 1.0, base, base + 1.0, base + 2.0])


def phi_values(A: IndependentSet, ts) -> np.ndarray:
    """``phi(t)``: the sum of the two smallest distances from ``t`` to ``A + Z``.

    Equal to the infimum over ``(a1, z1) != (a2, z2)`` of
    ``|t + z1 - a1| + |t + z2 - a2|``.
    """
    ts = np.asarray(ts, dtype=float)
    pts = _coset_points(A.values)
    r = ts % 1.0
    idx = np.searchsorted(pts, r)
    cand = np.stack([pts[np.clip(idx + k, 0, len(pts) - 1)] for k in (-2, -1, 0, 1)], axis=-1)
    d = np.sort(np.abs(cand - r[..., None]), axis=-1)
    return d[..., 0] + d[..., 1]


def exact_sigma(A: IndependentSet) -> float:
    """``inf phi = min(1, min_{a != a'} dist(a - a', Z))``."""
    v = np.sort(A.values % 1.0)
    if len(v) < 2:
        return 1.0
    gaps = np.diff(np.concatenate([v, [v[0] + 1.0]]))
    return float(min(1.0, gaps.min()))


def phi_sigma(A: IndependentSet, grid: int = 1000) -> tuple:
    """``phi`` and a certified lower bound for ``sigma = inf phi``.

    ``phi`` is 1-periodic and 2-Lipschitz.  On a grid of spacing ``h`` every
    ``t`` is within ``h/2`` of a node, hence ``sigma >= min_grid phi - h``.
    The grid is doubled until this bound is positive (or the cap is hit).
    """
    if grid < 100:
        raise ValueError("grid must be >= 100")
    g = int(grid)
    while True:
        ts = np.arange(g) / g
        lower = float(phi_values(A, ts).min()) - 1.0 / g
        if lower > 0 or g >= MAX_SIGMA_GRID:
            break
        g *= 2
    report = {"grid": g, "sigma_lower": lower, "independent": A.independent}
    if lower <= 0:
        raise ConstructionError(
            "sigma lower bound is not positive (set numerically dependent)",
            {"module": "intervals", "operation": "phi_sigma", **report},
        )
    return (lambda t: phi_values(A, t)), lower


@dataclass
class IntervalSystem:
    q: int
    families: list  # families[p-1] = sorted list of (lo, hi), p = 1..q
    sigma_lower: float
    omega_radius: float
    points: np.ndarray = field(repr=False)
    base_intervals: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @property
    def mesh(self) -> float:
        return max((hi - lo for fam in self.families for lo, hi in fam), default=0.0)

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "families": [[[lo, hi] for lo, hi in fam] for fam in self.families],
            "sigma_lower": self.sigma_lower,
            "mesh": self.mesh,
        }

    def locate(self, u):
        """``(family, interval index)`` arrays for values ``u`` (``-1`` if none)."""
        u = np.asarray(u, dtype=float)
        fam_out = np.full(u.shape, -1, dtype=int)
        idx_out = np.full(u.shape, -1, dtype=int)
        for p, fam in enumerate(self.families, start=1):
            if not fam:
                continue
            lo = np.array([a for a, _ in fam])
            hi = np.array([b for _, b in fam])
            j = np.searchsorted(lo, u, side="right") - 1
            jj = np.clip(j, 0, len(lo) - 1)
            hit = (j >= 0) & (u <= hi[jj])
            fam_out[hit] = p
            idx_out[hit] = jj[hit]
        return fam_out, idx_out


def _base_intervals(q: int) -> list[tuple[float, float]]:
    L = q / (q - 1)
    g = (L - 1.0) / 2.0
    return [((i - 1) * L + g / 2, i * L - g / 2) for i in range(1, q)]


def _chop(lo: float, hi: float, centers: np.ndarray, radius: float) -> list[tuple[float, float]]:
    """Components of ``[lo, hi]`` minus the open ``radius``-balls around ``centers``."""
    out = []
    cur = lo
    for c in np.sort(centers[(centers + radius > lo) & (centers - radius < hi)]):
        a, b = c - radius, c + radius
        if a >= cur and a > lo:
            out.append((cur, min(a, hi)))
        cur = max(cur, b)
        if cur > hi:
            break
    if cur <= hi:
        out.append((cur, hi))
    return [(a, b) for a, b in out if b >= a]


def _assemble(q: int, A: IndependentSet, sigma_lower: float, populate_last: bool) -> IntervalSystem:
    radius = sigma_lower / 3.0
    centers = A.values
    base = _base_intervals(q)
    families = [_chop(lo, hi, centers, radius) for lo, hi in base]
    if populate_last:
        L = q / (q - 1)
        g = (L - 1.0) / 2.0
        filler = [(i * L - g / 4, i * L + g / 4) for i in range(1, q - 1)]
        families.append(filler)
    else:
        families.append([])
    return IntervalSystem(q, families, sigma_lower, radius, centers, base)


def build_interval_system(
    q: int, mesh_bound: float, seed: int = 0, populate_last: bool = False, audit_grid: int = 1000
) -> IntervalSystem:
    """Families ``E_1..E_q`` with mesh <= ``mesh_bound`` met ``q - 2`` times by each coset.

    The density of ``A`` is raised (doubling the point count) until the
    chopped intervals are short enough; ``E_q`` is empty unless
    ``populate_last`` adds filler intervals in the gaps.
    """
    if q <= 2:
        raise ValueError("q must be > 2")
    if mesh_bound <= 0:
        raise ValueError("mesh_bound must be positive")
    count = max(3, math.ceil(2 * q / mesh_bound))
    tried = []
    while True:
        if count > MAX_GENERATORS:
            raise ConstructionError(
                "mesh_bound smaller than achievable with the available generators",
                {
                    "module": "intervals",
                    "operation": "build_interval_system",
                    "mesh_bound": mesh_bound,
                    "attempts": tried,
                    "max_generators": MAX_GENERATORS,
                },
            )
        A = build_independent_set(q, count, seed)
        if not A.independent:
            raise ConstructionError("generated set is not independent", {"module": "intervals", "count": count})
        _, sigma_lower = phi_sigma(A)
        E = _assemble(q, A, sigma_lower, populate_last)
        tried.append({"count": count, "sigma_lower": sigma_lower, "mesh": E.mesh})
        if E.mesh <= mesh_bound:
            break
        count *= 2
    ts = np.arange(audit_grid) / audit_grid
    met = count_met_many(ts, E)
    omega = omega_hits(ts, E)
    E.report = {
        "count": count,
        "attempts": tried,
        "sigma_lower": sigma_lower,
        "sigma_exact": exact_sigma(A),
        "min_count_met": int(met.min()),
        "max_omega_points": int(omega.max()),
        "audit_grid": audit_grid,
    }
    if met.min() < q - 2 or omega.max() > 1:
        raise ConstructionError(
            "interval system audit failed", {"module": "intervals", "operation": "build_interval_system", **E.report}
        )
    return E


def count_met_many(ts, E: IntervalSystem) -> np.ndarray:
    """Number of families containing a point of ``t + Z`` for each ``t``."""
    ts = np.asarray(ts, dtype=float)
    r = ts % 1.0
    met = np.zeros((len(r), E.q + 1), dtype=bool)
    for z in range(0, int(math.ceil(E.q)) + 1):
        fam, _ = E.locate(r + z)
        ok = fam > 0
        met[np.flatnonzero(ok), fam[ok]] = True
    return met.sum(axis=1)


def count_met(t: float, E: IntervalSystem) -> int:
    return int(count_met_many(np.array([t]), E)[0])


def omega_hits(ts, E: IntervalSystem) -> np.ndarray:
    """How many points of ``t + Z`` lie in the open ``omega_radius``-neighbourhood of ``A``."""
    ts = np.asarray(ts, dtype=float) % 1.0
    out = np.zeros(len(ts), dtype=int)
    centers = np.sort(E.points)
    for z in range(-1, int(math.ceil(E.q)) + 2):
        x = ts + z
        j = np.searchsorted(centers, x)
        near = np.zeros(len(x), dtype=bool)
        for k in (j - 1, j):
            kk = np.clip(k, 0, len(centers) - 1)
            near |= np.abs(x - centers[kk]) < E.omega_radius
        out += near
    return out
