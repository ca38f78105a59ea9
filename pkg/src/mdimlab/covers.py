"""Finite covers audited on samples: order, mesh under translates, joins.

A region is a membership predicate on state rows.  Every cover is bound
to one sample array and caches, for each region, the indices of the
sample points it contains.  Diameters and "meets" tests are evaluated on
those hit sets; closures are approximated by a distance tolerance.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .systems import DynSystem

__all__ = [
    "Region",
    "FiniteCover",
    "order_profile",
    "mesh",
    "mesh_under_translates",
    "translate_diameters",
    "join_shifted",
    "join_with_shifts",
    "check_mdim_witness",
    "check_small",
    "check_fine",
    "check_refined_at",
    "closure_points",
    "cover_audit_rows",
    "CLOS_TOL",
]

CLOS_TOL = 1e-9

Predicate = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class Region:
    """One element of a cover.

    ``member`` maps an ``(M, width)`` state array to a boolean mask.
    ``points`` overrides the sampled hit set when a region is known through
    an explicit point cloud (e.g. a widened region).
    """

    id: int
    family: int
    member: Predicate | None = None
    hits: np.ndarray | None = None
    label: tuple = ()
    points: np.ndarray | None = None


class FiniteCover:
    """A finite family of regions audited against a sample.

    Parameters
    ----------
    regions : sequence of Region
    system : DynSystem
        Space the regions live in.
    samples : ndarray
        Sample states; hits are computed against it when missing.
    kind : {"open", "closed"}
    incidence_fn : callable, optional
        Batch membership ``states -> (R, M)`` bool array.  Constructions with
        a cheap joint evaluation (cube covers, joins, pull-backs) supply one.
    """

    CHUNK = 2048

    def __init__(
        self,
        regions: Sequence[Region],
        system: DynSystem,
        samples: np.ndarray,
        kind: str = "closed",
        enlargement: float = 0.0,
        sample_ref: str = "",
        incidence_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        meta: dict | None = None,
    ):
        if kind not in ("open", "closed"):
            raise ValueError("kind must be 'open' or 'closed'")
        self.regions = list(regions)
        ids = [r.id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise ValueError("region ids must be unique")
        self.system = system
        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.kind = kind
        self.enlargement = float(enlargement)
        self.sample_ref = sample_ref or f"sample[{len(self.samples)}]"
        self._incidence_fn = incidence_fn
        self.meta = dict(meta or {})
        missing = [r for r in self.regions if r.hits is None]
        if missing:
            inc = self.incidence(self.samples)
            for i, r in enumerate(self.regions):
                if r.hits is None:
                    r.hits = np.flatnonzero(inc[i])
        for i, r in enumerate(self.regions):
            if r.member is None:
                r.member = self._row_predicate(i)

    def _row_predicate(self, i: int) -> Predicate:
        if self._incidence_fn is not None:
            return lambda states, i=i: self._incidence_fn(states)[i]
        r = self.regions[i]
        if r.hits is None and r.points is None:
            raise ValueError("region without predicate, hits or batch membership")
        # a region known only through its points is that finite set
        pts = self.region_points(r)

        def member(states):
            states = np.atleast_2d(states)
            if len(pts) == 0:
                return np.zeros(len(states), dtype=bool)
            return (self.system.pairwise(states, pts) == 0).any(axis=1)

        return member

    def __len__(self) -> int:
        return len(self.regions)

    def incidence(self, states: np.ndarray) -> np.ndarray:
        """Boolean ``(R, M)`` membership of each state in each region."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if len(states) > self.CHUNK:
            return np.hstack(
                [self.incidence(states[s : s + self.CHUNK]) for s in range(0, len(states), self.CHUNK)]
            )
        if self._incidence_fn is not None:
            return np.asarray(self._incidence_fn(states), dtype=bool).reshape(len(self.regions), len(states))
        if not self.regions:
            return np.zeros((0, len(states)), dtype=bool)
        return np.vstack([np.asarray(r.member(states), dtype=bool) for r in self.regions])

    @property
    def sample_incidence(self) -> np.ndarray:
        inc = np.zeros((len(self.regions), len(self.samples)), dtype=bool)
        for i, r in enumerate(self.regions):
            inc[i, r.hits] = True
        return inc

    def region_points(self, region: Region) -> np.ndarray:
        if region.points is not None:
            return region.points
        return self.samples[region.hits]

    def uncovered(self) -> np.ndarray:
        """Indices of sample points lying in no region."""
        return np.flatnonzero(~self.sample_incidence.any(axis=0))

    def is_cover(self) -> bool:
        return len(self.regions) > 0 and len(self.uncovered()) == 0

    def families(self) -> dict[int, list[Region]]:
        out: dict[int, list[Region]] = {}
        for r in self.regions:
            out.setdefault(r.family, []).append(r)
        return out

    def rebind(self, samples: np.ndarray, sample_ref: str = "") -> "FiniteCover":
        """Same predicates, audited against another sample."""
        regions = [Region(r.id, r.family, r.member, None, r.label) for r in self.regions]
        return FiniteCover(
            regions,
            self.system,
            samples,
            kind=self.kind,
            enlargement=self.enlargement,
            sample_ref=sample_ref,
            incidence_fn=self._incidence_fn,
            meta=self.meta,
        )


def order_profile(c: FiniteCover, samples: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Order of ``c`` (max multiplicity) and the per-point counts."""
    if len(c.regions) == 0:
        raise ValueError("empty cover")
    if samples is None:
        counts = c.sample_incidence.sum(axis=0)
    else:
        samples = np.atleast_2d(samples)
        if len(samples) == 0:
            raise ValueError("samples must be nonempty")
        counts = c.incidence(samples).sum(axis=0)
    if len(counts) == 0:
        raise ValueError("samples must be nonempty")
    return int(counts.max()), counts


def _shift(system: DynSystem, states: np.ndarray, s, real: bool) -> np.ndarray:
    if real:
        return system.act_real(states, s)
    return system.act(states, s)


def translate_diameters(
    system: DynSystem, points: np.ndarray, shifts, real: bool = False, max_rows: int = 2_000_000
) -> np.ndarray:
    """``diam(points + s)`` for every shift ``s``."""
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    points = np.atleast_2d(points)
    h = len(points)
    if h < 2:
        return np.zeros(len(shifts))
    if h * (h - 1) // 2 > 2048:
        return np.array([system.diameter(_shift(system, points, s, real)) for s in shifts])
    i, j = np.triu_indices(h, k=1)
    out = np.empty(len(shifts))
    step = max(1, max_rows // len(i))
    for s0 in range(0, len(shifts), step):
        block = shifts[s0 : s0 + step]
        moved = _shift(system, np.repeat(points, len(block), axis=0), np.tile(block, h), real)
        moved = moved.reshape(h, len(block), -1)
        d = system.dist(
            moved[i].reshape(-1, moved.shape[2]), moved[j].reshape(-1, moved.shape[2])
        ).reshape(len(i), len(block))
        out[s0 : s0 + step] = d.max(axis=0)
    return out


def mesh(c: FiniteCover) -> float:
    """Largest sampled region diameter."""
    return max((c.system.diameter(c.region_points(r)) for r in c.regions), default=0.0)


def mesh_under_translates(
    c: FiniteCover, sys: DynSystem, zmax: int, samples: np.ndarray | None = None
) -> list[tuple[int, float]]:
    """``[(z, mesh(c + z)) for 0 <= z <= zmax]`` on the sampled hit sets."""
    if zmax > sys.horizon:
        raise ValueError(f"zmax={zmax} exceeds the system horizon {sys.horizon}")
    if samples is not None:
        c = c.rebind(samples)
    zs = np.arange(zmax + 1)
    worst = np.zeros(len(zs))
    for r in c.regions:
        pts = c.region_points(r)
        if len(pts) >= 2:
            worst = np.maximum(worst, translate_diameters(sys, pts, zs))
    return [(int(z), float(m)) for z, m in zip(zs, worst)]


def join_shifted(
    covers: Sequence[FiniteCover],
    shifts: Sequence,
    system: DynSystem,
    samples: np.ndarray,
    real: bool = False,
    sample_ref: str = "",
) -> FiniteCover:
    """Common refinement of ``covers[i] - shifts[i]``; empty intersections dropped.

    ``p`` lies in ``A - s`` iff ``p + s`` lies in ``A``.
    """
    samples = np.atleast_2d(samples)
    incs = [cv.incidence(_shift(system, samples, s, real)) for cv, s in zip(covers, shifts)]
    lists = [[np.flatnonzero(inc[:, k]) for k in range(len(samples))] for inc in incs]
    combos: dict[tuple, list[int]] = {}
    for k in range(len(samples)):
        for combo in itertools.product(*(lst[k] for lst in lists)):
            combos.setdefault(tuple(int(c) for c in combo), []).append(k)
    keys = sorted(combos)
    table = np.array(keys, dtype=int).reshape(len(keys), len(covers))

    def incidence_fn(states):
        out = np.ones((len(keys), len(states)), dtype=bool)
        for i, (cv, s) in enumerate(zip(covers, shifts)):
            inc = cv.incidence(_shift(system, states, s, real))
            out &= inc[table[:, i]]
        return out

    regions = []
    for rid, key in enumerate(keys):
        label = tuple((i, covers[i].regions[c].id) for i, c in enumerate(key))
        regions.append(Region(rid, 0, None, np.array(combos[key], dtype=int), label))
    return FiniteCover(
        regions,
        system,
        samples,
        kind=covers[0].kind if covers else "closed",
        sample_ref=sample_ref,
        incidence_fn=incidence_fn,
        meta={"shifts": [float(s) for s in shifts]},
    )


def join_with_shifts(
    covers: Sequence[FiniteCover], sys: DynSystem, m: int, samples: np.ndarray
) -> FiniteCover:
    """``A_0 v (A_1 - m) v (A_2 - 2m) v ...``.

    If each ``A_i`` has ``mesh(A_i + z) < eps`` for ``0 <= z < m`` then the
    join has ``mesh(B + z) < eps`` for ``0 <= z < m * len(covers)``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if len(covers) == 1:
        return covers[0].rebind(samples)
    return join_shifted(covers, [i * m for i in range(len(covers))], sys, samples)


def check_mdim_witness(
    c: FiniteCover, sys: DynSystem, d: float, eps: float, samples: np.ndarray | None = None
) -> bool:
    """True iff ``mesh(c + z) < eps`` for every integer ``0 <= z*d < ord(c)``."""
    if samples is not None:
        c = c.rebind(samples)
    ord_, _ = order_profile(c)
    zmax = 0
    while (zmax + 1) * d < ord_:
        zmax += 1
    return all(m < eps for _, m in mesh_under_translates(c, sys, zmax))


def _rgrid(beta: float, rgrid: int | None) -> int:
    if rgrid is None:
        rgrid = max(2, int(round(64 * beta)))
    if rgrid < 2:
        raise ValueError("rgrid must be >= 2")
    return int(rgrid)


def check_small(region: Region, torus, alpha: float, beta: float, samples=None, rgrid: int | None = None) -> bool:
    """``diam(region + r) < alpha`` for ``r`` on a grid of ``[-beta, beta]``."""
    rgrid = _rgrid(beta, rgrid)
    pts = region.points if region.points is not None else np.atleast_2d(samples)[region.hits]
    if len(pts) < 2:
        return True
    rs = np.linspace(-beta, beta, rgrid)
    return bool(np.all(translate_diameters(torus, pts, rs, real=True) < alpha))


def check_fine(c: FiniteCover, torus, alpha: float, beta: float, samples=None, rgrid: int | None = None) -> bool:
    """``mesh(c + r) < alpha`` for ``r`` on a grid of ``[0, beta]``."""
    rgrid = _rgrid(beta, rgrid)
    if samples is not None:
        c = c.rebind(samples)
    rs = np.linspace(0.0, beta, rgrid)
    for r in c.regions:
        pts = c.region_points(r)
        if len(pts) >= 2 and not np.all(translate_diameters(torus, pts, rs, real=True) < alpha):
            return False
    return True


def closure_points(region: Region, system: DynSystem, samples: np.ndarray, clos_tol: float = CLOS_TOL) -> np.ndarray:
    """Hit points of ``region`` plus sample points within ``clos_tol`` of them."""
    samples = np.atleast_2d(samples)
    hits = region.points if region.points is not None else samples[region.hits]
    if len(hits) == 0:
        return hits
    near = (system.pairwise(samples, hits) <= clos_tol).any(axis=1)
    return np.vstack([hits, samples[near]])


def check_refined_at(
    c: FiniteCover,
    W: Region,
    torus,
    alpha: float,
    beta: float,
    samples=None,
    rgrid: int | None = None,
    clos_tol: float = CLOS_TOL,
    report: dict | None = None,
) -> tuple[bool, bool]:
    """Grid audit of the two conditions of being (alpha, beta)-refined at ``W``.

    Condition 1: no translate ``A + r`` meets both ``cl(W + r1)`` and
    ``cl(W + r2)`` with ``|r1 - r2| >= 1``.  Only differences ``s = r1 - r``
    matter: ``A + r`` meets ``W + r1`` iff ``A`` meets ``W + s``.  A triple
    ``(r, r1, r2)`` inside ``[-beta, beta]`` exists for ``s1 < s2`` iff
    ``max(0, s1, s2) - min(0, s1, s2) <= 2*beta``.

    Condition 2: every region whose sweep meets the sweep of ``W`` has all
    translate diameters below ``alpha``.
    """
    rgrid = _rgrid(beta, rgrid)
    samples = c.samples if samples is None else np.atleast_2d(samples)
    wpts = closure_points(W, torus, samples, clos_tol)
    h = 2.0 * beta / (rgrid - 1)
    steps = 2 * (rgrid - 1)
    svals = np.arange(-steps, steps + 1) * h
    cond1 = True
    cond2 = True
    bad1: list[int] = []
    bad2: list[int] = []
    if len(wpts) == 0:
        if report is not None:
            report.update({"w_points": 0, "cond1_failures": [], "cond2_failures": []})
        return True, True
    moved = torus.act_real(np.repeat(wpts, len(svals), axis=0), np.tile(svals, len(wpts)))
    inc = c.incidence(moved).reshape(len(c.regions), len(wpts), len(svals)).any(axis=1)
    rs = np.linspace(-beta, beta, rgrid)
    for k, reg in enumerate(c.regions):
        s_hit = svals[inc[k]]
        if len(s_hit) == 0:
            continue
        # condition 1: smallest admissible partner s2 >= s1 + 1 for each s1
        j = np.searchsorted(s_hit, s_hit + 1.0 - 1e-12)
        ok = j < len(s_hit)
        if ok.any():
            s1 = s_hit[ok]
            s2 = s_hit[j[ok]]
            span = np.maximum.reduce([np.zeros_like(s1), s1, s2]) - np.minimum.reduce([np.zeros_like(s1), s1, s2])
            if np.any(span <= 2.0 * beta + 1e-12):
                cond1 = False
                bad1.append(reg.id)
        # condition 2
        pts = c.region_points(reg)
        if len(pts) >= 2 and not np.all(translate_diameters(torus, pts, rs, real=True) < alpha):
            cond2 = False
            bad2.append(reg.id)
    if report is not None:
        report.update(
            {
                "w_points": int(len(wpts)),
                "rgrid": rgrid,
                "clos_tol": clos_tol,
                "cond1_failures": bad1,
                "cond2_failures": bad2,
                "note": "grid approximation of real translates; not exhaustive",
            }
        )
    return cond1, cond2


def cover_audit_rows(c: FiniteCover, sys: DynSystem, zmax: int) -> list[dict]:
    """One row per region: id, family, hit count and diameters of ``region + z``."""
    zs = np.arange(zmax + 1)
    rows = []
    for r in c.regions:
        pts = c.region_points(r)
        diams = translate_diameters(sys, pts, zs) if len(pts) >= 2 else np.zeros(len(zs))
        row = {"region_id": r.id, "family": r.family, "hits": int(len(r.hits))}
        row.update({f"diam_z{int(z)}": float(v) for z, v in zip(zs, diams)})
        rows.append(row)
    return rows

