"""Counting machinery behind the fiber bound, plus the collapsed map psi.

Collections ``D_1..D_k`` on ``X`` are assembled from a torus cover split
into families ``F_1..F_m`` (``m = q k``) and an interval system
``E_1..E_q`` through the level function ``xi``: ``F_f (+)_xi B`` is
``F_f + B`` restricted to ``xi^-1(B + qZ)``.  A point ``x`` is marked by
``(i, j)`` when ``x + i`` lies in ``D_j``.
"""
from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .covers import CLOS_TOL, FiniteCover, Region
from .errors import AuditError
from .intervals import IntervalSystem
from .systems import DynSystem

__all__ = [
    "FiberParams",
    "gamma_bound",
    "delta_bound",
    "delta_star",
    "oplus_xi",
    "MarkedCollections",
    "build_marked_collections",
    "MarkingReport",
    "marking_report",
    "CollapsedMap",
    "build_psi",
    "psi_audit",
    "fiber_multiplicity",
    "cosine_observable",
    "weighted_sum_observable",
]


def _exact(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**9)
    return Fraction(x)


def gamma_bound(k, d) -> float:
    """``floor(k/(k-d)) * k/(k-d)``; the integer fiber bound is its floor."""
    k, d = _exact(k), _exact(d)
    if d < 0:
        raise ValueError("d must be >= 0")
    if d >= k:
        raise ValueError("need d < k")
    r = k / (k - d)
    return float(math.floor(r) * r)


def delta_bound(k, d, q, l) -> float:
    """``(1 - 3q/l)(1 - 2k/((k-d)q))``."""
    k, d = _exact(k), _exact(d)
    return float((1 - Fraction(3 * q, l)) * (1 - 2 * k / ((k - d) * q)))


def delta_star(k, d, q) -> float:
    """``1 - 6k/(q(k-d))``."""
    k, d = _exact(k), _exact(d)
    return float(1 - 6 * k / (q * (k - d)))


@dataclass(frozen=True)
class FiberParams:
    k: int
    d: float
    n: int
    q: int
    l: int
    eps: float
    delta: float
    m: int | None = None
    mdim_witness: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.d < self.k:
            raise ValueError(f"need 0 <= d < k, got d={self.d}, k={self.k}")
        if self.q <= 2:
            raise ValueError("q must be > 2")
        m = self.q * self.k if self.m is None else self.m
        if m != self.q * self.k:
            raise ValueError("m must equal q*k")
        object.__setattr__(self, "m", m)
        if self.l <= self.q:
            raise ValueError("l must exceed q")
        if not self.mdim_witness < self.n / self.q < self.d:
            raise ValueError(f"need mdim witness {self.mdim_witness} < n/q = {self.n / self.q} < d = {self.d}")
        if self.eps <= 0 or self.delta <= 0:
            raise ValueError("eps and delta must be positive")

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "d": self.d,
            "n": self.n,
            "q": self.q,
            "m": self.m,
            "l": self.l,
            "eps": self.eps,
            "delta": self.delta,
        }


# -- (+)_xi ---------------------------------------------------------------------


def _b_candidates(u: np.ndarray, lo: np.ndarray, hi: np.ndarray, nb: int) -> np.ndarray:
    """``(M, 1 + nb)`` offsets: ``u`` itself and ``nb`` evenly spaced points of ``[lo, hi]``."""
    if nb <= 0:
        return u[:, None]
    frac = (np.arange(nb) + 0.5) / nb
    return np.column_stack([u, lo[:, None] + (hi - lo)[:, None] * frac[None, :]])


def _xi_split(xi_vals: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    z = np.floor(xi_vals / q)
    return z.astype(np.int64), xi_vals - q * z


def oplus_xi(A: FiniteCover, B, xi, q: int, samples, nb: int = 3, torus=None) -> FiniteCover:
    """``A (+)_xi B`` as a region collection on ``X``.

    Element ``(a, z)`` holds the points ``y`` with ``xi(y)`` in ``B + qz`` and
    ``y`` in ``a + b`` for some ``b`` in ``B``.  The offsets tried are
    ``b = xi(y) - qz`` and ``nb`` grid points of ``B``.
    """
    torus = A.system if torus is None else torus
    lo, hi = float(B[0]), float(B[1])
    if not 0.0 <= lo <= hi < q:
        raise ValueError("B must be a subinterval of [0, q)")
    samples = np.atleast_2d(samples)

    def raw(states):
        states = np.atleast_2d(states)
        v = np.asarray(xi(states), dtype=float)
        z, u = _xi_split(v, q)
        ok = (u >= lo) & (u <= hi)
        rows = np.flatnonzero(ok)
        inc = np.zeros((len(A.regions), len(states)), dtype=bool)
        if len(rows):
            bs = _b_candidates(u[rows], np.full(len(rows), lo), np.full(len(rows), hi), nb)
            base = np.repeat(torus.embed(states[rows]), bs.shape[1], axis=0)
            moved = torus.act_real(base, -bs.ravel())
            inc[:, rows] = A.incidence(moved).reshape(len(A.regions), len(rows), bs.shape[1]).any(axis=2)
        return inc, z

    inc0, z0 = raw(samples)
    keys = sorted({(r, int(z0[c])) for r, c in zip(*np.nonzero(inc0))})
    index = {k: i for i, k in enumerate(keys)}

    def incidence_fn(states):
        inc, z = raw(states)
        out = np.zeros((len(keys), inc.shape[1]), dtype=bool)
        for r, c in zip(*np.nonzero(inc)):
            i = index.get((int(r), int(z[c])))
            if i is not None:
                out[i, c] = True
        return out

    regions = [Region(i, A.regions[r].family, label=("oplus", A.regions[r].id, z)) for i, (r, z) in enumerate(keys)]
    base_sys = getattr(torus, "base", torus)
    return FiniteCover(regions, base_sys, samples, incidence_fn=incidence_fn, meta={"B": [lo, hi], "q": q})


class MarkedCollections:
    """``D_1..D_k`` built from families ``F_1..F_m``, intervals ``E_1..E_q`` and ``xi``.

    ``D_j`` is the union of ``F_{j+(p-1)k} (+)_xi E_p`` over ``p = 1..q``.
    An element of ``D_j`` is keyed by ``(piece, family p, interval, z)``.
    """

    def __init__(self, F: FiniteCover, E: IntervalSystem, xi, params: FiberParams, torus, samples, nb: int = 3):
        self.F = F
        self.E = E
        self.xi = xi
        self.params = params
        self.torus = torus
        self.nb = nb
        self.samples = np.atleast_2d(samples)
        self.piece_family = np.array([r.family for r in F.regions])
        k, q = params.k, params.q
        # family f (1..m) feeds D_j with j = (f-1) % k + 1 through E_p, p = (f-1)//k + 1
        f = self.piece_family
        self.piece_j = np.where((f >= 1) & (f <= params.m), (f - 1) % k + 1, 0)
        self.piece_p = np.where((f >= 1) & (f <= params.m), (f - 1) // k + 1, 0)
        if E.q != q:
            raise ValueError("interval system and parameters disagree on q")
        self._cache: tuple = (None, None)
        raw = self._raw(self.samples)
        self.keys = sorted(set(raw))
        self.index = {key: i for i, key in enumerate(self.keys)}
        self.key_j = np.array([self.piece_j[key[0]] for key in self.keys], dtype=int)
        self._sample_raw = raw

    def _raw(self, states) -> dict:
        """``{(piece, p, interval, z): [state indices]}`` for the given X states."""
        states = np.atleast_2d(states)
        tag = (states.shape, hashlib.sha1(np.ascontiguousarray(states).tobytes()).digest())
        if self._cache[0] == tag:
            return self._cache[1]
        out = self._raw_uncached(states)
        self._cache = (tag, out)
        return out

    def _raw_uncached(self, states) -> dict:
        q = self.params.q
        v = np.asarray(self.xi(states), dtype=float)
        z, u = _xi_split(v, q)
        fam, idx = self.E.locate(u)
        rows = np.flatnonzero(fam > 0)
        out: dict[tuple, list[int]] = {}
        if len(rows) == 0:
            return out
        lo = np.array([self.E.families[p - 1][i][0] for p, i in zip(fam[rows], idx[rows])])
        hi = np.array([self.E.families[p - 1][i][1] for p, i in zip(fam[rows], idx[rows])])
        bs = _b_candidates(u[rows], lo, hi, self.nb)
        base = np.repeat(self.torus.embed(states[rows]), bs.shape[1], axis=0)
        moved = self.torus.act_real(base, -bs.ravel())
        inc = self.F.incidence(moved).reshape(len(self.F.regions), len(rows), bs.shape[1]).any(axis=2)
        inc &= self.piece_p[:, None] == fam[rows][None, :]
        for r, c in zip(*np.nonzero(inc)):
            row = rows[c]
            key = (int(r), int(fam[row]), int(idx[row]), int(z[row]))
            out.setdefault(key, []).append(int(row))
        return out

    def incidence(self, states) -> np.ndarray:
        """Membership of states in the sample-discovered elements of all ``D_j``."""
        states = np.atleast_2d(states)
        out = np.zeros((len(self.keys), len(states)), dtype=bool)
        for key, rows in self._raw(states).items():
            i = self.index.get(key)
            if i is not None:
                out[i, rows] = True
        return out

    def covered(self, states) -> np.ndarray:
        """``(k, M)``: is ``states[c]`` covered by ``D_j`` (any element, discovered or not)."""
        states = np.atleast_2d(states)
        out = np.zeros((self.params.k, len(states)), dtype=bool)
        for key, rows in self._raw(states).items():
            out[self.piece_j[key[0]] - 1, rows] = True
        return out

    def collection(self, j: int) -> FiniteCover:
        """``D_j`` as a region collection on the sample."""
        sel = np.flatnonzero(self.key_j == j)
        regions = []
        for new_id, i in enumerate(sel):
            key = self.keys[i]
            regions.append(
                Region(new_id, j, hits=np.array(sorted(self._sample_raw[key]), dtype=int), label=("D", j) + key)
            )
        parent = self

        def incidence_fn(states, sel=sel):
            return parent.incidence(states)[sel]

        base = getattr(self.torus, "base", self.torus)
        return FiniteCover(regions, base, self.samples, incidence_fn=incidence_fn, meta={"j": j})


def build_marked_collections(
    F: FiniteCover,
    E: IntervalSystem,
    xi,
    params: FiberParams,
    torus,
    samples,
    W=None,
    D_W: FiniteCover | None = None,
    strict: bool = True,
    nb: int = 3,
    rgrid: int | None = None,
    audit_preconditions: bool = True,
) -> tuple[MarkedCollections, dict]:
    """Assemble ``D_1..D_k`` and audit them.

    Preconditions on the widened families ``F+ = F + [-mesh E, mesh E]``
    (per-family disjointness, ``(eps, q)``-fineness and, when ``W`` is
    given, ``(eps, 2l)``-refinement at ``W``) are audited on samples; with
    ``strict`` any failure raises :class:`AuditError`, otherwise the
    outcomes are only recorded.  Postconditions: elements of each ``D_j``
    are disjoint, have diameter ``< eps`` and meet at most one element of
    ``D_W``.
    """
    from .covers import check_fine, check_refined_at

    if params.q <= 2:
        raise ValueError("q must be > 2")
    fams = {r.family for r in F.regions}
    if not set(range(1, params.m + 1)) <= fams:
        raise ValueError(f"F must provide families 1..{params.m}")
    report: dict = {"strict": strict}
    if audit_preconditions:
        widen = E.mesh
        report["F_plus_disjoint"] = _widened_disjoint(F, torus, widen, params.m)
        Fp = _widened_cover(F, torus, widen)
        report["F_plus_fine"] = check_fine(Fp, torus, params.eps, params.q, rgrid=rgrid)
        if W is not None:
            sub: dict = {}
            c1, c2 = check_refined_at(Fp, W, torus, params.eps, 2 * params.l, rgrid=rgrid, report=sub)
            report["F_plus_refined"] = [c1, c2]
            report["F_plus_refined_audit"] = {k: v for k, v in sub.items() if k != "cond1_failures"}
            report["F_plus_refined_audit"]["cond1_failure_count"] = len(sub.get("cond1_failures", []))
        failed = [
            name
            for name in ("F_plus_disjoint", "F_plus_fine")
            if not report[name]
        ] + (["F_plus_refined"] if W is not None and not all(report["F_plus_refined"]) else [])
        report["precondition_failures"] = failed
        if strict and failed:
            raise AuditError(
                "marked-collection preconditions failed",
                {"module": "fiber", "operation": "build_marked_collections", **report},
            )
    D = MarkedCollections(F, E, xi, params, torus, samples, nb)
    post = collections_audit(D, params.eps, D_W)
    report.update(post)
    if strict and not post["postconditions_hold"]:
        raise AuditError("marked-collection postconditions failed", {"module": "fiber", **report})
    return D, report


def _widened_points(F: FiniteCover, torus, widen: float, steps: int = 5) -> list[np.ndarray]:
    ss = np.linspace(-widen, widen, steps)
    out = []
    for r in F.regions:
        pts = F.region_points(r)
        if len(pts) == 0:
            out.append(pts)
            continue
        moved = torus.act_real(np.repeat(pts, len(ss), axis=0), np.tile(ss, len(pts)))
        out.append(moved)
    return out


def _widened_cover(F: FiniteCover, torus, widen: float) -> FiniteCover:
    pts = _widened_points(F, torus, widen)
    regions = [Region(r.id, r.family, hits=r.hits, label=r.label, points=p) for r, p in zip(F.regions, pts)]

    def incidence_fn(states, ss=np.linspace(-widen, widen, 5)):
        states = np.atleast_2d(states)
        moved = torus.act_real(np.repeat(states, len(ss), axis=0), np.tile(ss, len(states)))
        return F.incidence(moved).reshape(len(F.regions), len(states), len(ss)).any(axis=2)

    return FiniteCover(regions, torus, F.samples, kind=F.kind, incidence_fn=incidence_fn)


def _widened_disjoint(F: FiniteCover, torus, widen: float, m: int) -> bool:
    """No point of a piece, moved by up to ``2 widen``, lands in another piece of its family."""
    ss = np.linspace(-2 * widen, 2 * widen, 9)
    fam = np.array([r.family for r in F.regions])
    for idx, r in enumerate(F.regions):
        pts = F.region_points(r)
        if len(pts) == 0 or not 1 <= r.family <= m:
            continue
        moved = torus.act_real(np.repeat(pts, len(ss), axis=0), np.tile(ss, len(pts)))
        inc = F.incidence(moved)
        others = (fam == r.family) & (np.arange(len(fam)) != idx)
        if inc[others].any():
            return False
    return True


def collections_audit(D: MarkedCollections, eps: float, D_W: FiniteCover | None = None) -> dict:
    out: dict = {"elements": {}, "disjoint": {}, "max_diameter": {}, "max_DW_met": {}}
    ok = True
    sys = getattr(D.torus, "base", D.torus)
    for j in range(1, D.params.k + 1):
        Dj = D.collection(j)
        inc = Dj.sample_incidence
        disjoint = bool(inc.sum(axis=0).max() <= 1) if len(Dj.regions) else True
        diam = max((sys.diameter(Dj.region_points(r)) for r in Dj.regions), default=0.0)
        met = 0
        if D_W is not None and len(Dj.regions):
            met = _max_met(Dj, D_W, sys)
        out["elements"][j] = len(Dj.regions)
        out["disjoint"][j] = disjoint
        out["max_diameter"][j] = diam
        out["max_DW_met"][j] = met
        ok &= disjoint and diam < eps and met <= 1
    out["postconditions_hold"] = bool(ok)
    return out


def _max_met(Dj: FiniteCover, D_W: FiniteCover, sys, clos_tol: float = CLOS_TOL) -> int:
    """Largest number of ``D_W`` elements meeting (the closure of) one ``D_j`` element."""
    wpts = [D_W.region_points(w) for w in D_W.regions]
    return max((len(_met_owners(Dj.region_points(r), wpts, sys, clos_tol)) for r in Dj.regions), default=0)


def _met_owners(pts: np.ndarray, clouds: list, sys, clos_tol: float) -> set:
    """Indices of the point clouds within ``clos_tol`` of some point of ``pts``."""
    sizes = [len(c) for c in clouds]
    if len(pts) == 0 or not any(sizes):
        return set()
    stacked = np.vstack([c for c in clouds if len(c)])
    owner = np.repeat(np.arange(len(clouds)), sizes)
    near = (sys.pairwise(pts, stacked) <= clos_tol).any(axis=0)
    return set(owner[near].tolist())


# -- marking ------------------------------------------------------------------


@dataclass
class MarkingReport:
    """Marking sets ``S_x`` with their bounds.

    ``passed`` is the global bound ``|S_x| >= (l/q - 3)(m - n - 2k)``;
    ``window_ok`` records the stronger per-window count separately.
    """

    params: dict
    S_size: int
    S_x: dict
    window_counts: dict
    Delta: float
    Delta_star: float
    gamma: float
    S_star_size: int
    required_window: int
    global_bound: float
    min_window: int | None = None
    min_S_x: int | None = None
    passed: bool = True
    window_ok: bool = True
    excluded: list = field(default_factory=list)

    @property
    def S(self) -> list[tuple[int, int]]:
        l, k = self.params["l"], self.params["k"]
        return [(i, j) for i in range(l) for j in range(1, k + 1)]

    def to_json(self) -> dict:
        return {
            "params": self.params,
            "S_size": self.S_size,
            "S_star_size": self.S_star_size,
            "Delta": self.Delta,
            "Delta_star": self.Delta_star,
            "gamma": self.gamma,
            "floor_gamma": math.floor(self.gamma),
            "required_window": self.required_window,
            "global_bound": self.global_bound,
            "marking_min": self.min_S_x,
            "window_min": self.min_window,
            "window_bound_holds": self.window_ok,
            "points": len(self.S_x),
            "passed": self.passed,
        }

    def rows(self) -> list[dict]:
        return [
            {"point": int(p), "S_x": len(s), "min_window": min(self.window_counts[p]) if self.window_counts[p] else None}
            for p, s in sorted(self.S_x.items())
        ]


def marking_report(
    x_list,
    D,
    params: FiberParams,
    sys: DynSystem,
    xi,
    W_plus: Callable | None = None,
) -> MarkingReport:
    """``S_x`` for each ``x`` and the window and global counting bounds.

    ``D`` provides ``covered(states) -> (k, M)``.  ``W_plus`` (a predicate on
    states) rejects points of ``W + [-l, l]``.
    """
    x_list = np.atleast_2d(np.asarray(x_list, dtype=float)) if len(x_list) else np.zeros((0, sys.width))
    k, q, l, m, n, d = params.k, params.q, params.l, params.m, params.n, params.d
    if W_plus is not None and len(x_list):
        bad = np.flatnonzero(W_plus(x_list))
        if len(bad):
            raise ValueError(f"points {bad.tolist()} lie in W+ (not in X-)")
    required = m - n - 2 * k
    rep = MarkingReport(
        params=params.to_json(),
        S_size=l * k,
        S_x={},
        window_counts={},
        Delta=delta_bound(k, d, q, l),
        Delta_star=delta_star(k, d, q),
        gamma=gamma_bound(k, d),
        S_star_size=k * (q - 2),
        required_window=required,
        global_bound=(l / q - 3) * required,
    )
    if len(x_list) == 0:
        return rep
    M = len(x_list)
    shifted = np.vstack([sys.act(x_list, i) for i in range(l)])  # row i*M + c is x_c + i
    cov = D.covered(shifted).reshape(k, l, M)
    xi0 = np.asarray(xi(x_list), dtype=float)
    ok = True
    for c in range(M):
        marks = {(i, j + 1) for j, i in zip(*np.nonzero(cov[:, :, c]))}
        rep.S_x[c] = marks
        counts = []
        z = math.ceil(xi0[c] / q - 1e-12)
        while (z + 1) * q < xi0[c] + l:
            lo, hi = z * q - xi0[c], (z + 1) * q - xi0[c]
            counts.append(sum(1 for i, _ in marks if lo <= i < hi))
            z += 1
        rep.window_counts[c] = counts
        if len(marks) < rep.global_bound:
            ok = False
        if any(v < required for v in counts):
            rep.window_ok = False
    rep.min_window = min((min(v) for v in rep.window_counts.values() if v), default=None)
    rep.min_S_x = min(len(s) for s in rep.S_x.values())
    rep.passed = ok
    return rep


# -- collapsed map ------------------------------------------------------------


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class CollapsedMap:
    """``psi = (psi_1..psi_k)``: ``f`` with collapsed groups sent to single values.

    ``groups[j]`` is a list of dicts ``{members, points, value}`` where
    ``members`` are ``(collection, region index)`` pairs; ``collection`` is
    ``"W"`` for ``D_W`` and ``"D"`` for ``D_j``.
    """

    f: Callable
    k: int
    groups: list
    delta: float
    D_W: FiniteCover | None
    D: list
    blend_radius: float
    audit: dict = field(default_factory=dict)

    def base_values(self, states) -> np.ndarray:
        return np.atleast_2d(self.f(np.atleast_2d(states))).reshape(-1, self.k)

    def group_index(self, states, j: int) -> np.ndarray:
        """Group of each state for coordinate ``j`` (``-1`` if none)."""
        states = np.atleast_2d(states)
        out = np.full(len(states), -1, dtype=int)
        groups = self.groups[j - 1]
        if not groups:
            return out
        inc_w = self.D_W.incidence(states) if self.D_W is not None and len(self.D_W.regions) else None
        inc_d = self.D[j - 1].incidence(states) if len(self.D[j - 1].regions) else None
        for g_idx, g in enumerate(groups):
            hit = np.zeros(len(states), dtype=bool)
            for kind, r in g["members"]:
                inc = inc_w if kind == "W" else inc_d
                if inc is not None:
                    hit |= inc[r]
            out[hit & (out < 0)] = g_idx
        return out

    def __call__(self, states) -> np.ndarray:
        states = np.atleast_2d(states)
        vals = self.base_values(states).copy()
        sys = self.D[0].system if self.D else None
        for j in range(1, self.k + 1):
            groups = self.groups[j - 1]
            if not groups:
                continue
            gi = self.group_index(states, j)
            inside = gi >= 0
            vals[inside, j - 1] = np.array([groups[g]["value"] for g in gi[inside]])
            rest = np.flatnonzero(~inside)
            if len(rest) and self.blend_radius > 0:
                best_d = np.full(len(rest), np.inf)
                best_v = np.zeros(len(rest))
                for g in groups:
                    dm = sys.pairwise(states[rest], g["points"]).min(axis=1)
                    closer = dm < best_d
                    best_d[closer] = dm[closer]
                    best_v[closer] = g["value"]
                w = np.clip(1.0 - best_d / self.blend_radius, 0.0, 1.0)
                vals[rest, j - 1] = (1 - w) * vals[rest, j - 1] + w * best_v
        return vals


def build_psi(
    f: Callable,
    D_W: FiniteCover | None,
    D: Sequence[FiniteCover],
    delta: float,
    seed: int = 0,
    blend_radius: float | None = None,
    clos_tol: float = CLOS_TOL,
    eps: float | None = None,
) -> CollapsedMap:
    """Collapse ``D_W`` and each ``D_j`` to singletons for ``psi_j``, within ``delta`` of ``f``.

    A ``D_j`` element meeting a ``D_W`` element is merged with it.  Every
    group gets the midpoint of ``f_j`` over its sampled points; values are
    then pushed apart by at least ``eta = delta / (4 * #groups)`` so all
    groups are separated.  ``seed`` fixes the tie-break order of equal
    midpoints.
    """
    k = len(D)
    sys = D[0].system if D else (D_W.system if D_W is not None else None)
    w_regions = list(D_W.regions) if D_W is not None else []
    w_pts = [D_W.region_points(r) for r in w_regions]
    groups_all = []
    modulus = None
    rng = np.random.default_rng(seed)
    for j in range(1, k + 1):
        Dj = D[j - 1]
        d_pts = [Dj.region_points(r) for r in Dj.regions]
        nw = len(w_regions)
        uf = _UnionFind(nw + len(d_pts))
        # elements sharing a sample point collapse together
        owner: dict[int, int] = {}
        hit_lists = [(b, r.hits) for b, r in enumerate(w_regions)] if D_W is not None and D_W.samples is Dj.samples else []
        hit_lists += [(nw + a, r.hits) for a, r in enumerate(Dj.regions)]
        for node, hits in hit_lists:
            for h in np.asarray(hits, dtype=int).tolist():
                if h in owner:
                    uf.union(owner[h], node)
                else:
                    owner[h] = node
        for a, pa in enumerate(d_pts):
            for b in _met_owners(pa, w_pts, sys, clos_tol):
                uf.union(nw + a, b)
        buckets: dict[int, list[int]] = {}
        for node in range(nw + len(d_pts)):
            buckets.setdefault(uf.find(node), []).append(node)
        groups = []
        for nodes in sorted(buckets.values()):
            members = [("W", b) if b < nw else ("D", b - nw) for b in nodes]
            pts = [w_pts[b] if b < nw else d_pts[b - nw] for b in nodes]
            pts = np.vstack([p for p in pts if len(p)]) if any(len(p) for p in pts) else np.zeros((0, sys.width))
            if len(pts) == 0:
                continue
            fv = np.atleast_2d(f(pts)).reshape(len(pts), k)[:, j - 1]
            groups.append({"members": members, "points": pts, "base": 0.5 * (fv.min() + fv.max()), "range": float(np.ptp(fv))})
        if groups:
            eta = delta / (4.0 * len(groups))
            ties = rng.permutation(len(groups))
            order = sorted(range(len(groups)), key=lambda g: (groups[g]["base"], ties[g]))
            vals = np.array([groups[g]["base"] for g in order])
            for t in range(1, len(vals)):
                vals[t] = max(vals[t], vals[t - 1] + eta)
            vals[-1] = min(vals[-1], 1.0)
            for t in range(len(vals) - 2, -1, -1):
                vals[t] = min(vals[t], vals[t + 1] - eta)
            if vals[0] < 0.0:
                raise AuditError(
                    "separation infeasible within [0, 1]",
                    {"module": "fiber", "operation": "build_psi", "j": j, "groups": len(groups), "eta": eta},
                )
            for t, g in enumerate(order):
                groups[g]["value"] = float(vals[t])
                groups[g]["eta"] = eta
        groups_all.append(groups)
    if blend_radius is None:
        blend_radius = 0.5 * eps if eps is not None else 0.0
    psi = CollapsedMap(f, k, groups_all, delta, D_W, list(D), blend_radius)
    return psi


def psi_audit(psi: CollapsedMap, samples, eps: float | None = None) -> dict:
    """Constancy on collapsed hits, delta-closeness, distinct group values, slope."""
    samples = np.atleast_2d(samples)
    vals = psi(samples)
    base = psi.base_values(samples)
    close = float(np.abs(vals - base).max()) if len(samples) else 0.0
    constant = True
    distinct = True
    min_gap = np.inf
    separated_ok = True
    for j in range(1, psi.k + 1):
        groups = psi.groups[j - 1]
        gi = psi.group_index(samples, j)
        for g_idx, g in enumerate(groups):
            on = vals[gi == g_idx, j - 1]
            if len(on) and not np.all(on == g["value"]):
                constant = False
        # the groups' own point clouds too, in one batch
        if groups:
            cloud = np.vstack([g["points"] for g in groups])
            want = np.concatenate([np.full(len(g["points"]), g["value"]) for g in groups])
            if not np.all(psi(cloud)[:, j - 1] == want):
                constant = False
        v = np.sort([g["value"] for g in groups])
        if len(v) > 1:
            gap = float(np.diff(v).min())
            min_gap = min(min_gap, gap)
            eta = groups[0]["eta"]
            if gap < eta - 1e-15:
                distinct = False
        if eps is not None and len(groups) > 1:
            # points in different groups at distance > 3 eps get different psi_j values
            inside = np.flatnonzero(gi >= 0)
            if len(inside) > 1:
                sub = samples[inside]
                dm = psi.D[0].system.pairwise(sub, sub)
                diff_group = gi[inside][:, None] != gi[inside][None, :]
                same_val = vals[inside, j - 1][:, None] == vals[inside, j - 1][None, :]
                if np.any(diff_group & same_val & (dm > 3 * eps)):
                    separated_ok = False
    slope = _max_slope(psi, samples, vals)
    out = {
        "constant_on_groups": constant,
        "max_deviation": close,
        "delta": psi.delta,
        "delta_close": close <= psi.delta,
        "distinct_values": distinct,
        "min_value_gap": None if min_gap == np.inf else min_gap,
        "separation_sound": separated_ok,
        "max_sampled_slope": slope,
        "groups": [len(g) for g in psi.groups],
    }
    out["passed"] = bool(constant and close <= psi.delta and distinct and separated_ok)
    psi.audit = out
    return out


def _max_slope(psi: CollapsedMap, samples: np.ndarray, vals: np.ndarray, neighbours: int = 4) -> float:
    if len(samples) < 2 or not psi.D:
        return 0.0
    sys = psi.D[0].system
    worst = 0.0
    for s in range(0, len(samples), 512):
        d = sys.pairwise(samples[s : s + 512], samples)
        d[d == 0] = np.inf
        nn = np.argsort(d, axis=1)[:, :neighbours]
        rows = np.arange(s, min(s + 512, len(samples)))[:, None]
        dv = np.abs(vals[rows] - vals[nn]).max(axis=2)
        worst = max(worst, float((dv / np.take_along_axis(d, nn, axis=1)).max()))
    return worst


# -- fiber multiplicity -------------------------------------------------------


def _max_separated(sys, pts: np.ndarray, sep: float, exact_limit: int = 16) -> list[int]:
    """Largest subset with pairwise distances ``> sep`` (exact up to ``exact_limit`` points)."""
    h = len(pts)
    if h <= 1:
        return list(range(h))
    far = sys.pairwise(pts, pts) > sep
    if h <= exact_limit:
        best: list[int] = [0]
        for size in range(h, 1, -1):
            for combo in itertools.combinations(range(h), size):
                if all(far[a, b] for a, b in itertools.combinations(combo, 2)):
                    return list(combo)
        return best
    chosen: list[int] = []
    for a in range(h):
        if all(far[a, b] for b in chosen):
            chosen.append(a)
    return chosen


def fiber_multiplicity(
    sys: DynSystem,
    fmap: Callable,
    window: int,
    sep: float,
    tol: float,
    samples,
    exact_limit: int = 16,
) -> tuple[int, list[dict]]:
    """Largest ``sep``-separated set of sample points sharing one ``f^Z`` window value.

    Points ``x, y`` are related when ``max_{|z| <= window} |f(x+z) - f(y+z)| <= tol``;
    classes are the connected components of this relation.
    """
    if window > sys.horizon:
        raise ValueError(f"window {window} exceeds the horizon {sys.horizon}")
    samples = np.atleast_2d(samples)
    M = len(samples)
    cols = []
    for z in range(-window, window + 1):
        cols.append(np.atleast_2d(fmap(sys.act(samples, z))).reshape(M, -1))
    vec = np.hstack(cols)
    order = np.argsort(vec[:, 0], kind="stable")
    sv = vec[order]
    ii, jj = [], []
    for a in range(M):
        b_end = np.searchsorted(sv[:, 0], sv[a, 0] + tol, side="right")
        if b_end <= a + 1:
            continue
        cand = np.arange(a + 1, b_end)
        close = np.abs(sv[cand] - sv[a]).max(axis=1) <= tol
        ii.extend([order[a]] * int(close.sum()))
        jj.extend(order[cand[close]].tolist())
    graph = coo_matrix((np.ones(len(ii)), (ii, jj)), shape=(M, M))
    _, labels = connected_components(graph, directed=False)
    best = 0
    classes = []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        chosen = _max_separated(sys, samples[members], sep, exact_limit)
        best = max(best, len(chosen))
        if len(members) > 1:
            classes.append({"members": members.tolist(), "separated": members[chosen].tolist(), "size": len(members)})
    classes.sort(key=lambda c: (-len(c["separated"]), c["members"][0]))
    return best, classes


# -- observables --------------------------------------------------------------


def cosine_observable(rot, k: int = 1, amplitude: float = 0.5, center: float = 0.5) -> Callable:
    """``f_i(x) = center + amplitude * cos(2 pi (x + (i-1)/(4k)))``, ``i = 1..k``."""
    phases = np.arange(k) / (4.0 * k)

    def f(states):
        a = rot.angles(np.atleast_2d(states))
        return center + amplitude * np.cos(2 * np.pi * (a[:, None] + phases[None, :]))

    return f


def weighted_sum_observable(sturm) -> Callable:
    """``f(p) = sum_z s_z(p) 2^-(rank(z)+1)`` over the coding window ``z = 0, -1, 1, ...``."""
    zs = sturm._code_z
    weights = 2.0 ** -(np.arange(len(zs)) + 1.0)

    def f(states):
        return (sturm.coding(np.atleast_2d(states), zs) * weights[None, :]).sum(axis=1)[:, None]

    return f
