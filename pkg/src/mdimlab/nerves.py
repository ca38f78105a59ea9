"""Nerves of finite covers, canonical maps and generic PL maps to ``R^n``."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .covers import FiniteCover
from .quadratic import primes

__all__ = [
    "SimplicialComplex",
    "PLMap",
    "CanonicalMap",
    "build_nerve",
    "canonical_map",
    "finite_to_one_map",
    "hulls_intersect",
]


def _maximal(simplices) -> list[frozenset]:
    uniq = sorted({frozenset(s) for s in simplices if s}, key=lambda s: (-len(s), sorted(s)))
    out: list[frozenset] = []
    for s in uniq:
        if not any(s <= t for t in out):
            out.append(s)
    return sorted(out, key=lambda s: (len(s), sorted(s)))


class SimplicialComplex:
    """Abstract simplicial complex stored by its maximal simplices."""

    def __init__(self, vertices, maximal):
        self.vertices = sorted(int(v) for v in vertices)
        self.maximal = _maximal(maximal)
        known = set(self.vertices)
        for s in self.maximal:
            if not s <= known:
                raise ValueError("simplex uses an unknown vertex")
        covered = set().union(*self.maximal) if self.maximal else set()
        # isolated vertices are 0-simplices of their own
        self.maximal = _maximal(self.maximal + [frozenset([v]) for v in known - covered])

    @property
    def dim(self) -> int:
        return max((len(s) for s in self.maximal), default=0) - 1

    def simplices(self) -> set[frozenset]:
        """All faces (downward closure)."""
        out: set[frozenset] = set()
        for s in self.maximal:
            items = sorted(s)
            for r in range(1, len(items) + 1):
                out.update(frozenset(c) for c in itertools.combinations(items, r))
        return out

    def __contains__(self, simplex) -> bool:
        s = frozenset(simplex)
        return any(s <= t for t in self.maximal)

    def to_json(self) -> dict:
        return {"vertices": self.vertices, "maximal_simplices": [sorted(s) for s in self.maximal]}

    @classmethod
    def from_json(cls, data: dict) -> "SimplicialComplex":
        return cls(data["vertices"], [frozenset(s) for s in data["maximal_simplices"]])


def build_nerve(c: FiniteCover, samples=None) -> SimplicialComplex:
    """Vertex per region; a simplex per set of regions sharing a sample point."""
    inc = c.sample_incidence if samples is None else c.incidence(samples)
    ids = np.array([r.id for r in c.regions])
    supports = {frozenset(ids[inc[:, k]].tolist()) for k in range(inc.shape[1])}
    return SimplicialComplex(ids.tolist(), supports)


@dataclass
class CanonicalMap:
    """Barycentric coordinates on the nerve from distances to complements.

    The weight of region ``A`` at ``x`` is the distance from ``x`` to the
    sampled complement of ``A`` (``cap`` when the complement is empty) and
    zero when ``x`` is not in ``A``.
    """

    cover: FiniteCover
    complements: list = field(repr=False)
    cap: float

    @property
    def vertices(self) -> list[int]:
        return [r.id for r in self.cover.regions]

    def weights(self, states) -> np.ndarray:
        states = np.atleast_2d(states)
        inside = self.cover.incidence(states)
        sys = self.cover.system
        w = np.zeros((len(states), len(self.cover.regions)))
        rows = np.flatnonzero(inside.any(axis=0))
        if len(rows) == 0:
            return w
        samples = self.cover.samples
        dmat = sys.pairwise(states[rows], samples)
        for i, comp in enumerate(self.complements):
            sel = inside[i, rows]
            if not sel.any():
                continue
            if len(comp) == 0:
                w[rows[sel], i] = self.cap
            else:
                w[rows[sel], i] = np.minimum(dmat[np.ix_(sel, comp)].min(axis=1), self.cap)
        return w

    def __call__(self, states) -> np.ndarray:
        w = self.weights(states)
        total = w.sum(axis=1)
        if np.any(total <= 0):
            bad = int(np.flatnonzero(total <= 0)[0])
            raise ValueError(f"state {bad} has all canonical weights zero (not covered)")
        return w / total[:, None]

    def fibers_refine(self, samples=None) -> bool:
        """Sample points with identical coordinates share a region."""
        samples = self.cover.samples if samples is None else np.atleast_2d(samples)
        coords = self(samples)
        inc = self.cover.incidence(samples)
        groups: dict[bytes, list[int]] = {}
        for k, row in enumerate(np.round(coords, 12)):
            groups.setdefault(row.tobytes(), []).append(k)
        for members in groups.values():
            if len(members) > 1 and not inc[:, members].all(axis=1).any():
                return False
        return True


def canonical_map(c: FiniteCover, samples=None) -> CanonicalMap:
    if samples is not None:
        c = c.rebind(samples)
    inc = c.sample_incidence
    complements = [np.flatnonzero(~inc[i]) for i in range(len(c.regions))]
    cap = max(c.system.diameter(c.samples), 1e-12)
    cm = CanonicalMap(c, complements, cap)
    cm(c.samples)
    return cm


@dataclass
class PLMap:
    """Linear extension of vertex images over a simplicial complex."""

    complex: SimplicialComplex
    vertex_images: dict
    redraws: int = 0
    seed: int = 0
    audit: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(next(iter(self.vertex_images.values())))

    def image_matrix(self, vertices) -> np.ndarray:
        return np.array([self.vertex_images[v] for v in vertices], dtype=float)

    def __call__(self, barycentric, vertices=None) -> np.ndarray:
        """Evaluate at barycentric coordinates whose columns follow ``vertices``."""
        vertices = self.complex.vertices if vertices is None else vertices
        return np.atleast_2d(barycentric) @ self.image_matrix(vertices)

    def preimages(self, y, tol: float = 1e-9) -> list[dict]:
        """Points of ``|K|`` over ``y``, one per distinct barycentric vector.

        Assumes simplices of dimension ``<= n`` have affinely independent
        images, so each contributes at most one point.
        """
        y = np.asarray(y, dtype=float)
        found: list[dict] = []
        for s in sorted(self.complex.simplices(), key=lambda s: (len(s), sorted(s))):
            vs = sorted(s)
            lam = _barycentric_solve(self.image_matrix(vs), y, tol)
            if lam is None:
                continue
            point = {v: float(a) for v, a in zip(vs, lam) if a > tol}
            if not any(_same_point(point, p, 1e-7) for p in found):
                found.append(point)
        return found


def _same_point(a: dict, b: dict, tol: float) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in keys)


def _barycentric_solve(images: np.ndarray, y: np.ndarray, tol: float):
    """Convex weights ``lam`` with ``lam @ images == y`` for affinely independent images."""
    k = len(images)
    if k == 1:
        return np.ones(1) if np.max(np.abs(images[0] - y)) <= tol else None
    a = (images[1:] - images[0]).T
    sol, *_ = np.linalg.lstsq(a, y - images[0], rcond=None)
    if np.max(np.abs(a @ sol - (y - images[0]))) > tol:
        return None
    lam = np.concatenate([[1.0 - sol.sum()], sol])
    if lam.min() < -tol:
        return None
    return np.clip(lam, 0.0, None)


def hulls_intersect(a: np.ndarray, b: np.ndarray) -> bool:
    """Whether the convex hulls of the rows of ``a`` and ``b`` meet (LP feasibility)."""
    ka, kb = len(a), len(b)
    n = a.shape[1]
    eq = np.zeros((n + 2, ka + kb))
    eq[:n, :ka] = a.T
    eq[:n, ka:] = -b.T
    eq[n, :ka] = 1.0
    eq[n + 1, ka:] = 1.0
    rhs = np.concatenate([np.zeros(n), [1.0, 1.0]])
    res = linprog(np.zeros(ka + kb), A_eq=eq, b_eq=rhs, bounds=(0, None), method="highs")
    return res.status == 0


def _draw_images(vertices, n: int, seed: int) -> dict:
    roots = np.sqrt(np.array(primes(n), dtype=float))
    return {v: ((idx + 1 + seed) * roots) % 1.0 for idx, v in enumerate(vertices)}


def _degenerate(K: SimplicialComplex, images: dict, n: int) -> bool:
    for s in K.simplices():
        if len(s) < 2 or len(s) > n + 1:
            continue
        pts = np.array([images[v] for v in sorted(s)])
        diffs = pts[1:] - pts[0]
        sv = np.linalg.svd(diffs, compute_uv=False)
        if sv.min() < 1e-9:
            return True
    return False


def _general_position_violations(K: SimplicialComplex, images: dict, n: int) -> list:
    faces = sorted(K.simplices(), key=lambda s: (len(s), sorted(s)))
    bad = []
    for s, t in itertools.combinations(faces, 2):
        if s & t or (len(s) - 1) + (len(t) - 1) >= n:
            continue
        a = np.array([images[v] for v in sorted(s)])
        b = np.array([images[v] for v in sorted(t)])
        if hulls_intersect(a, b):
            bad.append((sorted(s), sorted(t)))
    return bad


def finite_to_one_map(
    K: SimplicialComplex, n: int, seed: int = 0, grid: int = 64, max_redraws: int = 32
) -> PLMap:
    """PL map ``K -> R^n`` with vertex images on an irrational lattice.

    Requires ``n >= 1``; finite fibers need ``n >= dim K``.  The audit
    records general-position violations (disjoint faces with dimension sum
    below ``n`` whose images meet) and the largest fiber over a grid of the
    image's bounding box.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if K.dim > n:
        raise ValueError(f"complex of dimension {K.dim} has no finite-to-one PL map to R^{n}")
    redraws = 0
    s = seed
    images = _draw_images(K.vertices, n, s)
    while _degenerate(K, images, n):
        redraws += 1
        if redraws > max_redraws:
            raise ValueError("could not draw nondegenerate vertex images")
        s += 1
        images = _draw_images(K.vertices, n, s)
    g = PLMap(K, images, redraws, s)
    g.audit = {
        "general_position_violations": (
            _general_position_violations(K, images, n) if len(K.simplices()) <= 150 else None
        ),
        "redraws": redraws,
        "seed_used": s,
    }
    g.audit.update(_fiber_audit(g, grid))
    return g


def _fiber_audit(g: PLMap, grid: int) -> dict:
    pts = g.image_matrix(g.complex.vertices)
    n = pts.shape[1]
    per_axis = max(2, int(round(grid ** (1.0 / n))))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    axes = [np.linspace(lo[j], hi[j], per_axis) for j in range(n)]
    # offset by an irrational fraction of a cell to avoid landing on vertex images
    cell = (hi - lo) / max(per_axis - 1, 1)
    shift = cell * (np.sqrt(2.0) - 1.0) / 3.0
    worst = 0
    count = 0
    for y in itertools.product(*axes):
        y = np.array(y) + shift
        worst = max(worst, len(g.preimages(y)))
        count += 1
        if count >= grid:
            break
    return {"grid_points": count, "max_fiber": worst, "note": "fiber finiteness certified on the audit grid only"}
