"""Mapping torus ``X x_Z R`` of a ``Z``-system, its real flow and cover chain.

A torus state is a base state followed by ``t`` in ``[0, 1)``.  Normalising
``(x, t)`` folds the integer part of ``t`` into the base:
``(x, t) ~ (x + floor(t), t - floor(t))``, so the real action restricted to
integers is the original action and ``(x, 1)`` is glued to ``(x + 1, 0)``.
"""
from __future__ import annotations

import numpy as np

from .covers import (
    FiniteCover,
    Region,
    check_refined_at,
    join_shifted,
    mesh_under_translates,
    order_profile,
    translate_diameters,
)
from .errors import AuditError
from .systems import DynSystem, SystemPoint

__all__ = [
    "TorusSystem",
    "SlabSpace",
    "build_torus",
    "lift_cover",
    "slab_grid_cover",
    "torus_box_cover",
    "arc_cover",
    "ball_region",
    "shifted_cover",
    "build_shift_chain",
    "refined_cover",
    "torus_audit_sample",
]

_ZRANGE = (-2, -1, 0, 1, 2)


class TorusSystem(DynSystem):
    """The Borel construction of ``base`` with integer and real actions."""

    kind = "torus"

    def __init__(self, base: DynSystem):
        super().__init__(base.horizon)
        self.base = base
        self.width = base.width + 1
        self.param_dim = base.param_dim + 1
        self.isometric = base.isometric

    # -- coordinates ----------------------------------------------------------
    def split(self, states):
        states = np.atleast_2d(states)
        return states[:, :-1], states[:, -1]

    def embed(self, base_states, t=0.0) -> np.ndarray:
        base_states = np.atleast_2d(base_states)
        t = np.broadcast_to(np.asarray(t, dtype=float), (len(base_states),))
        return self.normalize(np.column_stack([base_states, t]))

    def normalize(self, states) -> np.ndarray:
        x, t = self.split(states)
        shift = np.floor(t)
        return np.column_stack([self.base.act(x, shift), t - shift])

    def pi(self, states) -> np.ndarray:
        """Projection to ``S^1 = R/Z``."""
        return self.split(states)[1] % 1.0

    def pi_X(self, states) -> np.ndarray:
        return self.split(states)[0]

    # -- actions --------------------------------------------------------------
    def act(self, states, z):
        x, t = self.split(states)
        return np.column_stack([self.base.act(x, z), t])

    def act_real(self, states, r):
        x, t = self.split(states)
        return self.normalize(np.column_stack([x, t + np.asarray(r, dtype=float)]))

    # -- metric ---------------------------------------------------------------
    def _raw_pairwise(self, p, q):
        px, pt = self.split(p)
        qx, qt = self.split(q)
        best = None
        for z in _ZRANGE:
            d = np.maximum(
                self.base.pairwise(self.base.act(px, -z), qx),
                np.abs(pt[:, None] + z - qt[None, :]),
            )
            best = d if best is None else np.minimum(best, d)
        return best

    def pairwise(self, p, q):
        """Quotient-metric estimate ``min_{|z|<=2} max(d(x - z, y), |t + z - s|)``."""
        d = self._raw_pairwise(p, q)
        if not self.isometric:
            d = np.minimum(d, self._raw_pairwise(q, p).T)
        return d

    def _raw_dist(self, p, q):
        px, pt = self.split(p)
        qx, qt = self.split(q)
        best = None
        for z in _ZRANGE:
            d = np.maximum(self.base.dist(self.base.act(px, -z), qx), np.abs(pt + z - qt))
            best = d if best is None else np.minimum(best, d)
        return best

    def dist(self, p, q):
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        p, q = np.broadcast_arrays(p, q) if p.shape != q.shape else (p, q)
        d = self._raw_dist(p, q)
        if not self.isometric:
            d = np.minimum(d, self._raw_dist(q, p))
        return d

    # -- sampling and records -------------------------------------------------
    def from_params(self, params):
        params = np.atleast_2d(params)
        base = self.base.from_params(params[:, :-1])
        return np.column_stack([base, params[:, -1] % 1.0])

    def point(self, state) -> SystemPoint:
        x, t = self.split(np.asarray(state, dtype=float))
        return SystemPoint("torus-pair", (self.base.point(x[0]), float(t[0])))

    def states_of(self, points) -> np.ndarray:
        base = self.base.states_of([p.payload[0] for p in points])
        return self.normalize(np.column_stack([base, [p.payload[1] for p in points]]))

    def descriptor(self) -> dict:
        return {"kind": self.kind, "parameters": {"base": self.base.descriptor()}, "minimal": None}


def build_torus(sys: DynSystem) -> TorusSystem:
    return TorusSystem(sys)


def torus_audit_sample(ts: TorusSystem, n: int, seed: int = 0) -> np.ndarray:
    """Half generic torus points, half points of the slice ``X = X x {0}``."""
    k = n // 2
    return np.vstack([ts.sample(n - k, seed), ts.embed(ts.base.sample(max(k, 1), seed + 1))[:k]])


class SlabSpace(DynSystem):
    """``X x [0, 1]`` (closed in ``t``) with the max metric and no action."""

    kind = "slab"

    def __init__(self, base: DynSystem):
        super().__init__(0)
        self.base = base
        self.width = base.width + 1
        self.param_dim = base.param_dim + 1

    def act(self, states, z):
        raise NotImplementedError("the slab carries no action")

    def pairwise(self, p, q):
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        return np.maximum(self.base.pairwise(p[:, :-1], q[:, :-1]), np.abs(p[:, -1][:, None] - q[:, -1][None, :]))

    def dist(self, p, q):
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        return np.maximum(self.base.dist(p[:, :-1], q[:, :-1]), np.abs(p[:, -1] - q[:, -1]))

    def from_params(self, params):
        params = np.atleast_2d(params)
        return np.column_stack([self.base.from_params(params[:, :-1]), params[:, -1]])


def arc_cover(rot, n_arcs: int, overlap: float, samples, offset: float = 0.0, family: int = 0) -> FiniteCover:
    """Closed arcs ``[i/n - overlap, (i+1)/n + overlap] + offset`` on a rotation."""
    samples = np.atleast_2d(samples)
    lo = (np.arange(n_arcs) / n_arcs - overlap + offset) % 1.0
    width = 1.0 / n_arcs + 2 * overlap

    def incidence_fn(states):
        a = rot.angles(states)
        return ((a[None, :] - lo[:, None]) % 1.0) <= width

    regions = [Region(i, family, label=("arc", float(lo[i]), float(width))) for i in range(n_arcs)]
    return FiniteCover(regions, rot, samples, incidence_fn=incidence_fn, meta={"arcs": n_arcs, "overlap": overlap})


def slab_grid_cover(base_cover: FiniteCover, t_intervals, slab_samples) -> FiniteCover:
    """Product cover ``{A x I}`` of the slab from a base cover and closed ``t``-intervals."""
    slab = SlabSpace(base_cover.system)
    t_intervals = [(float(a), float(b)) for a, b in t_intervals]
    nb = len(base_cover.regions)

    def incidence_fn(states):
        states = np.atleast_2d(states)
        inc_x = base_cover.incidence(states[:, :-1])
        t = states[:, -1]
        inc_t = np.array([(t >= a) & (t <= b) for a, b in t_intervals])
        return (inc_x[:, None, :] & inc_t[None, :, :]).reshape(nb * len(t_intervals), len(states))

    regions = []
    for i, r in enumerate(base_cover.regions):
        for j, iv in enumerate(t_intervals):
            regions.append(Region(i * len(t_intervals) + j, 0, label=(r.id, iv)))
    return FiniteCover(regions, slab, slab_samples, incidence_fn=incidence_fn)


def lift_cover(B: FiniteCover, ts: TorusSystem, samples) -> tuple[FiniteCover, dict]:
    """Image ``C = pi_Z(B)`` of a slab cover in the torus, with its order audit.

    A torus point ``(x, t)`` with ``t`` in ``(0, 1)`` has one preimage in the
    slab; a point ``(x, 0)`` of ``X`` has two, ``(x, 0)`` and ``(x - 1, 1)``.
    Hence ``ord C <= 2 ord B`` and points off ``X`` meet at most ``ord B``
    elements.
    """
    samples = np.atleast_2d(samples)

    def incidence_fn(states):
        states = ts.normalize(states)
        x, t = ts.split(states)
        inc = B.incidence(np.column_stack([x, t]))
        on_x = t == 0.0
        if on_x.any():
            other = np.column_stack([ts.base.act(x[on_x], -1), np.ones(on_x.sum())])
            inc[:, on_x] |= B.incidence(other)
        return inc

    regions = [Region(r.id, r.family, label=("lift", r.id)) for r in B.regions]
    C = FiniteCover(regions, ts, samples, kind=B.kind, incidence_fn=incidence_fn)
    ord_b, _ = order_profile(B)
    ord_c, counts = order_profile(C)
    off_x = ts.split(samples)[1] > 0.0
    ord_off = int(counts[off_x].max()) if off_x.any() else 0
    report = {
        "ord_B": ord_b,
        "ord_C": ord_c,
        "ord_C_off_X": ord_off,
        "samples": int(len(samples)),
        "samples_on_X": int((~off_x).sum()),
        "uncovered": int((counts == 0).sum()),
    }
    if ord_c > 2 * ord_b or ord_off > ord_b:
        raise AuditError("lift_cover order audit failed", {"module": "torus", "operation": "lift_cover", **report})
    return C, report


def torus_box_cover(
    ts: TorusSystem, n_arcs: int, n_rows: int, overlap: float, samples, stagger: bool = True
) -> FiniteCover:
    """Closed boxes ``arc x [t0, t1]`` on the torus of a rotation.

    Boxes crossing ``t = 0`` or ``t = 1`` are read through the gluing, so
    membership is tested on the representatives ``(x + z, t - z)``,
    ``|z| <= 1``.  With ``stagger`` odd rows shift their arcs by half a width.
    """
    rot = ts.base
    samples = np.atleast_2d(samples)
    width = 1.0 / n_arcs + 2 * overlap
    lo_t = np.arange(n_rows) / n_rows - overlap
    hi_t = (np.arange(n_rows) + 1) / n_rows + overlap
    lo_x = np.array(
        [[(i / n_arcs - overlap + (0.5 / n_arcs if stagger and j % 2 else 0.0)) % 1.0 for i in range(n_arcs)] for j in range(n_rows)]
    )

    def incidence_fn(states):
        states = ts.normalize(states)
        x, t = ts.split(states)
        out = np.zeros((n_rows, n_arcs, len(states)), dtype=bool)
        for z in (-1, 0, 1):
            a = rot.angles(rot.act(x, z))
            tz = t - z
            in_t = (tz[None, :] >= lo_t[:, None]) & (tz[None, :] <= hi_t[:, None])
            in_x = ((a[None, None, :] - lo_x[:, :, None]) % 1.0) <= width
            out |= in_x & in_t[:, None, :]
        return out.reshape(n_rows * n_arcs, len(states))

    regions = [
        Region(j * n_arcs + i, 0, label=("box", j, i)) for j in range(n_rows) for i in range(n_arcs)
    ]
    return FiniteCover(
        regions, ts, samples, incidence_fn=incidence_fn, meta={"arcs": n_arcs, "rows": n_rows, "overlap": overlap}
    )


def ball_region(system: DynSystem, center, radius: float, samples, rid: int = 0, family: int = 0) -> Region:
    """Open metric ball; its point cloud always contains the center."""
    center = np.atleast_2d(np.asarray(center, dtype=float))
    samples = np.atleast_2d(samples)

    def member(states):
        return system.dist(np.atleast_2d(states), center) < radius

    hits = np.flatnonzero(member(samples))
    return Region(rid, family, member, hits, ("ball", float(radius)), np.vstack([center, samples[hits]]))


def shifted_cover(c: FiniteCover, ts: TorusSystem, r: float, samples=None) -> FiniteCover:
    """``c + r`` under the real flow: ``p`` lies in ``A + r`` iff ``p - r`` lies in ``A``."""
    samples = c.samples if samples is None else samples

    def incidence_fn(states):
        return c.incidence(ts.act_real(states, -r))

    regions = [Region(reg.id, reg.family, label=("shift", float(r), reg.id)) for reg in c.regions]
    return FiniteCover(regions, ts, samples, kind=c.kind, incidence_fn=incidence_fn, meta={"shift": float(r)})


def build_shift_chain(
    C: FiniteCover, ts: TorusSystem, n: int, d: float, eps: float, samples=None, rgrid: int = 256
) -> tuple[FiniteCover, dict]:
    """``D = D_0 v (D_1 - z_1) v ... v (D_{n-1} - z_{n-1})`` with ``D_i = C + i/n``.

    ``z_i = floor(n/d) * i``.  Requires ``mesh(C + r) < eps`` for
    ``0 <= r*d < n + d`` and then audits ``mesh(D + z) < eps`` for all
    integers ``0 <= z < floor(n/d) * n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d <= 0:
        raise ValueError("d must be positive")
    samples = C.samples if samples is None else np.atleast_2d(samples)
    rs = np.linspace(0.0, (n + d) / d, rgrid, endpoint=False)
    for reg in C.regions:
        pts = C.region_points(reg)
        if len(pts) < 2:
            continue
        diams = translate_diameters(ts, pts, rs, real=True)
        if np.any(diams >= eps):
            k = int(np.argmax(diams >= eps))
            raise AuditError(
                "shift-chain precondition failed",
                {"module": "torus", "operation": "build_shift_chain", "region": reg.id, "r": float(rs[k]), "diam": float(diams[k])},
            )
    step = int(np.floor(n / d))
    window = step * n
    if n == 1:
        D = C.rebind(samples)
    else:
        parts = [shifted_cover(C, ts, i / n, samples) for i in range(n)]
        D = join_shifted(parts, [step * i for i in range(n)], ts, samples)
    if window - 1 > ts.horizon:
        raise ValueError(f"window {window} exceeds the system horizon {ts.horizon}")
    meshes = mesh_under_translates(D, ts, max(window - 1, 0))
    ord_d, _ = order_profile(D)
    report = {
        "n": n,
        "d": d,
        "eps": eps,
        "step": step,
        "window": window,
        "ord_D": ord_d,
        "ratio": ord_d / window if window else float("inf"),
        "reference_order": n * n + n + 2,
        "reference_ratio": (n * n + n + 2) / window if window else float("inf"),
        "meshes": meshes,
        "max_mesh": max(m for _, m in meshes),
        "passed": all(m < eps for _, m in meshes),
    }
    return D, report


def _segment_params(beta: float, spacing: float) -> np.ndarray:
    k = int(np.ceil(6 * beta / spacing))
    return np.linspace(-3 * beta, 3 * beta, k + 1)


def refined_cover(
    ts: TorusSystem,
    w,
    alpha: float,
    beta: float,
    samples,
    brick: tuple[float, float] = (0.02, 0.015),
    radius: float = 0.01,
    margin: float | None = None,
    rgrid: int | None = None,
    max_iter: int = 6,
) -> tuple[Region, FiniteCover, dict]:
    """A neighbourhood ``W`` of ``w`` and an order-3 cover refined at ``W``.

    The orbit segment ``L = w + [-3 beta, 3 beta]`` is mapped into the plane
    by ``g = (g1, g2)``: ``g1`` is the flow parameter of the nearest point of
    ``L`` and ``g2`` the distance to ``L``.  The cover is the pull-back of a
    staggered brick cover of the half plane (order 3 after enlarging the
    bricks by ``margin``).  Brick sizes and the radius of ``W`` are halved
    until the grid audit of both refinement conditions passes.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    samples = np.atleast_2d(samples)
    bw, bh = brick
    report: dict = {"iterations": []}
    for it in range(max_iter):
        mu = margin if margin is not None else min(bw, bh) / 8
        params = _segment_params(beta, min(bw, bh) / 4)
        line = ts.act_real(np.repeat(w, len(params), axis=0), params)

        def g(states, line=line, params=params):
            d = ts.pairwise(np.atleast_2d(states), line)
            k = d.argmin(axis=1)
            return params[k], d[np.arange(len(k)), k]

        def cells(states, bw=bw, bh=bh, mu=mu, g=g):
            g1, g2 = g(states)
            j0 = np.floor(g2 / bh).astype(int)
            out = []
            for dj in (-1, 0, 1):
                j = j0 + dj
                ok_j = (j >= 0) & (g2 >= j * bh - mu) & (g2 <= (j + 1) * bh + mu)
                u = g1 + 3 * beta + np.where(j % 2 == 1, bw / 2, 0.0)
                c0 = np.floor(u / bw).astype(int)
                for dc in (-1, 0, 1):
                    c = c0 + dc
                    ok = ok_j & (u >= c * bw - mu) & (u <= (c + 1) * bw + mu)
                    out.append((j, c, ok))
            return out

        keys = set()
        for j, c, ok in cells(samples):
            keys.update(zip(j[ok].tolist(), c[ok].tolist()))
        keys = sorted(keys)
        code = np.array([j * 1_000_003 + c for j, c in keys], dtype=np.int64)

        def incidence_fn(states, code=code, cells=cells):
            states = np.atleast_2d(states)
            out = np.zeros((len(code), len(states)), dtype=bool)
            for j, c, ok in cells(states):
                key = j.astype(np.int64) * 1_000_003 + c
                pos = np.searchsorted(code, key)
                pos = np.clip(pos, 0, len(code) - 1)
                good = ok & (code[pos] == key)
                out[pos[good], np.flatnonzero(good)] = True
            return out

        regions = [Region(i, 0, label=("brick",) + k) for i, k in enumerate(keys)]
        V = FiniteCover(regions, ts, samples, kind="open", enlargement=mu, incidence_fn=incidence_fn)
        W = ball_region(ts, w, radius, samples)
        sub: dict = {}
        cond = check_refined_at(V, W, ts, alpha, beta, samples, rgrid=rgrid, report=sub)
        ord_v, _ = order_profile(V)
        report["iterations"].append(
            {"brick": [bw, bh], "radius": radius, "ord": ord_v, "cond1": cond[0], "cond2": cond[1], "regions": len(regions)}
        )
        if all(cond):
            report.update({"passed": True, "ord": ord_v, "brick": [bw, bh], "radius": radius, "audit": sub})
            return W, V, report
        bw, bh, radius = bw / 2, bh / 2, radius / 2
    report["passed"] = False
    return W, V, report
