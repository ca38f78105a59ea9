"""Concrete compact metric spaces with a ``Z``-action.

Points are stored as rows of a float array ("states").  A rotation point is
``(base, offset)`` and denotes the angle ``base + offset*alpha (mod 1)``, so
the action only touches the integer offset and the group law holds exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .quadratic import QuadraticNumber, parse_quadratic, primes, rational_rank

__all__ = [
    "SystemPoint",
    "DynSystem",
    "RotationSystem",
    "SturmianSystem",
    "ProductSystem",
    "EuclideanSpace",
    "make_rotation",
    "make_sturmian",
    "make_product",
    "sample",
    "kronecker_sequence",
    "system_from_descriptor",
    "DEFAULT_HORIZON",
    "circle_distance",
]

DEFAULT_HORIZON = 256


@dataclass(frozen=True)
class SystemPoint:
    """A single point, for callers that prefer objects over state arrays.

    ``kind`` is one of ``circle-angle``, ``symbolic-seed``, ``product-pair``
    and ``torus-pair``.
    """

    kind: str
    payload: tuple


def kronecker_sequence(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """``n`` points of the additive recurrence with generalised golden ratios.

    Deterministic in ``(n, dim, seed)``; the seed only moves the starting
    offset by an irrational amount.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    # phi_d is the positive root of x**(d+1) = x + 1
    g = 2.0
    for _ in range(60):
        g = (1.0 + g) ** (1.0 / (dim + 1))
    steps = np.array([(1.0 / g ** (j + 1)) % 1.0 for j in range(dim)])
    roots = np.sqrt(np.array(primes(dim + 1)[1:], dtype=float))
    offset = (seed * roots) % 1.0
    i = np.arange(1, n + 1, dtype=float)[:, None]
    return (offset + i * steps) % 1.0


def _frac(x):
    return x - np.floor(x)


class DynSystem:
    """Base class: a compact metric space with a ``Z``-action on state rows.

    Subclasses implement ``act``, ``pairwise`` and ``from_params``; every
    method is vectorised over rows.
    """

    width: int = 1
    param_dim: int = 1
    kind: str = "abstract"
    minimal: bool | None = None
    isometric: bool = False

    def __init__(self, horizon: int = DEFAULT_HORIZON):
        self.horizon = int(horizon)

    # -- action and metric ------------------------------------------------
    def act(self, states: np.ndarray, z) -> np.ndarray:
        raise NotImplementedError

    def pairwise(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Distance matrix between the rows of ``p`` and ``q``."""
        raise NotImplementedError

    def dist(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Row-by-row distances (``p`` and ``q`` broadcast)."""
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        n = max(len(p), len(q))
        p = np.broadcast_to(p, (n, p.shape[1]))
        q = np.broadcast_to(q, (n, q.shape[1]))
        return np.array([self.pairwise(p[i : i + 1], q[i : i + 1])[0, 0] for i in range(n)])

    def diameter(self, states: np.ndarray, chunk: int = 2048) -> float:
        states = np.atleast_2d(states)
        if len(states) < 2:
            return 0.0
        best = 0.0
        for s in range(0, len(states), chunk):
            best = max(best, float(self.pairwise(states[s : s + chunk], states).max()))
        return best

    # -- sampling ----------------------------------------------------------
    def from_params(self, params: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        return self.from_params(kronecker_sequence(n, self.param_dim, seed))

    # -- points and records -------------------------------------------------
    def point(self, state) -> SystemPoint:
        raise NotImplementedError

    def states_of(self, points) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def act_point(self, p: SystemPoint, z: int) -> SystemPoint:
        return self.point(self.act(self.states_of([p]), z)[0])

    def dist_points(self, p: SystemPoint, q: SystemPoint) -> float:
        return float(self.pairwise(self.states_of([p]), self.states_of([q]))[0, 0])


class _AngleSystem(DynSystem):
    """Shared machinery for systems driven by an irrational rotation."""

    width = 2
    param_dim = 1

    def __init__(self, alpha: QuadraticNumber, horizon: int = DEFAULT_HORIZON):
        super().__init__(horizon)
        if alpha.is_rational:
            raise ValueError(f"rotation number {alpha} is rational")
        value = float(alpha)
        if not 0.0 < value < 1.0:
            raise ValueError("rotation number must lie in (0, 1)")
        self.alpha = alpha
        self.alpha_value = value
        self._hi, self._lo = alpha.split()

    def frac_multiple(self, k) -> np.ndarray:
        """``frac(k * alpha)`` for integer-valued ``k``."""
        k = np.asarray(k, dtype=float)
        return _frac(_frac(k * self._hi) + k * self._lo)

    def angles(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        return _frac(states[:, 0] + self.frac_multiple(states[:, 1]))

    def act(self, states: np.ndarray, z) -> np.ndarray:
        out = np.array(np.atleast_2d(states), dtype=float, copy=True)
        out[:, 1] += np.asarray(z, dtype=float)
        return out

    def from_params(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=float).reshape(-1, 1)
        return np.column_stack([_frac(params[:, 0]), np.zeros(len(params))])

    def from_angles(self, angles) -> np.ndarray:
        return self.from_params(np.asarray(angles, dtype=float))


class RotationSystem(_AngleSystem):
    """The circle ``R/Z`` with ``x + z = x + z*alpha``."""

    kind = "rotation"
    minimal = True
    isometric = True

    def pairwise(self, p, q):
        d = np.abs(self.angles(p)[:, None] - self.angles(q)[None, :])
        return np.minimum(d, 1.0 - d)

    def dist(self, p, q):
        d = np.abs(self.angles(p) - self.angles(q))
        return np.minimum(d, 1.0 - d)

    def diameter(self, states, chunk: int = 2048) -> float:
        a = np.sort(self.angles(states))
        if len(a) < 2:
            return 0.0
        # for each point the farthest other point is the one nearest to its antipode
        anti = _frac(a + 0.5)
        idx = np.searchsorted(a, anti)
        best = 0.0
        for off in (-1, 0):
            j = (idx + off) % len(a)
            d = np.abs(a - a[j])
            best = max(best, float(np.minimum(d, 1.0 - d).max()))
        return best

    def point(self, state) -> SystemPoint:
        return SystemPoint("circle-angle", (float(self.angles(np.asarray(state))[0]),))

    def states_of(self, points) -> np.ndarray:
        return self.from_angles([p.payload[0] for p in points])

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": {"alpha": self.alpha.to_str(), "horizon": self.horizon},
            "minimal": self.minimal,
        }


class SturmianSystem(_AngleSystem):
    """Codings ``s_z = floor(x+(z+1)alpha) - floor(x+z*alpha)`` of rotation orbits.

    A point is ``(base angle, offset)``; the action shifts the offset.  The
    distance is ``2**-min{|z| : s_z(p) != s_z(q)}`` over ``|z| < precision``
    and 0 when the two codings agree on that window.
    """

    kind = "sturmian"
    minimal = True
    MAX_PRECISION = 32

    def __init__(self, alpha: QuadraticNumber, precision: int, horizon: int = DEFAULT_HORIZON):
        if precision < 1:
            raise ValueError("precision must be >= 1")
        if precision > self.MAX_PRECISION:
            raise ValueError(f"precision is limited to {self.MAX_PRECISION}")
        super().__init__(alpha, horizon)
        self.precision = int(precision)
        # bit j of the code holds s_z with z = 0, -1, 1, -2, 2, ...
        zs = [0]
        for r in range(1, self.precision):
            zs += [-r, r]
        self._code_z = np.array(zs, dtype=float)
        self._code_abs = np.abs(self._code_z)

    def coding(self, states: np.ndarray, zs) -> np.ndarray:
        """Symbols ``s_z`` for each state (rows) and each ``z`` (columns)."""
        states = np.atleast_2d(states)
        zs = np.asarray(zs, dtype=float)
        k = states[:, 1][:, None] + zs[None, :]
        theta = _frac(states[:, 0][:, None] + self.frac_multiple(k))
        return (theta + self.alpha_value >= 1.0).astype(np.int8)

    def codes(self, states: np.ndarray) -> np.ndarray:
        bits = self.coding(states, self._code_z).astype(np.uint64)
        weights = np.uint64(1) << np.arange(len(self._code_z), dtype=np.uint64)
        return (bits * weights).sum(axis=1, dtype=np.uint64)

    def _dist_from_xor(self, x: np.ndarray) -> np.ndarray:
        low = x & (~x + np.uint64(1))
        out = np.zeros(x.shape)
        nz = low != 0
        j = np.log2(low[nz].astype(float)).round().astype(int)
        out[nz] = 2.0 ** (-self._code_abs[j])
        return out

    def pairwise(self, p, q):
        return self._dist_from_xor(self.codes(p)[:, None] ^ self.codes(q)[None, :])

    def dist(self, p, q):
        cp, cq = np.broadcast_arrays(self.codes(p), self.codes(q))
        return self._dist_from_xor(cp ^ cq)

    def point(self, state) -> SystemPoint:
        state = np.asarray(state, dtype=float)
        return SystemPoint("symbolic-seed", (float(state[0]), int(state[1])))

    def states_of(self, points) -> np.ndarray:
        return np.array([[p.payload[0], p.payload[1]] for p in points], dtype=float)

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": {
                "alpha": self.alpha.to_str(),
                "precision": self.precision,
                "horizon": self.horizon,
            },
            "minimal": self.minimal,
        }


class ProductSystem(DynSystem):
    """Diagonal action on ``A x B`` with the max metric."""

    kind = "product"

    def __init__(self, a: DynSystem, b: DynSystem, horizon: int | None = None):
        super().__init__(horizon if horizon is not None else min(a.horizon, b.horizon))
        self.a = a
        self.b = b
        self.width = a.width + b.width
        self.param_dim = a.param_dim + b.param_dim
        self.minimal = _product_minimal(a, b)
        self.isometric = a.isometric and b.isometric

    def split(self, states):
        states = np.atleast_2d(states)
        return states[:, : self.a.width], states[:, self.a.width :]

    def act(self, states, z):
        sa, sb = self.split(states)
        return np.hstack([self.a.act(sa, z), self.b.act(sb, z)])

    def pairwise(self, p, q):
        pa, pb = self.split(p)
        qa, qb = self.split(q)
        return np.maximum(self.a.pairwise(pa, qa), self.b.pairwise(pb, qb))

    def dist(self, p, q):
        pa, pb = self.split(p)
        qa, qb = self.split(q)
        return np.maximum(self.a.dist(pa, qa), self.b.dist(pb, qb))

    def from_params(self, params):
        params = np.atleast_2d(params)
        return np.hstack(
            [
                self.a.from_params(params[:, : self.a.param_dim]),
                self.b.from_params(params[:, self.a.param_dim :]),
            ]
        )

    def point(self, state) -> SystemPoint:
        sa, sb = self.split(np.asarray(state, dtype=float))
        return SystemPoint("product-pair", (self.a.point(sa[0]), self.b.point(sb[0])))

    def states_of(self, points) -> np.ndarray:
        return np.hstack(
            [
                self.a.states_of([p.payload[0] for p in points]),
                self.b.states_of([p.payload[1] for p in points]),
            ]
        )

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": {"a": self.a.descriptor(), "b": self.b.descriptor(), "horizon": self.horizon},
            "minimal": self.minimal,
        }


def _product_minimal(a: DynSystem, b: DynSystem) -> bool | None:
    # a product of two rotations is minimal iff 1, alpha, beta are Q-independent
    if isinstance(a, RotationSystem) and isinstance(b, RotationSystem):
        return rational_rank([QuadraticNumber(Fraction(1)), a.alpha, b.alpha]) == 3
    return None


class EuclideanSpace(DynSystem):
    """``R^n`` with the l-infinity metric and the trivial action.

    Only used as the ambient space of Kolmogorov cube covers.
    """

    kind = "euclidean"

    def __init__(self, n: int):
        super().__init__(0)
        self.width = self.param_dim = int(n)

    def act(self, states, z):
        return np.array(np.atleast_2d(states), dtype=float, copy=True)

    def pairwise(self, p, q):
        p = np.atleast_2d(p)
        q = np.atleast_2d(q)
        return np.abs(p[:, None, :] - q[None, :, :]).max(axis=2)

    def dist(self, p, q):
        return np.abs(np.atleast_2d(p) - np.atleast_2d(q)).max(axis=1)

    def from_params(self, params):
        return np.atleast_2d(np.asarray(params, dtype=float))

    def point(self, state) -> SystemPoint:
        return SystemPoint("euclidean", tuple(float(v) for v in np.ravel(state)))

    def states_of(self, points) -> np.ndarray:
        return np.array([p.payload for p in points], dtype=float)

    def descriptor(self) -> dict:
        return {"kind": self.kind, "parameters": {"n": self.width}, "minimal": None}


def _exact_alpha(alpha) -> QuadraticNumber:
    if isinstance(alpha, float):
        raise TypeError("give alpha as an exact expression such as 'sqrt(2)-1', not a float")
    if isinstance(alpha, str) and "/" in alpha and "sqrt" not in alpha:
        raise ValueError(f"rotation number {alpha!r} is rational")
    q = parse_quadratic(alpha)
    if q.is_rational:
        raise ValueError(f"rotation number {alpha!r} is rational")
    return q


def make_rotation(alpha, horizon: int = DEFAULT_HORIZON) -> RotationSystem:
    """Irrational circle rotation; ``alpha`` like ``"sqrt(2)-1"``."""
    return RotationSystem(_exact_alpha(alpha), horizon)


def make_sturmian(alpha, precision: int, horizon: int = DEFAULT_HORIZON) -> SturmianSystem:
    if precision == 0:
        raise ValueError("precision must be >= 1")
    return SturmianSystem(_exact_alpha(alpha), precision, horizon)


def make_product(a: DynSystem, b: DynSystem) -> ProductSystem:
    return ProductSystem(a, b)


def sample(sys: DynSystem, n: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy sample of ``n`` states, deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sys.sample(n, seed)


def system_from_descriptor(desc: dict) -> DynSystem:
    """Rebuild a system from its JSON record."""
    kind = desc["kind"]
    params = desc.get("parameters", {})
    horizon = int(params.get("horizon", DEFAULT_HORIZON))
    if kind == "rotation":
        return make_rotation(params["alpha"], horizon)
    if kind == "sturmian":
        return make_sturmian(params["alpha"], int(params["precision"]), horizon)
    if kind == "product":
        return make_product(system_from_descriptor(params["a"]), system_from_descriptor(params["b"]))
    if kind == "torus":
        from .torus import build_torus

        return build_torus(system_from_descriptor(params["base"]))
    raise ValueError(f"unknown system kind {kind!r}")


def circle_distance(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b)) % 1.0
    return np.minimum(d, 1.0 - d)

