"""Level functions: expected length of the stopping walk ``x -> x - 1``.

At ``x`` the walk moves to ``x - 1`` with probability ``phi(x)`` and stops
otherwise, so

    xi(x) = sum_{s >= 1} s * prod_{j < s} phi(x - j) * (1 - phi(x - s))

and ``xi(x + 1) = phi(x + 1) (xi(x) + 1)``.  Away from the translates of
``U`` (where ``phi = 1``) this gives ``xi(x + z) = xi(x) + z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .covers import Region
from .errors import ConstructionError
from .systems import DynSystem

__all__ = [
    "LevelFunction",
    "bump_phi",
    "make_level_function",
    "eval_level_function",
    "hitting_horizon",
    "level_report",
    "TruncationError",
]


class TruncationError(ConstructionError):
    """The walk did not die within the requested accuracy."""


def bump_phi(sys: DynSystem, center, radius: float) -> tuple[Region, Callable]:
    """Ball ``U`` of ``radius`` around ``center`` and the piecewise-linear bump.

    ``phi`` is 0 within ``radius/3`` of the center, rises linearly and is 1
    from distance ``radius`` on (so ``phi = 1`` off ``U``).
    """
    center = np.atleast_2d(np.asarray(center, dtype=float))
    inner = radius / 3.0

    def member(states):
        return sys.dist(np.atleast_2d(states), center) < radius

    def phi(states):
        d = sys.dist(np.atleast_2d(states), center)
        return np.clip((d - inner) / (radius - inner), 0.0, 1.0)

    return Region(0, 0, member, np.array([], dtype=int), ("ball", float(radius))), phi


@dataclass
class LevelFunction:
    sys: DynSystem
    U: Region
    phi: Callable[[np.ndarray], np.ndarray]
    max_steps: int = 100_000
    tail_tol: float = 1e-10
    horizon_h: int | None = None
    audit: dict = field(default_factory=dict)

    def __call__(self, states) -> np.ndarray:
        return eval_level_function(self, states)[0]

    def check(self, samples) -> dict:
        """Audit ``phi = 1`` off ``U`` and a sampled zero set with a small neighbourhood."""
        samples = np.atleast_2d(samples)
        ph = self.phi(samples)
        inside = self.U.member(samples)
        zero = ph == 0.0
        small = ph < self.tail_tol
        self.audit = {
            "phi_one_off_U": bool(np.all(ph[~inside] == 1.0)),
            "zero_samples": int(zero.sum()),
            "near_zero_samples": int(small.sum()),
            "valid": bool(np.all(ph[~inside] == 1.0) and zero.sum() >= 1 and small.sum() >= 2),
        }
        if not self.audit["valid"]:
            raise ValueError(f"phi violates the level-function side conditions: {self.audit}")
        return self.audit


def hitting_horizon(lf: LevelFunction, count: int = 4096, seed: int = 7) -> int:
    """Largest number of backward steps any of ``count`` sample points needs to reach ``phi = 0``.

    Returns ``-1`` if some point does not reach it within ``max_steps``.
    """
    states = lf.sys.sample(count, seed)
    alive = np.ones(len(states), dtype=bool)
    s = 0
    while alive.any():
        if s > lf.max_steps:
            return -1
        idx = np.flatnonzero(alive)
        dead = lf.phi(lf.sys.act(states[idx], -s)) == 0.0
        alive[idx[dead]] = False
        s += 1
    return s - 1


def make_level_function(
    sys: DynSystem, center, radius: float, samples=None, max_steps: int = 100_000, tail_tol: float = 1e-10
) -> LevelFunction:
    U, phi = bump_phi(sys, center, radius)
    lf = LevelFunction(sys, U, phi, max_steps, tail_tol)
    if samples is not None:
        lf.check(samples)
    return lf


def eval_level_function(lf: LevelFunction, states, accuracy: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Series value of ``xi`` and a bound on the truncated tail, per state.

    The walk of a point stops contributing once its survival product is 0,
    drops below ``tail_tol`` or ``max_steps`` terms are summed.  With ``h``
    the hitting horizon of ``phi^-1(0)`` a walk alive at step ``s`` dies by
    ``s + h``, so the tail is at most ``min_{s <= stop} P_s (s + h)``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if lf.horizon_h is None:
        lf.horizon_h = hitting_horizon(lf)
    h = lf.horizon_h
    n = len(states)
    value = np.zeros(n)
    survival = np.ones(n)
    bound = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    s = 0
    while alive.any() and s < lf.max_steps:
        idx = np.flatnonzero(alive)
        ph = lf.phi(lf.sys.act(states[idx], -s))
        # term for stopping at step s: s * P_s * (1 - phi(x - s))
        value[idx] += s * survival[idx] * (1.0 - ph)
        survival[idx] *= ph
        s += 1
        if h >= 0:
            bound[idx] = np.minimum(bound[idx], survival[idx] * (s + h))
        done = (survival[idx] == 0.0) | (survival[idx] < lf.tail_tol)
        alive[idx[done]] = False
    bound[survival == 0.0] = 0.0
    if accuracy is not None and np.any(bound > accuracy):
        k = int(np.argmax(bound))
        raise TruncationError(
            "level-function walk does not die within the requested accuracy",
            {
                "module": "levelfn",
                "operation": "eval_level_function",
                "state": states[k].tolist(),
                "orbit_segment": [0, -s],
                "bound": float(bound[k]),
                "accuracy": accuracy,
            },
        )
    return value, bound


def level_report(lf: LevelFunction, n: int, samples) -> dict:
    """Residuals of the recursion and of the translation identity on samples.

    The translation check uses only samples ``x`` with ``x + z`` outside
    ``U`` for all ``|z| <= n``.
    """
    if n > lf.sys.horizon // 2:
        raise ValueError(f"n={n} exceeds half the horizon {lf.sys.horizon}")
    samples = np.atleast_2d(samples)
    sys = lf.sys
    xi0, b0 = eval_level_function(lf, samples)
    plus = sys.act(samples, 1)
    xi1, b1 = eval_level_function(lf, plus)
    rec = np.abs(xi1 - lf.phi(plus) * (xi0 + 1.0))
    near = np.zeros(len(samples), dtype=bool)
    for z in range(-n, n + 1):
        near |= np.asarray(lf.U.member(sys.act(samples, z)), dtype=bool)
    keep = np.flatnonzero(~near)
    trans = 0.0
    bound = float(max(b0.max(), b1.max()))
    for z in range(-n, n + 1):
        if len(keep) == 0:
            break
        xz, bz = eval_level_function(lf, sys.act(samples[keep], z))
        trans = max(trans, float(np.abs(xz - xi0[keep] - z).max()))
        bound = max(bound, float(bz.max()))
    # segment-wise form: xi(x+z) = xi(x) + z only needs phi = 1 at
    # x+1..x+z (z > 0) or at x+z+1..x (z < 0)
    in_u = {j: np.asarray(lf.U.member(sys.act(samples, j)), dtype=bool) for j in range(-n + 1, n + 1)}
    seg = 0.0
    pairs = 0
    for z in range(-n, n + 1):
        js = range(1, z + 1) if z >= 0 else range(z + 1, 1)
        ok = np.ones(len(samples), dtype=bool)
        for j in js:
            ok &= ~in_u[j]
        idx = np.flatnonzero(ok)
        if len(idx) == 0:
            continue
        xz, bz = eval_level_function(lf, sys.act(samples[idx], z))
        seg = max(seg, float(np.abs(xz - xi0[idx] - z).max()))
        bound = max(bound, float(bz.max()))
        pairs += len(idx)
    return {
        "translation_residual_segmentwise": seg,
        "segmentwise_pairs": pairs,
        "recursion_residual": float(rec.max()),
        "translation_residual": trans,
        "excluded_count": int(near.sum()),
        "checked_count": int(len(keep)),
        "truncation_bound": bound,
        "n": n,
        "samples": int(len(samples)),
        "hitting_horizon": lf.horizon_h,
    }
