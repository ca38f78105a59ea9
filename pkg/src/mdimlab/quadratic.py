"""Exact numbers of the form ``a + b*sqrt(c)`` and rational-linear-algebra helpers.

Rotation numbers and the independent point sets used by the interval
systems are all of this shape, which keeps irrationality and
``Q``-linear independence decidable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

__all__ = [
    "QuadraticNumber",
    "parse_quadratic",
    "is_squarefree",
    "squarefree_numbers",
    "primes",
    "rational_rank",
    "independence_certificate",
]


def is_squarefree(c: int) -> bool:
    if c < 1:
        return False
    p = 2
    while p * p <= c:
        if c % (p * p) == 0:
            return False
        p += 1
    return True


def primes(count: int) -> list[int]:
    """First ``count`` primes (simple sieve, grown until large enough)."""
    if count <= 0:
        return []
    limit = max(16, int(count * (math.log(count + 1) + math.log(math.log(count + 2)) + 3)))
    while True:
        sieve = np.ones(limit + 1, dtype=bool)
        sieve[:2] = False
        for p in range(2, int(limit**0.5) + 1):
            if sieve[p]:
                sieve[p * p :: p] = False
        found = np.flatnonzero(sieve)
        if len(found) >= count:
            return [int(p) for p in found[:count]]
        limit *= 2


def squarefree_numbers(count: int, start: int = 2) -> list[int]:
    out = []
    c = start
    while len(out) < count:
        if is_squarefree(c):
            out.append(c)
        c += 1
    return out


@dataclass(frozen=True)
class QuadraticNumber:
    """The real number ``a + b*sqrt(c)`` with rational ``a, b`` and square-free ``c``.

    ``c == 1`` (or ``b == 0``) encodes a rational number; it is normalised to
    ``b == 0, c == 1``.
    """

    a: Fraction
    b: Fraction = Fraction(0)
    c: int = 1

    def __post_init__(self):
        a, b, c = Fraction(self.a), Fraction(self.b), int(self.c)
        if not is_squarefree(c):
            raise ValueError(f"radicand {c} is not square-free")
        if c == 1:
            a, b = a + b, Fraction(0)
        if b == 0:
            c = 1
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def mp(self, dps: int = 50) -> mpmath.mpf:
        with mpmath.workdps(dps):
            return mpmath.mpf(self.a.numerator) / self.a.denominator + (
                mpmath.mpf(self.b.numerator) / self.b.denominator
            ) * mpmath.sqrt(self.c)

    def __float__(self) -> float:
        return float(self.mp())

    def __add__(self, other):
        other = _coerce(other)
        if self.c != other.c and not (self.is_rational or other.is_rational):
            raise ValueError("sum of different radicals is not quadratic")
        c = self.c if not self.is_rational else other.c
        return QuadraticNumber(self.a + other.a, self.b + other.b, c)

    __radd__ = __add__

    def __neg__(self):
        return QuadraticNumber(-self.a, -self.b, self.c)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def scale(self, r) -> "QuadraticNumber":
        r = Fraction(r)
        return QuadraticNumber(self.a * r, self.b * r, self.c)

    def split(self) -> tuple[float, float]:
        """Return ``(hi, lo)`` with ``hi`` carrying 26 significant bits.

        ``k * hi`` is then exact in double precision for ``|k| < 2**26``, and
        ``frac(k * value)`` is recovered to about 1e-16 as
        ``frac(k * hi) + k * lo``.
        """
        v = self.mp(60)
        e = math.frexp(float(v))[1]
        hi = math.ldexp(round(math.ldexp(float(v), 26 - e)), e - 26)
        lo = float(v - mpmath.mpf(hi))
        return hi, lo

    def to_str(self) -> str:
        if self.is_rational:
            return str(self.a)
        return f"{self.a} + {self.b}*sqrt({self.c})"

    def __str__(self) -> str:
        return self.to_str()


def _coerce(x) -> QuadraticNumber:
    if isinstance(x, QuadraticNumber):
        return x
    if isinstance(x, (int, Fraction)):
        return QuadraticNumber(Fraction(x))
    raise TypeError(f"cannot use {type(x).__name__} as an exact quadratic number")


def parse_quadratic(text) -> QuadraticNumber:
    """Parse expressions such as ``"sqrt(2)-1"`` or ``"(sqrt(5)-1)/2"``.

    Floats are refused: a float literal cannot certify irrationality.
    """
    if isinstance(text, QuadraticNumber):
        return text
    if isinstance(text, (int, Fraction)):
        return QuadraticNumber(Fraction(text))
    if isinstance(text, float):
        raise TypeError("float literals are not accepted; give an exact expression like 'sqrt(2)-1'")
    import sympy

    expr = sympy.expand(sympy.radsimp(sympy.sympify(str(text), rational=True)))
    a = Fraction(0)
    b = Fraction(0)
    c = 1
    for term, coeff in expr.as_coefficients_dict().items():
        if not coeff.is_Rational:
            raise ValueError(f"unsupported coefficient in {text!r}")
        coeff = Fraction(int(coeff.p), int(coeff.q))
        if term == 1:
            a += coeff
            continue
        if term.is_Pow and term.exp == sympy.Rational(1, 2) and term.base.is_Integer:
            rad = int(term.base)
            if c not in (1, rad):
                raise ValueError(f"{text!r} mixes several radicals")
            c = rad
            b += coeff
            continue
        raise ValueError(f"{text!r} is not of the form a + b*sqrt(c)")
    return QuadraticNumber(a, b, c)


def _rank(rows: list[list[Fraction]]) -> int:
    m = [list(r) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][col] != 0:
                f = m[i][col] / m[rank][col]
                m[i] = [x - f * y for x, y in zip(m[i], m[rank])]
        rank += 1
    return rank


def _basis_rows(numbers: Sequence[QuadraticNumber]) -> tuple[list[int], list[list[Fraction]]]:
    radicals = sorted({x.c for x in numbers if not x.is_rational})
    basis = [1] + radicals
    rows = []
    for x in numbers:
        row = [Fraction(0)] * len(basis)
        row[0] = x.a
        if not x.is_rational:
            row[basis.index(x.c)] = x.b
        rows.append(row)
    return basis, rows


def rational_rank(numbers: Iterable[QuadraticNumber]) -> int:
    """Dimension of the ``Q``-span of ``numbers``.

    Uses that ``1, sqrt(c1), sqrt(c2), ...`` for distinct square-free
    ``c_i > 1`` are linearly independent over the rationals.
    """
    numbers = [_coerce(x) for x in numbers]
    if not numbers:
        return 0
    _, rows = _basis_rows(numbers)
    return _rank(rows)


def independence_certificate(numbers: Sequence[QuadraticNumber]) -> dict:
    numbers = [_coerce(x) for x in numbers]
    basis, rows = _basis_rows(numbers)
    rank = _rank(rows) if rows else 0
    return {
        "basis": ["1"] + [f"sqrt({c})" for c in basis[1:]],
        "coordinates": [[str(v) for v in row] for row in rows],
        "rank": rank,
        "independent": rank == len(numbers),
    }
