"""Exact p-adic geometry: scalars, balls, polydiscs, covers and Haar measure.

Everything here is exact.  Centers of balls are canonical residues stored as
:class:`fractions.Fraction` values in ``[0, p**level)`` with a power of ``p``
as denominator, so equality and distance reduce to integer arithmetic.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .errors import GeometryError, LevelError, PrecisionError

#: Returned by :func:`ball_distance` for balls that are not disjoint.
ZERO = Fraction(0)


def is_prime(p):
    if p < 2:
        return False
    return all(p % q for q in range(2, math.isqrt(p) + 1))


def _check_prime(p):
    if not isinstance(p, int) or not is_prime(p):
        raise GeometryError(f"{p!r} is not a prime")


def as_fraction(x):
    """Parse ints, Fractions and strings like ``"3/4"`` into a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("floats are not exact; pass a Fraction or a string")
    return Fraction(x)


def valuation(x, p):
    """p-adic valuation of a rational; ``math.inf`` for zero."""
    x = as_fraction(x)
    if x == 0:
        return math.inf
    v = 0
    num, den = x.numerator, x.denominator
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


def padic_abs(x, p):
    """Exact ``|x|_p`` as a Fraction."""
    v = valuation(x, p)
    if v == math.inf:
        return Fraction(0)
    return Fraction(p) ** (-v)


def residue(x, p, n):
    """Canonical representative of ``x mod p**n Z_p``.

    The result ``y`` lies in ``[0, p**n)``, has a power of ``p`` as
    denominator and satisfies ``|x - y|_p <= p**-n``.
    """
    x = as_fraction(x)
    den = x.denominator
    k = 0
    while den % p == 0:
        den //= p
        k += 1
    if n + k <= 0:
        return Fraction(0)
    modulus = p ** (n + k)
    r = (x.numerator * pow(den, -1, modulus)) % modulus
    return Fraction(r, p**k)


def fractional_part(x, p):
    """p-adic fractional part ``{x}_p`` in ``[0, 1)``."""
    return residue(x, p, 0)


@dataclass(frozen=True)
class PAdicScalar:
    """A p-adic number known modulo ``p**precision_level``.

    ``value = p**valuation_offset * sum(digits[k] * p**k)``.  The lowest
    digit is nonzero unless the scalar is zero, in which case ``digits`` is
    empty and ``valuation_offset == precision_level``.
    """

    p: int
    digits: tuple
    valuation_offset: int
    precision_level: int

    def __post_init__(self):
        _check_prime(self.p)
        if any(not 0 <= d < self.p for d in self.digits):
            raise GeometryError("digits must lie in [0, p-1]")
        if self.digits and self.digits[0] == 0:
            raise GeometryError("leading digit must be nonzero")
        if self.precision_level < self.valuation_offset:
            raise GeometryError("precision_level must be >= valuation_offset")
        if self.valuation_offset + len(self.digits) > self.precision_level:
            raise GeometryError("more digits than the precision allows")

    @classmethod
    def from_rational(cls, x, p, precision_level):
        x = as_fraction(x)
        v = valuation(x, p)
        if v == math.inf or v >= precision_level:
            return cls(p, (), precision_level, precision_level)
        r = residue(x, p, precision_level) / Fraction(p) ** v
        digits = []
        r = int(r)
        for _ in range(precision_level - v):
            digits.append(r % p)
            r //= p
        while digits and digits[-1] == 0:
            digits.pop()
        return cls(p, tuple(digits), v, precision_level)

    @property
    def is_zero(self):
        return not self.digits

    def to_fraction(self):
        total = sum(d * self.p**k for k, d in enumerate(self.digits))
        return Fraction(self.p) ** self.valuation_offset * total

    def residue(self, n):
        if n > self.precision_level:
            raise PrecisionError(
                f"scalar known modulo p^{self.precision_level}, residue mod p^{n} requested"
            )
        return residue(self.to_fraction(), self.p, n)

    def norm(self):
        if self.is_zero:
            return Fraction(0)
        return Fraction(self.p) ** (-self.valuation_offset)


@dataclass(frozen=True, order=True)
class Ball:
    """The ball ``B_level(center) = center + p**level Z_p``; measure ``p**-level``."""

    p: int
    level: int
    center: Fraction = field(default=Fraction(0))

    def __post_init__(self):
        _check_prime(self.p)
        if not isinstance(self.level, int):
            raise GeometryError("ball level must be an integer")
        object.__setattr__(self, "center", residue(self.center, self.p, self.level))

    @property
    def measure(self):
        return Fraction(self.p) ** (-self.level)

    @property
    def radius(self):
        return Fraction(self.p) ** (-self.level)

    def contains(self, other):
        """True iff ``other`` (a Ball) is a subset of this ball."""
        if other.p != self.p:
            raise GeometryError("balls over different primes")
        return other.level >= self.level and residue(other.center, self.p, self.level) == self.center

    def is_disjoint(self, other):
        return not (self.contains(other) or other.contains(self))

    def parent(self, level):
        if level > self.level:
            raise LevelError("parent level must not exceed ball level")
        return Ball(self.p, level, self.center)

    def subballs(self, level):
        """All balls of the given finer level inside this one, sorted by center."""
        if level < self.level:
            raise LevelError(f"level {level} is coarser than ball level {self.level}")
        step = Fraction(self.p) ** self.level
        return [
            Ball(self.p, level, self.center + k * step)
            for k in range(self.p ** (level - self.level))
        ]

    def __str__(self):
        return f"B_{self.level}({self.center})"


def ball_contains(b, x):
    """Membership of a scalar in a ball.

    ``x`` may be a :class:`PAdicScalar` (precision is enforced) or an exact
    rational.
    """
    if isinstance(x, PAdicScalar):
        if x.p != b.p:
            raise GeometryError("scalar and ball over different primes")
        if x.precision_level < b.level:
            raise PrecisionError(
                f"need precision >= {b.level}, scalar has {x.precision_level}"
            )
        return x.residue(b.level) == b.center
    return residue(x, b.p, b.level) == b.center


def ball_distance(b1, b2):
    """The common value of ``|xi - eta|_p`` for ``xi`` in b1, ``eta`` in b2.

    Returns :data:`ZERO` when the balls are not disjoint.
    """
    if b1.p != b2.p:
        raise GeometryError("balls over different primes")
    if not b1.is_disjoint(b2):
        return ZERO
    return padic_abs(b1.center - b2.center, b1.p)


@dataclass(frozen=True, order=True)
class PolyDisc:
    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise GeometryError("a polydisc needs at least one factor")
        if len({b.p for b in factors}) != 1:
            raise GeometryError("polydisc factors over different primes")
        object.__setattr__(self, "factors", factors)

    @property
    def p(self):
        return self.factors[0].p

    @property
    def d(self):
        return len(self.factors)

    @property
    def measure(self):
        m = Fraction(1)
        for b in self.factors:
            m *= b.measure
        return m

    def contains(self, other):
        return all(a.contains(b) for a, b in zip(self.factors, other.factors))

    def is_disjoint(self, other):
        return any(a.is_disjoint(b) for a, b in zip(self.factors, other.factors))

    def __str__(self):
        return "x".join(str(b) for b in self.factors)


def _check_pairwise_disjoint(items, what):
    for a, b in itertools.combinations(items, 2):
        if not a.is_disjoint(b):
            raise GeometryError(f"{what} {a} and {b} overlap")


@dataclass(frozen=True)
class Region:
    """A finite disjoint union of polydiscs (a compact open subset of Q_p^d)."""

    polydiscs: tuple

    def __post_init__(self):
        pds = tuple(self.polydiscs)
        if not pds:
            raise GeometryError("empty region")
        if len({q.d for q in pds}) != 1 or len({q.p for q in pds}) != 1:
            raise GeometryError("region polydiscs differ in dimension or prime")
        # large cell lists come from partition() and are disjoint by construction
        if len(pds) <= 256:
            _check_pairwise_disjoint(pds, "polydiscs")
        object.__setattr__(self, "polydiscs", pds)

    @classmethod
    def from_cells(cls, cells):
        """Region made of already-disjoint cells (no overlap check)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "polydiscs", tuple(cells))
        return obj

    @property
    def p(self):
        return self.polydiscs[0].p

    @property
    def d(self):
        return self.polydiscs[0].d

    @property
    def max_level(self):
        return max(b.level for q in self.polydiscs for b in q.factors)

    def contains(self, q):
        return any(member.contains(q) for member in self.polydiscs)


def haar_measure(r):
    """Exact Haar measure of a region, normalised so that ``mu(Z_p^d) = 1``."""
    return sum((q.measure for q in r.polydiscs), Fraction(0))


@lru_cache(maxsize=256)
def partition(r, M):
    """Level-M polydiscs whose disjoint union is ``r``, sorted by center tuple."""
    if M < r.max_level:
        raise LevelError(f"level {M} is below the region's refinement {r.max_level}")
    cells = []
    for q in r.polydiscs:
        per_coord = [b.subballs(M) for b in q.factors]
        cells.extend(PolyDisc(tuple(c)) for c in itertools.product(*per_coord))
    cells.sort(key=lambda c: tuple(b.center for b in c.factors))
    return tuple(cells)


@dataclass(frozen=True)
class Cover:
    """Per coordinate, the disjoint discs ``U_i`` covering ``pi_i(F)``."""

    discs: tuple

    def __post_init__(self):
        discs = tuple(tuple(c) for c in self.discs)
        if not discs or any(not c for c in discs):
            raise GeometryError("every coordinate needs at least one disc")
        if len({b.p for c in discs for b in c}) != 1:
            raise GeometryError("cover discs over different primes")
        for c in discs:
            _check_pairwise_disjoint(c, "cover discs")
        object.__setattr__(self, "discs", discs)

    @property
    def p(self):
        return self.discs[0][0].p

    @property
    def d(self):
        return len(self.discs)

    def size(self, i):
        return len(self.discs[i])

    @property
    def max_level(self):
        return max(b.level for c in self.discs for b in c)

    def disc_index(self, i, ball):
        """Index of the cover disc of coordinate ``i`` containing ``ball``."""
        for k, disc in enumerate(self.discs[i]):
            if disc.contains(ball):
                return k
        raise GeometryError(f"{ball} is not inside a cover disc of coordinate {i}")

    def projection_measure(self, i):
        return sum((b.measure for b in self.discs[i]), Fraction(0))

    def region(self):
        """The domain ``F`` as the product of the coordinate covers."""
        return Region(tuple(PolyDisc(f) for f in itertools.product(*self.discs)))
