"""Operator specifications and the exact cell-level kernel.

On functions that are constant on level-M balls the component Laplacian

    L_i f(x) = int L_i(xi_i, eta_i) (f(x) - f(..., eta_i, ...)) d eta_i

is an exact finite sum: the integrand vanishes when ``eta_i`` lies in the
cell of ``xi_i``, and the kernel is constant across any pair of distinct
cells.  :class:`CoordinateGrid` holds that cell kernel for one coordinate and
:class:`Discretization` glues the coordinates into the level-M product grid
of ``F``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Mapping

import numpy as np

from .errors import GeometryError, LevelError, RegionMismatchError
from .padic_core import Ball, Cover, PolyDisc, Region, as_fraction, partition, valuation


def _as_exponent(alpha):
    if isinstance(alpha, (int, Fraction, str)):
        return as_fraction(alpha)
    return float(alpha)


def _weights_matrix(w, n):
    """Validate a weight table and return it as float array.

    Entries may be exact (Fraction/str/int); the symmetry and sign checks are
    done before conversion.
    """
    rows = [[as_fraction(x) if not isinstance(x, float) else x for x in row] for row in w]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise GeometryError(f"weight table must be {n}x{n}")
    for a in range(n):
        if rows[a][a] != 0:
            raise GeometryError("weight table needs a zero diagonal")
        for b in range(n):
            if rows[a][b] < 0:
                raise GeometryError("weights must be nonnegative")
            if rows[a][b] != rows[b][a]:
                raise GeometryError("weight table must be symmetric")
    return np.array([[float(x) for x in r] for r in rows], dtype=float)


@dataclass(frozen=True, eq=False)
class PolynomialForm:
    """``P(X) = sum gamma_k X^k`` with constant coefficients.

    ``coefficients`` maps exponent tuples ``(k_1, ..., k_d)`` to numbers.
    """

    coefficients: Mapping

    def __post_init__(self):
        coeffs = {tuple(int(k) for k in key): complex(v) if isinstance(v, complex) else float(v)
                  for key, v in dict(self.coefficients).items()}
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self):
        return max((sum(k) for k, g in self.coefficients.items() if g != 0), default=0)

    def __call__(self, lambdas):
        total = 0.0
        for k, g in self.coefficients.items():
            term = g
            for lam, e in zip(lambdas, k):
                term = term * lam**e
            total = total + term
        return total


@dataclass(frozen=True, eq=False)
class DivergenceForm:
    """Coefficients ``a^{ij}, b^i, c`` of ``sum L_j(a^{ij} L_i u) + sum b^i L_i u + c u``.

    Each coefficient is given by its values on the level-``level`` cells of
    ``F`` in :func:`~padic_elliptic.padic_core.partition` order:
    ``a`` has shape ``(d, d, n)``, ``b`` ``(d, n)`` and ``c`` ``(n,)``.
    """

    level: int
    a: np.ndarray
    b: np.ndarray = None
    c: np.ndarray = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 3 or a.shape[0] != a.shape[1]:
            raise GeometryError("a must have shape (d, d, n)")
        if not np.array_equal(a, np.swapaxes(a, 0, 1)):
            raise GeometryError("coefficient matrix a must be symmetric (a^ij = a^ji)")
        d, n = a.shape[0], a.shape[2]
        b = np.zeros((d, n)) if self.b is None else np.asarray(self.b, dtype=float)
        c = np.zeros(n) if self.c is None else np.asarray(self.c, dtype=float)
        if b.shape != (d, n) or c.shape != (n,):
            raise GeometryError("b must have shape (d, n) and c shape (n,)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @classmethod
    def constant(cls, spec, a, b=None, c=0.0, level=None):
        level = spec.cover.max_level if level is None else level
        n = len(partition(spec.domain, level))
        a = np.asarray(a, dtype=float)
        b = np.zeros(spec.d) if b is None else np.asarray(b, dtype=float)
        return cls(
            level,
            np.repeat(a[:, :, None], n, axis=2),
            np.repeat(b[:, None], n, axis=1),
            np.full(n, float(c)),
        )

    @property
    def has_lower_order(self):
        return bool(np.any(self.b != 0) or np.any(self.c != 0))


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Everything that determines ``P(L)``: prime, cover, exponents, weights, form."""

    cover: Cover
    alphas: tuple
    weights: tuple = None
    form: object = None

    def __post_init__(self):
        d = self.cover.d
        alphas = tuple(_as_exponent(a) for a in self.alphas)
        if len(alphas) != d:
            raise GeometryError(f"need {d} exponents alpha_i, got {len(alphas)}")
        if any(a <= 0 for a in alphas):
            raise GeometryError("alpha_i must be positive")
        if self.weights is None:
            weights = tuple(np.zeros((self.cover.size(i),) * 2) for i in range(d))
        else:
            if len(self.weights) != d:
                raise GeometryError("one weight table per coordinate required")
            weights = tuple(
                _weights_matrix(w, self.cover.size(i)) for i, w in enumerate(self.weights)
            )
        form = self.form
        if form is None:
            form = PolynomialForm({tuple(1 if j == i else 0 for j in range(d)): 1.0 for i in range(d)})
        if isinstance(form, DivergenceForm):
            if form.a.shape[0] != d:
                raise GeometryError("coefficient dimension does not match d")
            if form.level < self.cover.max_level:
                raise LevelError("coefficient level below the cover level")
            n = len(partition(self.cover.region(), form.level))
            if form.a.shape[2] != n:
                raise GeometryError(f"coefficients need {n} cell values at level {form.level}")
        elif isinstance(form, PolynomialForm):
            if any(len(k) != d for k in form.coefficients):
                raise GeometryError("polynomial exponents must have length d")
        else:
            raise TypeError("form must be a PolynomialForm or a DivergenceForm")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "form", form)

    @property
    def p(self):
        return self.cover.p

    @property
    def d(self):
        return self.cover.d

    @cached_property
    def domain(self):
        return self.cover.region()

    def with_form(self, form):
        return OperatorSpec(self.cover, self.alphas, self.weights, form)

    def min_level(self):
        """Smallest admissible truncation level (one below every cover disc)."""
        return self.cover.max_level + 1


def kernel_between(spec, i, b1, b2):
    """Kernel value ``L_i(xi, eta)`` for ``xi`` in b1, ``eta`` in b2 (disjoint balls)."""
    k1 = spec.cover.disc_index(i, b1)
    k2 = spec.cover.disc_index(i, b2)
    if k1 != k2:
        return float(spec.weights[i][k1, k2])
    if not b1.is_disjoint(b2):
        raise GeometryError("kernel between overlapping balls is not constant")
    v = valuation(b1.center - b2.center, spec.p)
    return float(spec.p) ** (float(spec.alphas[i]) * v)


def _valuation_matrix(centers, p):
    """Pairwise p-adic valuations of center differences; diagonal set to -1."""
    shift = 0
    for c in centers:
        den = c.denominator
        k = 0
        while den % p == 0:
            den //= p
            k += 1
        shift = max(shift, k)
    ints = [int(c * p**shift) for c in centers]
    if max(ints, default=0) < 2**62:
        rem = np.array(ints, dtype=np.int64)
    else:
        rem = np.array(ints, dtype=object)
    rem = rem[:, None] - rem[None, :]
    v = np.zeros(rem.shape, dtype=np.int64)
    active = rem != 0
    while True:
        div = active & (rem % p == 0)
        if not div.any():
            break
        v[div] += 1
        rem = np.where(div, rem // p, rem)
    v -= shift
    np.fill_diagonal(v, -1)
    return v


class CoordinateGrid:
    """Level-M cells of ``pi_i(F)`` with the exact cell kernel of coordinate ``i``."""

    def __init__(self, spec, i, M):
        if M <= max(b.level for b in spec.cover.discs[i]):
            raise LevelError(
                f"level {M} must exceed every cover level of coordinate {i}"
            )
        self.spec, self.i, self.M = spec, i, M
        p = spec.p
        cells = []
        discs = []
        for k, disc in enumerate(spec.cover.discs[i]):
            for b in disc.subballs(M):
                cells.append(b)
                discs.append(k)
        order = sorted(range(len(cells)), key=lambda a: cells[a].center)
        self.cells = tuple(cells[a] for a in order)
        self.disc = np.array([discs[a] for a in order], dtype=np.int64)
        self.index = {b: a for a, b in enumerate(self.cells)}
        self.measure = float(Fraction(p) ** (-M))
        self.valuations = _valuation_matrix([b.center for b in self.cells], p)

        same = self.disc[:, None] == self.disc[None, :]
        off = ~np.eye(len(self.cells), dtype=bool)
        alpha = float(spec.alphas[i])
        within = float(p) ** (alpha * self.valuations.astype(float))
        across = spec.weights[i][self.disc[:, None], self.disc[None, :]]
        self.kernel = np.where(same, within, across) * off
        self.kernel_positive = np.where(same, off, across > 0)

    def __len__(self):
        return len(self.cells)

    def laplacian(self, subset=None):
        """Matrix of the pushforward operator on the given cells.

        With ``subset`` (indices into :attr:`cells`) the integration runs over
        those cells only, i.e. the operator induced on a subregion.
        """
        K = self.kernel if subset is None else self.kernel[np.ix_(subset, subset)]
        W = K * self.measure
        return np.diag(W.sum(axis=1)) - W

    def indices(self, balls):
        try:
            return np.array([self.index[b] for b in balls], dtype=np.int64)
        except KeyError as exc:
            raise RegionMismatchError(f"{exc.args[0]} is not a level-{self.M} cell of pi_{self.i}(F)")


@lru_cache(maxsize=64)
def coordinate_grid(spec, i, M):
    return CoordinateGrid(spec, i, M)


def apply_along(matrix, axis, X, shape):
    """Apply a one-coordinate matrix along tensor ``axis`` of a grid vector.

    ``X`` has shape ``(N,)`` or ``(N, k)`` with ``N = prod(shape)``.
    """
    vec = X.ndim == 1
    T = X.reshape(shape + ((1,) if vec else (X.shape[1],)))
    T = np.moveaxis(np.tensordot(matrix, T, axes=([1], [axis])), 0, axis)
    return T.reshape(X.shape)


class Discretization:
    """The level-M product grid of ``F`` with per-coordinate operators."""

    def __init__(self, spec, M):
        self.spec, self.M = spec, M
        self.grids = tuple(coordinate_grid(spec, i, M) for i in range(spec.d))
        self.shape = tuple(len(g) for g in self.grids)
        self.size = int(np.prod(self.shape))
        self.cells = partition(spec.domain, M)
        if len(self.cells) != self.size:
            raise GeometryError("domain is not a product of its coordinate projections")
        self.index = {c: a for a, c in enumerate(self.cells)}
        self.cell_measure = float(Fraction(spec.p) ** (-spec.d * M))
        self.components = tuple(g.laplacian() for g in self.grids)

    def apply(self, i, X, matrix=None):
        return apply_along(self.components[i] if matrix is None else matrix, i, X, self.shape)

    @lru_cache(maxsize=None)
    def global_component(self, i):
        """Dense matrix of ``L_i`` on the full grid (read-only)."""
        out = self.apply(i, np.eye(self.size))
        out.setflags(write=False)
        return out

    def multi_index(self, flat):
        return np.unravel_index(flat, self.shape)

    def indices(self, region):
        """Grid indices of the level-M cells of a region inside ``F``."""
        try:
            return np.array([self.index[c] for c in partition(region, self.M)], dtype=np.int64)
        except KeyError as exc:
            raise RegionMismatchError(f"cell {exc.args[0]} is not inside F")

    def mask(self, region):
        m = np.zeros(self.size, dtype=bool)
        m[self.indices(region)] = True
        return m

    def region_of(self, idx):
        return Region.from_cells(self.cells[a] for a in sorted(np.asarray(idx).tolist()))

    def to_grid(self, f):
        """Values of an LCFunction on the full grid, zero outside its region."""
        g = f.refine(self.M) if f.level < self.M else f
        if g.level != self.M:
            raise LevelError(f"function level {f.level} exceeds the working level {self.M}")
        out = np.zeros(self.size, dtype=np.result_type(g.values.dtype, float))
        out[self.indices(g.region)] = g.values
        return out

    def from_grid(self, vec, region):
        from .function_space import LCFunction

        return LCFunction(region, self.M, np.asarray(vec)[self.indices(region)])

    def coefficient_on_grid(self, values, level):
        """Refine per-cell values at a coarser level onto the grid."""
        coarse = {c: k for k, c in enumerate(partition(self.spec.domain, level))}
        idx = [coarse[PolyDisc(tuple(b.parent(level) for b in c.factors))] for c in self.cells]
        return np.asarray(values)[np.array(idx)]


@lru_cache(maxsize=32)
def discretize(spec, M):
    return Discretization(spec, M)


def cell_label(cell):
    """Compact text label for a cell, e.g. ``B3(5)xB3(2)``."""
    if isinstance(cell, Ball):
        return f"B{cell.level}({cell.center})"
    return "x".join(f"B{b.level}({b.center})" for b in cell.factors)
