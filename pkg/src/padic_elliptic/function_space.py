"""Locally constant functions, Kozyrev wavelets and the tensor eigenbasis."""
from __future__ import annotations

import cmath
import itertools
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import GeometryError, LevelError, RegionMismatchError
from .kernel import coordinate_grid, kernel_between
from .padic_core import Ball, PolyDisc, Region, fractional_part, partition


@dataclass(frozen=True, eq=False)
class LCFunction:
    """A function on ``region`` that is constant on every level-``level`` cell.

    ``values[k]`` is the value on ``partition(region, level)[k]``.
    """

    region: Region
    level: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype.kind not in "fc":
            values = values.astype(float)
        n = len(partition(self.region, self.level))
        if values.shape != (n,):
            raise GeometryError(f"expected {n} cell values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, region, level, value=1.0):
        return cls(region, level, np.full(len(partition(region, level)), value))

    @property
    def cells(self):
        return partition(self.region, self.level)

    @property
    def cell_measure(self):
        return float(Fraction(self.region.p) ** (-self.region.d * self.level))

    @cached_property
    def _index(self):
        return {c: k for k, c in enumerate(self.cells)}

    def refine(self, M):
        """The same function represented at the finer level ``M``."""
        if M < self.level:
            raise LevelError(f"cannot coarsen from level {self.level} to {M}")
        if M == self.level:
            return self
        idx = [
            self._index[PolyDisc(tuple(b.parent(self.level) for b in c.factors))]
            for c in partition(self.region, M)
        ]
        return LCFunction(self.region, M, self.values[np.array(idx)])

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell_measure))

    def __add__(self, other):
        M = max(self.level, other.level)
        f, g = self.refine(M), other.refine(M)
        _check_same_cells(f, g)
        return LCFunction(self.region, M, f.values + g.values)

    def __mul__(self, other):
        if isinstance(other, LCFunction):
            M = max(self.level, other.level)
            f, g = self.refine(M), other.refine(M)
            _check_same_cells(f, g)
            return LCFunction(self.region, M, f.values * g.values)
        return LCFunction(self.region, self.level, self.values * other)

    __rmul__ = __mul__


def _check_same_cells(f, g):
    if f.region is not g.region and f.cells != g.cells:
        raise RegionMismatchError("functions live on different regions")


def inner_product(f, g):
    """L^2 inner product ``sum f(B) conj(g(B)) mu(B)`` on the common refinement."""
    M = max(f.level, g.level)
    f, g = f.refine(M), g.refine(M)
    _check_same_cells(f, g)
    return complex(np.sum(f.values * np.conj(g.values)) * f.cell_measure)


def evaluate(f, x):
    """Value of ``f`` at a point given as a ball/polydisc of level >= f.level."""
    if isinstance(x, Ball):
        x = PolyDisc((x,))
    if any(b.level < f.level for b in x.factors):
        raise LevelError("point must be given at least at the function's level")
    cell = PolyDisc(tuple(b.parent(f.level) for b in x.factors))
    try:
        return f.values[f._index[cell]]
    except KeyError:
        raise GeometryError(f"{x} lies outside the function's region") from None


# --- Kozyrev wavelets -------------------------------------------------------


@dataclass(frozen=True)
class WaveletLabel:
    """``psi_{B_n(a), j}`` in coordinate ``i``, housed in the cover disc ``housing``."""

    coordinate: int
    support: Ball
    j: int
    housing: Ball

    def __post_init__(self):
        p = self.support.p
        if not 1 <= self.j <= p - 1:
            raise GeometryError(f"j must be in 1..{p - 1}")
        if not self.housing.contains(self.support):
            raise GeometryError(f"{self.support} is not inside the disc {self.housing}")

    @property
    def n(self):
        return self.support.level

    @property
    def m(self):
        return self.housing.level

    def representable(self, M):
        return self.n + 1 <= M

    def __str__(self):
        b = self.support
        return f"psi(i={self.coordinate + 1},B_{b.level}({b.center}),j={self.j})"


def wavelet_phases(label):
    """Exact phases of the wavelet on the ``p`` sub-balls of its support.

    Returns ``[(ball, theta)]`` with the wavelet equal to
    ``p**(n/2) * exp(2 pi i theta)`` on ``ball`` (level ``n + 1``).
    """
    p, n = label.support.p, label.n
    scale = Fraction(p) ** (-n - 1) * label.j
    return [(b, fractional_part(scale * b.center, p)) for b in label.support.subballs(n + 1)]


def _wavelet_values(label, cells):
    p, n = label.support.p, label.n
    scale = Fraction(p) ** (-n - 1) * label.j
    amp = float(p) ** (n / 2)
    out = np.zeros(len(cells), dtype=complex)
    for k, c in enumerate(cells):
        if label.support.contains(c):
            out[k] = amp * cmath.exp(2j * cmath.pi * float(fractional_part(scale * c.center, p)))
    return out


def kozyrev_wavelet(label, M, region=None):
    """The wavelet as an LCFunction at level ``M`` (one-dimensional region).

    ``region`` defaults to the housing cover disc.
    """
    if not label.representable(M):
        raise LevelError(f"wavelet of level {label.n} needs M >= {label.n + 1}")
    if region is None:
        region = Region((PolyDisc((label.housing,)),))
    if region.d != 1:
        raise GeometryError("wavelets live on one-dimensional regions")
    if not region.contains(PolyDisc((label.support,))):
        raise GeometryError(f"support {label.support} is not inside the region")
    cells = [c.factors[0] for c in partition(region, M)]
    return LCFunction(region, M, _wavelet_values(label, cells))


# --- graph eigenfunctions ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class GraphEigenfunction:
    """Eigenfunction of ``f -> sum_V w(U,V) mu(V) (f(U) - f(V))``, constant on vertices."""

    coordinate: int
    vertices: tuple
    coefficients: np.ndarray
    eigenvalue: float
    index: int

    def values_on(self, cells):
        out = np.zeros(len(cells))
        for k, c in enumerate(cells):
            for v, coef in zip(self.vertices, self.coefficients):
                if v.contains(c):
                    out[k] = coef
                    break
        return out

    def __str__(self):
        return f"graph(i={self.coordinate + 1},k={self.index})"


def graph_eigenfunctions(vertices, weights, coordinate=0):
    """L^2-orthonormal eigenpairs of the weighted graph operator on disjoint balls.

    ``weights[U][V]`` must be symmetric, nonnegative with zero diagonal.  The
    operator is self-adjoint for the measure-weighted inner product, so it is
    solved through the symmetric matrix ``D^(1/2) G D^(-1/2)``.
    """
    n = len(vertices)
    W = np.array([[float(Fraction(x)) if isinstance(x, str) else float(x) for x in row]
                  for row in weights], dtype=float).reshape(n, n)
    if np.any(W < 0):
        raise GeometryError("graph weights must be nonnegative")
    if not np.array_equal(W, W.T):
        raise GeometryError("graph weights must be symmetric")
    if np.any(np.diag(W) != 0):
        raise GeometryError("graph weights need a zero diagonal")
    mu = np.array([float(v.measure) for v in vertices])
    root = np.sqrt(mu)
    S = -W * np.outer(root, root)
    S[np.diag_indices(n)] = (W * mu[None, :]).sum(axis=1)
    lam, Y = np.linalg.eigh(S)
    out = []
    for k in range(n):
        y = Y[:, k]
        pivot = np.flatnonzero(np.abs(y) > 1e-12)
        if pivot.size and y[pivot[0]] < 0:
            y = -y
        out.append(GraphEigenfunction(coordinate, tuple(vertices), y / root, float(lam[k]), k))
    return out


def maximal_balls(cells, floor_level):
    """Coarsest disjoint balls (of level >= floor_level) exactly tiling ``cells``."""
    if not cells:
        return []
    p = cells[0].p
    current = set(cells)
    top = max(b.level for b in cells)
    for lvl in range(top - 1, floor_level - 1, -1):
        kids = defaultdict(list)
        for b in current:
            if b.level == lvl + 1:
                kids[b.parent(lvl)].append(b)
        for parent, group in kids.items():
            if len(group) == p:
                current.difference_update(group)
                current.add(parent)
    return sorted(current, key=lambda b: (b.center, b.level))


# --- tensor basis ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ComponentBasisFunction:
    """One factor of a tensor basis element: values on the coordinate cells."""

    label: object
    values: np.ndarray

    @property
    def kind(self):
        return "graph" if isinstance(self.label, GraphEigenfunction) else "wavelet"


@dataclass(frozen=True, eq=False)
class TensorBasisElement:
    factors: tuple

    @property
    def label(self):
        return "*".join(str(f.label) for f in self.factors)

    @property
    def structure(self):
        return "*".join(f.kind for f in self.factors)

    def grid_values(self):
        """Values on the product of the coordinate cell lists (C order)."""
        out = np.ones(1, dtype=complex)
        for f in self.factors:
            out = np.multiply.outer(out, f.values).ravel()
        if np.all(out.imag == 0):
            return out.real
        return out


def projection_cells(region, i, M):
    """Sorted level-M cells of ``pi_i(region)``."""
    return sorted({c.factors[i] for c in partition(region, M)}, key=lambda b: b.center)


def is_product_region(region, M):
    sizes = [len(projection_cells(region, i, M)) for i in range(region.d)]
    return int(np.prod(sizes)) == len(partition(region, M))


def component_basis(spec, i, cells):
    """Orthonormal eigenbasis of the induced coordinate operator on ``cells``.

    The graph part lives on the maximal balls of the cell set inside each
    cover disc; edge weights are the kernel between those balls.
    """
    cover = spec.cover.discs[i]
    vertices = []
    housing = {}
    for disc in cover:
        inside = [c for c in cells if disc.contains(c)]
        for v in maximal_balls(inside, disc.level):
            vertices.append(v)
            housing[v] = disc
    vertices.sort(key=lambda b: (b.center, b.level))
    nv = len(vertices)
    W = np.zeros((nv, nv))
    for a, b in itertools.combinations(range(nv), 2):
        W[a, b] = W[b, a] = kernel_between(spec, i, vertices[a], vertices[b])
    graph = graph_eigenfunctions(vertices, W, coordinate=i)
    out = [ComponentBasisFunction(g, g.values_on(cells)) for g in graph]

    M = cells[0].level
    labels = []
    for v in vertices:
        for n in range(v.level, M):
            for support in v.subballs(n):
                for j in range(1, spec.p):
                    labels.append(WaveletLabel(i, support, j, housing[v]))
    labels.sort(key=lambda w: (w.support.center, w.n, w.j))
    out.extend(ComponentBasisFunction(w, _wavelet_values(w, cells)) for w in labels)
    return out


def tensor_basis(spec, U, M):
    """Complete orthonormal product eigenbasis of level-M functions on ``U``.

    ``U`` must be a product region inside ``F``; the basis is ordered as the
    C-order product of the per-coordinate bases (graph functions by
    eigenvalue first, then wavelets by center, level and ``j``).
    """
    if M < spec.min_level():
        raise LevelError(f"level {M} too small; need M >= {spec.min_level()}")
    if not is_product_region(U, M):
        raise GeometryError("tensor bases exist only on product regions")
    per_coord = []
    for i in range(spec.d):
        cells = projection_cells(U, i, M)
        coordinate_grid(spec, i, M).indices(cells)  # inside pi_i(F)
        per_coord.append(component_basis(spec, i, cells))
    return [TensorBasisElement(tuple(fs)) for fs in itertools.product(*per_coord)]


def basis_matrix(basis, cell_measure):
    """Columns are the basis elements scaled to Euclidean unit norm."""
    return np.column_stack([b.grid_values() for b in basis]) * np.sqrt(cell_measure)
