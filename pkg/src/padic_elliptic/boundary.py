"""Kernel-induced boundaries, boundary traces, D_0(U), Sobolev norms and the divergence identity.

All quantities are computed at the working level ``M`` on the product grid of
``F``.  A cell ``y`` outside ``U`` belongs to ``delta_i U`` when it differs from
some cell of ``U`` only in coordinate ``i`` and the kernel between the two
coordinate balls is nonzero.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EmptyConstrainedSpaceError, GeometryError
from .function_space import LCFunction, projection_cells
from .kernel import coordinate_grid, discretize
from .padic_core import Region

__all__ = [
    "BoundarySet",
    "boundary_set",
    "component_boundary",
    "boundary_mass",
    "boundary_trace",
    "closure_indices",
    "closure_region",
    "interior_indices",
    "test_space_D0",
    "sobolev_norm",
    "poincare_constant",
    "divergence_check",
    "boundary_pairing",
]


def _in_mask(spec, U, M):
    D = discretize(spec, M)
    return D, D.mask(U)


def _reach(D, i, source):
    """Cells reachable along coordinate ``i`` from the boolean cell set ``source``."""
    Kpos = D.grids[i].kernel_positive.astype(float)
    return D.apply(i, source.astype(float), Kpos) > 0


def _delta_masks(spec, U, M):
    D, inside = _in_mask(spec, U, M)
    return D, inside, [(_reach(D, i, inside) & ~inside) for i in range(spec.d)]


@dataclass(frozen=True)
class BoundarySet:
    """Per-coordinate boundary balls, the boundary cells and the closure.

    ``boundary`` is ``None`` when ``delta U`` is empty.
    """

    per_coordinate: tuple
    boundary: Region | None
    closure: Region

    @property
    def is_empty(self):
        return self.boundary is None


def component_boundary(spec, U, i, M):
    """Level-M coordinate balls ``eta`` of ``delta_i U``, sorted by center.

    ``eta`` belongs to the boundary when some ``x`` in ``U`` has nonzero
    kernel ``L_i(xi_i, eta)`` and the point ``x`` with coordinate ``i``
    replaced by ``eta`` lies outside ``U``.
    """
    D, inside, deltas = _delta_masks(spec, U, M)
    hit = deltas[i].reshape(D.shape)
    axes = tuple(a for a in range(spec.d) if a != i)
    cols = np.flatnonzero(hit.any(axis=axes)) if axes else np.flatnonzero(hit)
    return [D.grids[i].cells[k] for k in cols]


def boundary_set(spec, U, M):
    D, inside, deltas = _delta_masks(spec, U, M)
    per = []
    for i, mask in enumerate(deltas):
        hit = mask.reshape(D.shape)
        axes = tuple(a for a in range(spec.d) if a != i)
        cols = np.flatnonzero(hit.any(axis=axes)) if axes else np.flatnonzero(hit)
        per.append(tuple(D.grids[i].cells[k] for k in cols))
    delta = np.zeros(D.size, dtype=bool)
    for mask in deltas:
        delta |= mask
    boundary = D.region_of(np.flatnonzero(delta)) if delta.any() else None
    closure = D.region_of(np.flatnonzero(inside | delta))
    return BoundarySet(tuple(per), boundary, closure)


def closure_indices(spec, U, M):
    """Sorted grid indices of the cells of ``closure_delta(U) = U + delta U``."""
    D, inside, deltas = _delta_masks(spec, U, M)
    mask = inside.copy()
    for m in deltas:
        mask |= m
    return np.flatnonzero(mask)


def closure_region(spec, U, M):
    return discretize(spec, M).region_of(closure_indices(spec, U, M))


def boundary_mass(spec, U, i, M):
    """Grid vector ``x -> int_{delta_i U} L_i(xi_i, eta) d eta`` (zero off ``U``)."""
    D, inside = _in_mask(spec, U, M)
    W = D.grids[i].kernel * D.grids[i].measure
    mass = D.apply(i, (~inside).astype(float), W)
    return np.where(inside, mass, 0.0)


def boundary_trace(u, spec, U, i, M):
    """``u|_{delta_i U}``: ``u`` times its kernel mass toward ``delta_i U``, as a function on ``U``."""
    D = discretize(spec, M)
    vals = D.to_grid(u) * boundary_mass(spec, U, i, M)
    return D.from_grid(vals, U)


def interior_indices(spec, U, M):
    """Grid indices of cells of ``U`` with zero boundary kernel mass in every coordinate."""
    D, inside = _in_mask(spec, U, M)
    keep = inside.copy()
    for i in range(spec.d):
        keep &= ~_reach(D, i, ~inside)
    return np.flatnonzero(keep)


def test_space_D0(spec, U, M):
    """Indicator basis of ``D_0(U)`` at level ``M`` as LCFunctions on ``closure_delta(U)``.

    Raises :class:`EmptyConstrainedSpaceError` when no cell qualifies.
    """
    D = discretize(spec, M)
    idx = interior_indices(spec, U, M)
    if idx.size == 0:
        raise EmptyConstrainedSpaceError("D_0(U) is trivial: every cell of U touches the boundary")
    closure = closure_indices(spec, U, M)
    region = D.region_of(closure)
    pos = {g: k for k, g in enumerate(closure.tolist())}
    out = []
    for g in idx.tolist():
        vals = np.zeros(len(closure))
        vals[pos[g]] = 1.0
        out.append(LCFunction(region, M, vals))
    return out


test_space_D0.__test__ = False  # not a pytest test despite the name


def multi_indices(d, k):
    """All ``l`` in N^d with ``|l| <= k``."""
    return [l for l in itertools.product(range(k + 1), repeat=d) if sum(l) <= k]


def sobolev_norm(f, spec, U=None, k=1, q=2, M=None):
    """``(sum_{|l| <= k} ||L^l f||_{L^q(U)}^q)^(1/q)`` with ``l`` in N^d.

    ``f`` is extended by zero to ``F``; the operators integrate over ``pi_i(F)``.
    """
    if k < 0 or q < 1:
        raise ValueError("need k >= 0 and 1 <= q < inf")
    M = max(f.level, spec.min_level()) if M is None else M
    D = discretize(spec, M)
    U = f.region if U is None else U
    inside = D.mask(U)
    v = D.to_grid(f)
    total = 0.0
    for l in multi_indices(spec.d, k):
        g = v
        for i, e in enumerate(l):
            for _ in range(e):
                g = D.apply(i, g)
        total += float(np.sum(np.abs(g[inside]) ** q) * D.cell_measure)
    return total ** (1.0 / q)


def poincare_constant(spec, i, U=None, M=None):
    """``1 / lambda_min^+`` of the component matrix on ``pi_i(U)``."""
    M = spec.min_level() if M is None else M
    U = spec.domain if U is None else U
    grid = coordinate_grid(spec, i, M)
    idx = grid.indices(projection_cells(U, i, M))
    A = grid.laplacian(idx)
    lam = np.linalg.eigvalsh(A)
    tol = 1e-10 * max(1.0, float(np.abs(lam).max()))
    pos = lam[lam > tol]
    if pos.size == 0:
        raise GeometryError(f"component operator {i} vanishes identically on U")
    return float(1.0 / pos.min())


def divergence_check(spec, U, f, i, M):
    """Both sides of the divergence identity for ``f`` extended by zero outside ``U``.

    ``lhs = int_U L_i f dx`` (integration over ``pi_i(F)`` inside ``L_i``);
    ``rhs = int_{delta_i U} int_U L_i(xi_i, eta_i) f(x) dx d eta_i`` from the raw
    cell kernel.
    """
    D, inside = _in_mask(spec, U, M)
    v = D.to_grid(f) * inside
    lhs = complex(np.sum(D.apply(i, v)[inside]) * D.cell_measure)
    W = D.grids[i].kernel * D.grids[i].measure
    pushed = D.apply(i, v, W)
    delta = _reach(D, i, inside) & ~inside
    rhs = complex(np.sum(pushed[delta]) * D.cell_measure)
    if lhs.imag == 0 and rhs.imag == 0:
        return lhs.real, rhs.real
    return lhs, rhs


def boundary_pairing(spec, U, u, phi, i, M):
    """``(int_U L_i(u phi) dx, int_U u|_{delta_i U} phi dx)`` for ``phi`` supported in ``U``."""
    D, inside = _in_mask(spec, U, M)
    uv = D.to_grid(u)
    pv = D.to_grid(phi) * inside
    lhs = np.sum(D.apply(i, uv * pv)[inside]) * D.cell_measure
    rhs = np.sum((uv * boundary_mass(spec, U, i, M) * pv)[inside]) * D.cell_measure
    return complex(lhs), complex(rhs)
