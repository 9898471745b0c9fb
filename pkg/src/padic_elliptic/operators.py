"""Assembly of component Laplacians, sub-Laplacians and divergence-form operators.

All matrices act on cell-value vectors at the working level ``M``.  Because
every cell has the same Haar measure, the L^2 adjoint is the ordinary
(conjugate) transpose.
"""
from __future__ import annotations

import numpy as np

from .boundary import closure_indices
from .errors import GeometryError, LevelError, NotAnEigenvectorError
from .function_space import (
    GraphEigenfunction,
    WaveletLabel,
    _wavelet_values,
    is_product_region,
    projection_cells,
)
from .padic_core import Ball
from .kernel import (
    DivergenceForm,
    OperatorSpec,
    PolynomialForm,
    coordinate_grid,
    discretize,
)

__all__ = [
    "OperatorSpec",
    "PolynomialForm",
    "DivergenceForm",
    "assemble_component_matrix",
    "component_eigenvalue_formula",
    "component_eigenvalue_oracle",
    "wavelet_label",
    "wavelet_eigenvalue_formula",
    "eigenvalue_oracle",
    "assemble_sub_laplacian",
    "assemble_divergence_operator",
    "operator_matrix",
    "divergence_parts",
    "check_ellipticity",
    "ellipticity_constant",
    "commutator_residual",
    "leibniz_residual",
    "normality_residual",
    "as_divergence_form",
]

EIGENVECTOR_TOL = 1e-10


def _region(spec, U):
    return spec.domain if U is None else U


def _component_indices(spec, i, U, M):
    grid = coordinate_grid(spec, i, M)
    cells = projection_cells(_region(spec, U), i, M)
    if not cells:
        raise GeometryError(f"empty projection onto coordinate {i}")
    return grid, grid.indices(cells)


def assemble_component_matrix(spec, i, U=None, M=None):
    """Matrix of the pushforward ``pi_{i,*} L_i`` on the level-M cells of ``pi_i(U)``.

    Row ``B`` holds ``-K(B,B') mu(B')`` off the diagonal and the row sum of
    those weights on it.  For ``U`` strictly inside ``F`` the integration is
    over ``pi_i(U)`` only (the operator induced on the subregion).
    """
    M = spec.min_level() if M is None else M
    grid, idx = _component_indices(spec, i, U, M)
    if len(idx) == len(grid):
        return grid.laplacian()
    return grid.laplacian(idx)


def wavelet_label(n, m, j, spec, i, a=None):
    """Label of ``psi_{B_n(a), j}`` in coordinate ``i`` housed in the cover disc ``B_m(a)``.

    Without ``a`` the first cover disc of level ``m`` is used and ``a`` is its center.
    """
    p = spec.p
    if a is None:
        discs = [b for b in spec.cover.discs[i] if b.level == m]
        if not discs:
            raise GeometryError(f"no cover disc of level {m} in coordinate {i}")
        a = discs[0].center
    support = Ball(p, n, a)
    housing = Ball(p, m, a)
    k = spec.cover.disc_index(i, support)
    if spec.cover.discs[i][k] != housing:
        raise GeometryError(f"{housing} is not the cover disc containing {support}")
    return WaveletLabel(i, support, j, housing)


def wavelet_eigenvalue_formula(spec, label):
    """Closed-form eigenvalue attached to a Kozyrev wavelet on ``F``.

    ``p^{n(1+a)} (p^{-m(1+a)} + 1) + sum_{V != U(a)} w(U(a), V) mu(V) - 1``
    with ``n`` the support level and ``m`` the level of the housing cover disc.
    """
    i, p = label.coordinate, spec.p
    alpha = float(spec.alphas[i])
    k = spec.cover.disc_index(i, label.support)
    if spec.cover.discs[i][k] != label.housing:
        raise GeometryError(f"{label.housing} is not the cover disc housing {label.support}")
    n, m = label.n, label.m
    graph_term = sum(
        float(spec.weights[i][k, v]) * float(disc.measure)
        for v, disc in enumerate(spec.cover.discs[i])
        if v != k
    )
    return p ** (n * (1 + alpha)) * (p ** (-m * (1 + alpha)) + 1) + graph_term - 1


def component_eigenvalue_formula(n, m, j, spec, i, a=None):
    """Closed-form wavelet eigenvalue, see :func:`wavelet_eigenvalue_formula`."""
    return wavelet_eigenvalue_formula(spec, wavelet_label(n, m, j, spec, i, a))


def _rayleigh(A, v):
    lam = np.vdot(v, A @ v) / np.vdot(v, v)
    residual = np.linalg.norm(A @ v - lam * v) / np.linalg.norm(v)
    return lam, residual


def eigenvalue_oracle(spec, fn, M):
    """Eigenvalue of a wavelet or graph eigenfunction read off the assembled matrix.

    Raises :class:`NotAnEigenvectorError` when the normalised residual
    ``||A v - lambda v|| / ||v||`` exceeds ``1e-10``.
    """
    if isinstance(fn, WaveletLabel):
        if not fn.representable(M):
            raise LevelError(f"wavelet of level {fn.n} needs M >= {fn.n + 1}")
        grid = coordinate_grid(spec, fn.coordinate, M)
        v = _wavelet_values(fn, grid.cells)
    elif isinstance(fn, GraphEigenfunction):
        grid = coordinate_grid(spec, fn.coordinate, M)
        v = fn.values_on(grid.cells)
    else:
        raise TypeError("expected a WaveletLabel or GraphEigenfunction")
    lam, residual = _rayleigh(grid.laplacian(), v)
    if residual > EIGENVECTOR_TOL:
        raise NotAnEigenvectorError(f"{fn} is not an eigenvector (residual {residual:.3e})", residual)
    return float(lam.real)


def component_eigenvalue_oracle(n, m, j, spec, i, M, a=None):
    """Oracle eigenvalue of ``psi_{B_n(a), j}``, see :func:`eigenvalue_oracle`."""
    return eigenvalue_oracle(spec, wavelet_label(n, m, j, spec, i, a), M)


def _regional_components(spec, U, M):
    mats = []
    for i in range(spec.d):
        grid, idx = _component_indices(spec, i, U, M)
        mats.append(grid.laplacian() if len(idx) == len(grid) else grid.laplacian(idx))
    return mats


def assemble_sub_laplacian(spec, U=None, M=None, polynomial=None):
    """Dense matrix of ``P(L) = sum gamma_k L_1^{k_1} ... L_d^{k_d}`` on a product region."""
    M = spec.min_level() if M is None else M
    P = spec.form if polynomial is None else polynomial
    if not isinstance(P, PolynomialForm):
        raise TypeError("assemble_sub_laplacian needs a PolynomialForm")
    region = _region(spec, U)
    if not is_product_region(region, M):
        raise GeometryError("sub-Laplacians are assembled on product regions")
    mats = _regional_components(spec, region, M)
    size = int(np.prod([m.shape[0] for m in mats]))
    dtype = complex if any(isinstance(g, complex) for g in P.coefficients.values()) else float
    out = np.zeros((size, size), dtype=dtype)
    for k, gamma in P.coefficients.items():
        if gamma == 0:
            continue
        term = np.ones((1, 1))
        for L, e in zip(mats, k):
            term = np.kron(term, np.linalg.matrix_power(L, e))
        out += gamma * term
    return out


def as_divergence_form(spec):
    """Rewrite a real polynomial of degree <= 2 as constant divergence coefficients."""
    form = spec.form
    if isinstance(form, DivergenceForm):
        return form
    if form.degree > 2:
        raise GeometryError("only polynomials of degree <= 2 have a divergence form")
    d = spec.d
    a = np.zeros((d, d))
    b = np.zeros(d)
    c = 0.0
    for k, g in form.coefficients.items():
        if isinstance(g, complex):
            raise GeometryError("divergence form needs real coefficients")
        nz = [i for i, e in enumerate(k) for _ in range(e)]
        if len(nz) == 2:
            i, j = nz
            if i == j:
                a[i, i] += g
            else:
                a[i, j] += g / 2
                a[j, i] += g / 2
        elif len(nz) == 1:
            b[nz[0]] += g
        else:
            c += g
    return DivergenceForm.constant(spec, a, b, c)


def divergence_parts(spec, M, form=None):
    """Full-grid matrices ``(P_2, P_1, P_0)`` of a divergence-form operator."""
    form = as_divergence_form(spec) if form is None else form
    D = discretize(spec, M)
    d = spec.d
    P2 = np.zeros((D.size, D.size))
    P1 = np.zeros((D.size, D.size))
    for i in range(d):
        Li = D.global_component(i)
        for j in range(d):
            aij = D.coefficient_on_grid(form.a[i, j], form.level)
            if np.any(aij != 0):
                P2 += D.apply(j, aij[:, None] * Li)
        bi = D.coefficient_on_grid(form.b[i], form.level)
        if np.any(bi != 0):
            P1 += bi[:, None] * Li
    P0 = np.diag(D.coefficient_on_grid(form.c, form.level))
    return P2, P1, P0


def operator_matrix(spec, M):
    """``P(L)`` on the full level-M grid of ``F`` for either operator form."""
    if isinstance(spec.form, PolynomialForm):
        return assemble_sub_laplacian(spec, None, M)
    P2, P1, P0 = divergence_parts(spec, M)
    return P2 + P1 + P0


def assemble_divergence_operator(spec, U=None, M=None):
    """``sum L_j diag(a^ij) L_i + sum diag(b^i) L_i + diag(c)`` on the cells of closure_delta(U).

    The component operators integrate over ``pi_i(F)``; functions on the
    closure are extended by zero.
    """
    M = spec.min_level() if M is None else M
    if not isinstance(spec.form, DivergenceForm):
        raise TypeError("assemble_divergence_operator needs a DivergenceForm")
    if spec.form.level > M:
        raise GeometryError(f"coefficient level {spec.form.level} exceeds M={M}")
    P2, P1, P0 = divergence_parts(spec, M)
    A = P2 + P1 + P0
    if U is None:
        return A
    idx = closure_indices(spec, U, M)
    return A[np.ix_(idx, idx)]


def check_ellipticity(a, mask=None):
    """Smallest eigenvalue of ``A(x) = (a^ij(x))`` over cells, or ``None``.

    ``a`` has shape ``(d, d, n)``; ``mask`` optionally restricts the cells.
    Returns ``None`` when some cell matrix is not positive definite.
    """
    a = np.asarray(a, dtype=float)
    cells = np.moveaxis(a, 2, 0)
    if mask is not None:
        cells = cells[np.asarray(mask)]
    theta = float(np.min(np.linalg.eigvalsh(cells)[:, 0]))
    return theta if theta > 0 else None


def ellipticity_constant(spec):
    form = as_divergence_form(spec)
    return check_ellipticity(form.a)


def _l2(vec, measure):
    return float(np.sqrt(np.sum(np.abs(vec) ** 2) * measure))


def commutator_residual(spec, i, j, f, M):
    """``||(L_i L_j - L_j L_i) f||_{L^2}`` on the full grid."""
    if i == j:
        raise ValueError("commutator needs two different coordinates")
    D = discretize(spec, M)
    v = D.to_grid(f)
    r = D.apply(i, D.apply(j, v)) - D.apply(j, D.apply(i, v))
    return _l2(r, D.cell_measure)


def leibniz_residual(spec, i, u, phi, M):
    """Sup-norm of ``L_i(u phi) - (L_{i,phi} u + u L_i phi)``.

    ``L_{i,phi} u(x) = sum_eta K(xi_i, eta) mu (u(x) - u(x_eta)) phi(x_eta)``
    is evaluated from the raw cell kernel, the two other terms through the
    assembled matrix.
    """
    D = discretize(spec, M)
    uv, pv = D.to_grid(u), D.to_grid(phi)
    W = coordinate_grid(spec, i, M).kernel * D.grids[i].measure
    lhs = D.apply(i, uv * pv)
    weighted = uv * D.apply(i, pv, W) - D.apply(i, uv * pv, W)
    rhs = weighted + uv * D.apply(i, pv)
    return float(np.max(np.abs(lhs - rhs)))


def normality_residual(spec, M):
    """``||P_1 P_1^* - P_1^* P_1||_F`` of the first-order part on the full grid."""
    _, P1, _ = divergence_parts(spec, M)
    return float(np.linalg.norm(P1 @ P1.conj().T - P1.conj().T @ P1))
