"""Spectral decomposition, weak Poisson solves, energy estimates, semigroup and path sampling.

Matrices act on cell values at level ``M``; ``cell_measure`` converts between
cell vectors and L^2 functions.  Orthonormal eigenfunctions are
``psi = v / sqrt(mu)`` for unit columns ``v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .boundary import (
    boundary_mass,
    closure_indices,
    interior_indices,
    sobolev_norm,
)
from .errors import (
    EmptyConstrainedSpaceError,
    KernelObstructionError,
    NoInvariantVectorError,
    NotAGeneratorError,
    NotDiagonalisableError,
    NotEllipticError,
)
from .function_space import LCFunction, basis_matrix, tensor_basis
from .kernel import DivergenceForm, discretize
from .operators import as_divergence_form, check_ellipticity, divergence_parts

ZERO_TOL = 1e-10


def zero_threshold(matrix):
    return ZERO_TOL * max(1.0, float(np.linalg.norm(matrix, 2)))


# --- spectral data -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigen-decomposition ``A = V diag(lam) V^{-1}`` of a cell-level matrix.

    For symmetric input ``V`` is orthogonal/unitary and ``inverse`` is ``V^*``.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray
    matrix: np.ndarray
    cell_measure: float = 1.0
    labels: tuple = None
    symmetric: bool = True
    blocks: int = 1
    cells: tuple = None

    @property
    def size(self):
        return len(self.eigenvalues)

    @property
    def threshold(self):
        return zero_threshold(self.matrix)

    @property
    def kernel_mask(self):
        return np.abs(self.eigenvalues) <= self.threshold

    def multiplicities(self, decimals=9):
        """``{eigenvalue: multiplicity}`` with eigenvalues rounded to ``decimals``."""
        vals, counts = np.unique(np.round(self.eigenvalues.real, decimals), return_counts=True)
        return dict(zip(vals.tolist(), counts.tolist()))

    def eigenfunctions(self):
        """L^2-normalised eigenfunction values, one column per eigenvalue."""
        return self.vectors / np.sqrt(self.cell_measure)

    def spectral_function(self, g, mask=None):
        """Matrix ``V g(lam) V^{-1}`` restricted to the eigenvalues in ``mask``."""
        w = g(self.eigenvalues)
        if mask is not None:
            w = np.where(mask, w, 0.0)
        return (self.vectors * w[None, :]) @ self.inverse

    def kernel_projection(self):
        return self.spectral_function(np.ones_like, self.kernel_mask)

    def index(self, x):
        if isinstance(x, (int, np.integer)):
            return int(x)
        if self.cells is None:
            raise TypeError("spectral data carries no cell list; pass an index")
        return self.cells.index(x)


def _is_real(A):
    return not np.iscomplexobj(A) or np.all(A.imag == 0)


def _eigh_blocks(B):
    """Eigenpairs of a Hermitian matrix split along its connected sparsity blocks."""
    pattern = np.abs(B) > 1e-13 * max(1.0, float(np.abs(B).max()))
    nblocks, comp = connected_components(pattern, directed=False)
    n = B.shape[0]
    lam = np.empty(n)
    Y = np.zeros((n, n), dtype=B.dtype)
    pos = 0
    for b in range(nblocks):
        idx = np.flatnonzero(comp == b)
        w, y = np.linalg.eigh(B[np.ix_(idx, idx)])
        k = len(idx)
        lam[pos:pos + k] = w
        Y[idx, pos:pos + k] = y
        pos += k
    order = np.argsort(lam, kind="stable")
    return lam[order], Y[:, order], nblocks


def eigendecompose(matrix, symmetric=True, basis=None, cell_measure=1.0, labels=None, cells=None):
    """Full eigendecomposition of a cell-level matrix.

    With ``symmetric`` the matrix must be Hermitian within ``1e-10``; when an
    orthonormal ``basis`` (columns) is given the matrix is rotated into it
    and the invariant blocks revealed by the sparsity pattern are solved
    separately.  Nonsymmetric input goes through a general eigen-solver and
    raises :class:`NotDiagonalisableError` when the eigenvectors are
    numerically dependent.
    """
    A = np.asarray(matrix)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("eigendecompose needs a square matrix")
    if symmetric:
        asym = float(np.abs(A - A.conj().T).max()) if A.size else 0.0
        if asym > 1e-10 * max(1.0, float(np.abs(A).max())):
            raise ValueError(f"matrix is not symmetric (residual {asym:.3e})")
        H = (A + A.conj().T) / 2
        nblocks = 1
        if basis is not None:
            Q = np.asarray(basis)
            lam, Y, nblocks = _eigh_blocks(Q.conj().T @ H @ Q)
            V = Q @ Y
        else:
            lam, V = np.linalg.eigh(H)
        if _is_real(V):
            V = V.real
        return SpectralData(lam, V, V.conj().T, A, cell_measure, labels, True, nblocks, cells)

    lam, V = sla.eig(A)
    if np.linalg.cond(V) > 1e12:
        raise NotDiagonalisableError("eigenvectors are numerically dependent")
    order = np.lexsort((lam.imag, lam.real))
    lam, V = lam[order], V[:, order]
    if np.all(np.abs(lam.imag) <= 1e-12 * max(1.0, float(np.abs(lam).max()))):
        lam = lam.real
        if np.all(np.abs(V.imag) <= 1e-14):
            V = V.real
    return SpectralData(lam, V, np.linalg.inv(V), A, cell_measure, labels, False, 1, cells)


def spectral_data_for(spec, M):
    """Spectral data of ``P(L)`` on the full grid of ``F``, using the tensor basis for blocks."""
    from .operators import operator_matrix

    D = discretize(spec, M)
    A = operator_matrix(spec, M)
    symmetric = bool(np.abs(A - A.conj().T).max() <= 1e-10 * max(1.0, float(np.abs(A).max())))
    if symmetric:
        basis = basis_matrix(tensor_basis(spec, spec.domain, M), D.cell_measure)
        return eigendecompose(A, True, basis, D.cell_measure, cells=D.cells)
    return eigendecompose(A, False, cell_measure=D.cell_measure, cells=D.cells)


# --- weak Poisson solves -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PoissonResult:
    """Galerkin solution on ``closure_delta(U)`` with its diagnostics."""

    solution: LCFunction
    residual: float
    rhs_norm: float
    mu_shift: float
    trace_norms: tuple
    interior: np.ndarray
    minimal_norm: bool = False


def _operator_on_grid(spec, M):
    if isinstance(spec.form, DivergenceForm):
        P2, P1, P0 = divergence_parts(spec, M)
        return P2 + P1 + P0, P1.any() or P0.any()
    form = as_divergence_form(spec)
    P2, P1, P0 = divergence_parts(spec, M, form)
    return P2 + P1 + P0, form.has_lower_order


def _theta(spec, U, M):
    form = as_divergence_form(spec)
    return check_ellipticity(form.a)


def solve_poisson(spec, U, f, mu_shift=None, M=None):
    """Weak solution of ``(P(L) + mu) u = f`` with ``u`` vanishing on the boundary.

    The trial and test space is ``D_0(U)``: indicators of the cells of ``U``
    that carry no kernel mass toward the boundary.  ``mu_shift`` defaults to
    0 for a pure second-order operator and to the energy constant ``gamma``
    otherwise.  A singular system is solved in the minimal-norm sense when
    ``f`` is orthogonal to its kernel, otherwise
    :class:`KernelObstructionError` is raised.
    """
    M = max(f.level, spec.min_level()) if M is None else M
    if _theta(spec, U, M) is None:
        raise NotEllipticError("coefficient matrix is not positive definite")
    D = discretize(spec, M)
    A, lower = _operator_on_grid(spec, M)
    inner = interior_indices(spec, U, M)
    if inner.size == 0:
        raise EmptyConstrainedSpaceError("D_0(U) is trivial at this level")
    if mu_shift is None:
        mu_shift = energy_bounds(spec, U, M, samples=0).gamma if lower else 0.0
    if mu_shift < 0:
        raise ValueError("mu_shift must be nonnegative")
    fv = D.to_grid(f)[inner]
    K = A[np.ix_(inner, inner)] + mu_shift * np.eye(inner.size)
    thr = zero_threshold(K)
    s = np.linalg.svd(K, compute_uv=False)
    minimal = bool(s.min() <= thr)
    if minimal:
        U_, sv, Vh = np.linalg.svd(K)
        null_left = U_[:, sv <= thr]
        comp = null_left.conj().T @ fv
        if np.linalg.norm(comp) > 1e-8 * max(1.0, np.linalg.norm(fv)):
            raise KernelObstructionError(
                "right-hand side has a component in the kernel of the constrained system",
                null_left @ comp,
            )
        c = np.linalg.pinv(K, rcond=thr / s.max(), hermitian=False) @ fv
    else:
        c = np.linalg.solve(K, fv)
    res = float(np.linalg.norm(K @ c - fv) * np.sqrt(D.cell_measure))
    closure = closure_indices(spec, U, M)
    full = np.zeros(D.size, dtype=np.result_type(c, float))
    full[inner] = c
    u = LCFunction(D.region_of(closure), M, full[closure])
    traces = tuple(
        float(np.sqrt(np.sum(np.abs(full * boundary_mass(spec, U, i, M)) ** 2) * D.cell_measure))
        for i in range(spec.d)
    )
    fnorm = float(np.linalg.norm(fv) * np.sqrt(D.cell_measure))
    return PoissonResult(u, res, fnorm, float(mu_shift), traces, inner, minimal)


def bilinear_form(spec, u, v, U, M):
    """``B[u, v] = int_U (sum a^ij L_i u conj(L_j v) + sum b^i L_i u conj(v) + c u conj(v))``."""
    form = as_divergence_form(spec)
    D = discretize(spec, M)
    inside = D.mask(U)
    uv, vv = D.to_grid(u), D.to_grid(v)
    Lu = [D.apply(i, uv) for i in range(spec.d)]
    Lv = [D.apply(i, vv) for i in range(spec.d)]
    total = 0.0
    for i in range(spec.d):
        for j in range(spec.d):
            a = D.coefficient_on_grid(form.a[i, j], form.level)
            total = total + np.sum((a * Lu[i] * np.conj(Lv[j]))[inside])
        b = D.coefficient_on_grid(form.b[i], form.level)
        total = total + np.sum((b * Lu[i] * np.conj(vv))[inside])
    c = D.coefficient_on_grid(form.c, form.level)
    total = total + np.sum((c * uv * np.conj(vv))[inside])
    total = complex(total * D.cell_measure)
    return total.real if total.imag == 0 else total


# --- energy estimates --------------------------------------------------------


@dataclass(frozen=True)
class EnergyReport:
    """Constants of the two energy inequalities and the outcome of their check."""

    alpha: float
    beta: float
    gamma: float
    theta: float
    checked: int = 0
    violations: int = 0
    witness: object = None

    @property
    def passed(self):
        return self.violations == 0


def _energy_matrices(spec, U, M):
    """Galerkin matrices on ``D_0(U)`` cells: form ``B``, mass ``I``, W^{1,2} Gram ``N``."""
    form = as_divergence_form(spec)
    D = discretize(spec, M)
    inner = interior_indices(spec, U, M)
    if inner.size == 0:
        raise EmptyConstrainedSpaceError("D_0(U) is trivial at this level")
    inside = D.mask(U)
    R = np.zeros((D.size, inner.size))
    R[inner, np.arange(inner.size)] = 1.0
    L = [D.apply(i, R) * inside[:, None] for i in range(spec.d)]
    B = np.zeros((inner.size, inner.size))
    for i in range(spec.d):
        for j in range(spec.d):
            a = D.coefficient_on_grid(form.a[i, j], form.level)
            B += L[j].T @ (a[:, None] * L[i])
        b = D.coefficient_on_grid(form.b[i], form.level)
        B += R.T @ (b[:, None] * L[i])
    c = D.coefficient_on_grid(form.c, form.level)
    B += R.T @ (c[:, None] * R)
    N = np.eye(inner.size) + sum(Li.T @ Li for Li in L)
    return form, B, N, inner


def energy_bounds(spec, U, M, samples=1000, seed=0):
    """Constants ``alpha, beta, gamma`` and a check of both energy inequalities.

    ``alpha`` is the sum of coefficient sup-norms.  The candidate ``gamma``
    comes from absorbing the first-order terms with
    ``eps = theta / (4 sum ||b^i||)``; when the resulting ``beta`` (a
    generalised Rayleigh minimum on ``D_0(U)``) is not positive, because
    constants lie in the space, ``gamma`` is raised by ``theta / 2``.
    Both inequalities are checked on the eigenbasis of the Galerkin form and
    on ``samples`` random pairs.  Cell vectors are scaled by the cell measure.
    """
    theta = _theta(spec, U, M)
    if theta is None:
        raise NotEllipticError("coefficient matrix is not positive definite")
    form, B, N, inner = _energy_matrices(spec, U, M)
    alpha = float(np.abs(form.a).max(axis=2).sum() + np.abs(form.b).max(axis=1).sum()
                  + np.abs(form.c).max())
    bsum = float(np.abs(form.b).max(axis=1).sum())
    gamma = bsum**2 / theta + float(np.abs(form.c).max()) if bsum > 0 else float(np.abs(form.c).max())
    if not form.has_lower_order:
        gamma = 0.0
    S = (B + B.T) / 2

    def rayleigh_min(g):
        return float(sla.eigh(S + g * np.eye(len(S)), N, eigvals_only=True)[0])

    beta = rayleigh_min(gamma)
    if beta <= 1e-9:
        gamma += theta / 2
        beta = rayleigh_min(gamma)
    # guard the estimate against eigen-solver round-off
    beta *= 1 - 1e-9

    rng = np.random.default_rng(seed)
    n = len(S)
    _, evecs = sla.eigh(S + gamma * np.eye(n), N)
    checked = violations = 0
    witness = None
    tol = 1e-9

    def check(u, v):
        nonlocal checked, violations, witness
        nu, nv = float(u @ N @ u), float(v @ N @ v)
        ok1 = abs(u @ B @ v) <= alpha * np.sqrt(nu * nv) * (1 + tol) + tol
        ok2 = beta * nu <= u @ B @ u + gamma * (u @ u) + tol * nu
        checked += 1
        if not (ok1 and ok2):
            violations += 1
            if witness is None:
                witness = (u, v)

    for k in range(n):
        check(evecs[:, k], evecs[:, (k + 1) % n])
    for _ in range(samples):
        check(rng.standard_normal(n), rng.standard_normal(n))
    return EnergyReport(alpha, beta, gamma, theta, checked, violations, witness)


# --- semigroup, heat kernel, Green function ----------------------------------


def _check_t(t):
    if t < 0:
        raise ValueError("t must be nonnegative")


def semigroup_matrix(spectral, t):
    """``exp(-t A)`` as a cell-level matrix."""
    _check_t(t)
    out = spectral.spectral_function(lambda lam: np.exp(-t * lam))
    return out.real if _is_real(out) else out


def semigroup_apply(spectral, t, f):
    """``exp(-t P(L)) f`` for an LCFunction whose cells are the spectral cells."""
    vals = f.values if isinstance(f, LCFunction) else np.asarray(f)
    out = semigroup_matrix(spectral, t) @ vals
    if isinstance(f, LCFunction):
        return LCFunction(f.region, f.level, out)
    return out


def heat_matrix(spectral, t):
    """``H(x, y, t)`` for all cell pairs (the kernel of ``exp(-tA)`` against Haar measure)."""
    return semigroup_matrix(spectral, t) / spectral.cell_measure


def heat_kernel(spectral, x, y, t):
    return complex(heat_matrix(spectral, t)[spectral.index(x), spectral.index(y)])


def green_matrix(spectral):
    """``G(x, y) = sum_{lam > 0} lam^{-1} psi(x) conj(psi(y))`` for all cell pairs."""
    pos = ~spectral.kernel_mask
    with np.errstate(divide="ignore"):
        out = spectral.spectral_function(lambda lam: 1.0 / np.where(pos, lam, 1.0), pos)
    out = out / spectral.cell_measure
    return out.real if _is_real(out) else out


def green_function(spectral, x, y):
    return complex(green_matrix(spectral)[spectral.index(x), spectral.index(y)])


def integrate_heat_kernel(spectral, T, panels=40, order=20):
    """``int_0^T h(x, y, t) dt`` for all pairs, ``h`` the heat kernel minus its zero modes.

    Composite Gauss-Legendre on geometrically graded panels, applied to every
    ``exp(-lam t)`` separately.
    """
    pos = ~spectral.kernel_mask
    lam_max = float(np.max(np.abs(spectral.eigenvalues[pos])))
    start = min(T, 1e-3 / lam_max)
    edges = np.concatenate([[0.0], np.geomspace(start, T, panels)])
    x, w = np.polynomial.legendre.leggauss(order)
    weights = np.zeros(spectral.size, dtype=complex)
    for a, b in zip(edges[:-1], edges[1:]):
        t = (b - a) / 2 * x + (a + b) / 2
        weights += ((b - a) / 2 * w[None, :] * np.exp(-np.outer(spectral.eigenvalues, t))).sum(axis=1)
    out = spectral.spectral_function(lambda lam: weights, pos) / spectral.cell_measure
    return out.real if _is_real(out) else out


# --- Markov structure ----------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    witness: object = None


@dataclass(frozen=True)
class MarkovReport:
    checks: tuple = field(default_factory=tuple)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def by_name(self, name):
        return [c for c in self.checks if c.name == name]


def markov_checks(spectral, t_grid, sample_count=100, rng_seed=0, tol=1e-8):
    """Positivity, sub-Markov bound, mass preservation and semigroup law on a grid of times."""
    rng = np.random.default_rng(rng_seed)
    n = spectral.size
    ones = np.ones(n)
    mass_preserving = bool(np.abs(spectral.matrix @ ones).max() <= zero_threshold(spectral.matrix))
    checks = []
    f_pos = rng.random((n, sample_count))
    f_sub = rng.random((n, sample_count)) * 2 - 1
    for t in t_grid:
        S = semigroup_matrix(spectral, t)
        g = (S @ f_pos).real
        k = np.unravel_index(np.argmin(g), g.shape)
        checks.append(CheckResult("positivity", bool(g.min() >= -tol), float(g.min()), tol,
                                  None if g.min() >= -tol else f_pos[:, k[1]]))
        g = (S @ f_sub).real
        k = np.unravel_index(np.argmax(g), g.shape)
        checks.append(CheckResult("sub_markov", bool(g.max() <= 1 + tol), float(g.max()), tol,
                                  None if g.max() <= 1 + tol else f_sub[:, k[1]]))
        if mass_preserving:
            err = float(np.abs(S @ ones - 1).max())
            checks.append(CheckResult("mass_preservation", err <= 1e-10, err, 1e-10))
        for s in t_grid:
            err = float(np.abs(semigroup_matrix(spectral, t + s) - S @ semigroup_matrix(spectral, s)).max())
            checks.append(CheckResult("semigroup_law", err <= tol, err, tol, (t, s)))
    return MarkovReport(tuple(checks))


def contraction_residuals(spectral, spec, M, t_grid, ks=(0, 1, 2), samples=20, seed=0):
    """``max(||e^{-tP} f||_{W^{k,2}} - ||f||_{W^{k,2}})`` over random ``f`` on ``F``."""
    D = discretize(spec, M)
    rng = np.random.default_rng(seed)
    worst = {k: -np.inf for k in ks}
    for _ in range(samples):
        f = LCFunction(spec.domain, M, rng.standard_normal(D.size))
        for t in t_grid:
            g = semigroup_apply(spectral, t, f)
            for k in ks:
                worst[k] = max(worst[k], sobolev_norm(g, spec, None, k, 2, M) - sobolev_norm(f, spec, None, k, 2, M))
    return worst


@dataclass(frozen=True)
class InvariantMeasure:
    vector: np.ndarray
    is_measure: bool
    flag: str = "OK"


def invariant_distribution(spectral, generator=None, tol=1e-8):
    """Left-kernel vector of the operator matrix, normalised to a probability when possible.

    ``generator`` defaults to ``-spectral.matrix``.  When the constant
    function is not preserved, or the projected vector has mixed signs, the
    left-kernel vector is returned with the ``NOT_A_MEASURE`` flag.
    """
    Q = -np.asarray(spectral.matrix) if generator is None else np.asarray(generator)
    thr = zero_threshold(Q)
    _, s, Vh = np.linalg.svd(Q.T)
    null = Vh[s <= thr].conj().T
    if null.shape[1] == 0:
        raise NoInvariantVectorError("operator has no left kernel")
    ones = np.ones(Q.shape[0])
    mass_preserving = bool(np.abs(Q @ ones).max() <= thr)
    pi = null @ (null.conj().T @ ones)
    if not mass_preserving or np.linalg.norm(pi) <= tol:
        v = null[:, 0]
        v = v / v[np.argmax(np.abs(v))]
        return InvariantMeasure(v, False, "NOT_A_MEASURE")
    pi = pi.real if _is_real(pi) else pi
    if np.iscomplexobj(pi) or pi.min() < -tol:
        return InvariantMeasure(pi, False, "NOT_A_MEASURE")
    pi = np.clip(pi, 0, None)
    return InvariantMeasure(pi / pi.sum(), True)


def detailed_balance_residual(spec, M, i):
    """``||C D - D C^*||`` with ``D`` the ``L_i`` eigenvalues and ``C = D T^* diag(b^i) T``.

    ``T`` is the tensor eigenbasis, so ``C`` is the first-order part of
    coordinate ``i`` written in that basis.
    """
    form = as_divergence_form(spec)
    D = discretize(spec, M)
    T = basis_matrix(tensor_basis(spec, spec.domain, M), D.cell_measure)
    lam = np.real(np.einsum("ij,ij->j", T.conj(), D.global_component(i) @ T))
    b = D.coefficient_on_grid(form.b[i], form.level)
    Bm = T.conj().T @ (b[:, None] * T)
    C = lam[:, None] * Bm
    return float(np.abs(C * lam[None, :] - lam[:, None] * C.conj().T).max())


# --- path sampling -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathSample:
    """One trajectory: state ``states[k]`` holds on ``[times[k], times[k+1])``.

    ``times[0] = 0``; the state ``-1`` is the cemetery of a killed path.
    """

    seed: int
    times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t):
        return int(self.states[np.searchsorted(self.times, t, side="right") - 1])


def check_generator(Q, tol=1e-10):
    Q = np.asarray(Q)
    if np.iscomplexobj(Q):
        if np.abs(Q.imag).max() > tol:
            raise NotAGeneratorError("generator has complex entries")
        Q = Q.real
    off = Q - np.diag(np.diag(Q))
    if off.min() < -tol:
        raise NotAGeneratorError(f"negative off-diagonal rate {off.min():.3e}")
    if Q.sum(axis=1).max() > tol:
        raise NotAGeneratorError(f"positive row sum {Q.sum(axis=1).max():.3e}")
    return np.clip(off, 0, None)


def sample_paths(generator, x0, T, n_paths, rng_seed):
    """Jump-chain sampling of the chain with generator ``Q`` started in state ``x0``.

    Holding times are exponential with rate ``-Q[x, x]``; the next state is
    ``y`` with probability ``Q[x, y] / (-Q[x, x])`` or the cemetery with the
    deficit of the row sum.  All paths advance together from one seeded
    generator, so the output is a pure function of the arguments.
    """
    rates = check_generator(generator)
    n = rates.shape[0]
    total = -np.diag(np.asarray(generator).real)
    total = np.maximum(total, rates.sum(axis=1))
    jump = np.zeros((n, n + 1))
    has = total > 0
    jump[has, :n] = rates[has] / total[has, None]
    jump[has, n] = np.clip(1 - jump[has, :n].sum(axis=1), 0, None)
    cdf = np.cumsum(jump, axis=1)
    cdf[has, -1] = 1.0

    rng = np.random.default_rng(rng_seed)
    state = np.full(n_paths, int(x0))
    clock = np.zeros(n_paths)
    times = [[0.0] for _ in range(n_paths)]
    states = [[int(x0)] for _ in range(n_paths)]
    active = np.flatnonzero(total[state] > 0)
    while active.size:
        hold = rng.exponential(1.0, active.size) / total[state[active]]
        clock[active] += hold
        u = rng.random(active.size)
        done = clock[active] >= T
        moving = active[~done]
        nxt = np.minimum((cdf[state[moving]] <= u[~done, None]).sum(axis=1), n)
        for k, s in zip(moving.tolist(), nxt.tolist()):
            times[k].append(float(clock[k]))
            states[k].append(s if s < n else -1)
        state[moving] = np.where(nxt < n, nxt, -1)
        alive = moving[state[moving] >= 0]
        active = alive[total[state[alive]] > 0]
    return [PathSample(rng_seed, np.array(tk), np.array(sk), float(T)) for tk, sk in zip(times, states)]


def empirical_law(paths, t, n_states):
    """Occupation frequencies at time ``t``; the last entry is the cemetery."""
    counts = np.zeros(n_states + 1)
    for path in paths:
        s = path.state_at(t)
        counts[s if s >= 0 else n_states] += 1
    return counts / len(paths)


def law_tv_distance(generator, paths, x0, t):
    """Total-variation distance between the empirical law and the ``exp(tQ)`` row."""
    Q = np.asarray(generator).real
    row = sla.expm(t * Q)[int(x0)]
    exact = np.append(row, max(0.0, 1 - row.sum()))
    emp = empirical_law(paths, t, Q.shape[0])
    return 0.5 * float(np.abs(emp - exact).sum())


def paths_to_rows(paths):
    """``(path_id, jump_time, state)`` event rows in deterministic order."""
    rows = []
    for k, path in enumerate(paths):
        rows.extend((k, float(t), int(s)) for t, s in zip(path.times, path.states))
    return rows
