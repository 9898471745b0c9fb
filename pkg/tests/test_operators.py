from fractions import Fraction

import numpy as np
import pytest

from conftest import make_spec, polynomial, random_elliptic_form, region
from padic_elliptic.errors import GeometryError, LevelError
from padic_elliptic.function_space import (
    LCFunction,
    WaveletLabel,
    basis_matrix,
    graph_eigenfunctions,
    tensor_basis,
)
from padic_elliptic.kernel import DivergenceForm, discretize
from padic_elliptic.operators import (
    assemble_component_matrix,
    assemble_divergence_operator,
    assemble_sub_laplacian,
    check_ellipticity,
    commutator_residual,
    component_eigenvalue_formula,
    component_eigenvalue_oracle,
    divergence_parts,
    eigenvalue_oracle,
    leibniz_residual,
    normality_residual,
)
from padic_elliptic.padic_core import Ball


def test_component_matrix_z2_level1(z2):
    A = assemble_component_matrix(z2, 0, None, 1)
    assert np.allclose(A, [[0.5, -0.5], [-0.5, 0.5]])
    assert np.linalg.eigvalsh(A) == pytest.approx([0.0, 1.0])


def test_component_matrix_exactly_symmetric(plane3):
    for i in range(2):
        A = assemble_component_matrix(plane3, i, None, 3)
        assert np.abs(A - A.T).max() == 0.0
        assert np.abs(A @ np.ones(len(A))).max() < 1e-12


def test_component_matrix_level_too_small(two_disc):
    with pytest.raises(LevelError):
        assemble_component_matrix(two_disc, 0, None, 1)


def test_formula_values(z2):
    assert component_eigenvalue_formula(0, 0, 1, z2, 0) == pytest.approx(1.0)
    assert component_eigenvalue_formula(1, 0, 1, z2, 0) == pytest.approx(7.0)


def test_formula_weight_term():
    # two level-0 discs of Q_3 (Z_3 and 1/3 + Z_3) with w = 5: w mu = 5
    spec = make_spec(3, [[(0, 0), (0, Fraction(1, 3))]], ["1/2"], weights=[[[0, 5], [5, 0]]])
    assert component_eigenvalue_formula(0, 0, 1, spec, 0, a=0) == pytest.approx(6.0)


def test_formula_rejects_ball_outside_cover(two_disc):
    with pytest.raises(GeometryError):
        component_eigenvalue_formula(1, 0, 1, two_disc, 0)


def test_oracle_values(z2, two_disc):
    assert component_eigenvalue_oracle(0, 0, 1, z2, 0, 2) == pytest.approx(1.0, abs=1e-14)
    assert component_eigenvalue_oracle(1, 0, 1, z2, 0, 3) == pytest.approx(1.5, abs=1e-14)
    g = graph_eigenfunctions(list(two_disc.cover.discs[0]), two_disc.weights[0])
    assert eigenvalue_oracle(two_disc, g[1], 3) == pytest.approx(3.0, abs=1e-14)


def test_oracle_hand_formula_alpha(z2):
    # within-ball term p^{n(alpha-1)} plus (1 - 1/p) sum_{k<n} p^{k(alpha-1)}
    spec = make_spec(3, [[(0, 0)]], [2])
    for n in range(3):
        expect = 3.0 ** n + (2 / 3) * sum(3.0 ** k for k in range(n))
        assert component_eigenvalue_oracle(n, 0, 2, spec, 0, 3) == pytest.approx(expect, rel=1e-13)


def test_oracle_rejects_non_eigenvector(z2):
    from padic_elliptic.errors import NotAnEigenvectorError
    from padic_elliptic.function_space import GraphEigenfunction

    fake = GraphEigenfunction(0, (Ball(2, 1, 0), Ball(2, 1, 1)), np.array([1.0, 0.0]), 0.0, 0)
    with pytest.raises(NotAnEigenvectorError) as err:
        eigenvalue_oracle(z2, fake, 2)
    assert err.value.residual > 0.1


def test_sub_laplacian_trivial_cases(z2, plane):
    A = assemble_sub_laplacian(z2, None, 3)
    assert np.array_equal(A, assemble_component_matrix(z2, 0, None, 3))
    const = assemble_sub_laplacian(plane, None, 3, polynomial(2, {(0, 0): 2.5}))
    assert np.array_equal(const, 2.5 * np.eye(64))


def test_sub_laplacian_product_eigenvalue(plane):
    M = 3
    P = polynomial(2, {(1, 1): 1.0})
    A = assemble_sub_laplacian(plane, None, M, P)
    T = basis_matrix(tensor_basis(plane, plane.domain, M), 2.0 ** (-2 * M))
    D = discretize(plane, M)
    for k in range(T.shape[1]):
        v = T[:, k]
        l1 = np.vdot(v, D.apply(0, v)).real
        l2 = np.vdot(v, D.apply(1, v)).real
        assert np.abs(A @ v - l1 * l2 * v).max() < 1e-12


def test_sub_laplacian_on_subregion_uses_induced_operator(plane):
    U = region(2, ((1, 1), (1, 0)))
    A = assemble_sub_laplacian(plane, U, 3, polynomial(2, {(1, 0): 1.0}))
    A1 = assemble_component_matrix(plane, 0, U, 3)
    assert np.allclose(A, np.kron(A1, np.eye(4)))
    # only the half 1 + 2Z_2 of pi_1(F) is integrated over
    assert A1.shape == (4, 4)


def test_divergence_identity_coefficients_gives_square(z2):
    spec = z2.with_form(DivergenceForm.constant(z2, [[1.0]]))
    A = assemble_divergence_operator(spec, None, 3)
    L = assemble_component_matrix(z2, 0, None, 3)
    assert np.allclose(A, L @ L, atol=1e-14)


def test_divergence_constant_c(plane):
    spec = plane.with_form(DivergenceForm.constant(plane, np.zeros((2, 2)), None, 0.7))
    assert np.array_equal(assemble_divergence_operator(spec, None, 3), 0.7 * np.eye(64))


def test_divergence_p2_symmetric_psd(plane3):
    rng = np.random.default_rng(5)
    spec = plane3.with_form(random_elliptic_form(plane3, 2, 0.3, rng))
    P2, _, _ = divergence_parts(spec, 3)
    assert np.abs(P2 - P2.T).max() <= 1e-12 * max(1, np.abs(P2).max())
    assert np.linalg.eigvalsh((P2 + P2.T) / 2).min() >= -1e-10 * np.abs(P2).max()


def test_divergence_operator_on_closure(z2):
    spec = z2.with_form(DivergenceForm.constant(z2, [[1.0]]))
    U = region(2, ((1, 0),))
    # closure of 2Z_2 inside Z_2 is all of Z_2
    assert assemble_divergence_operator(spec, U, 3).shape == (8, 8)


def test_divergence_asymmetric_a_rejected(plane):
    a = np.array([[1.0, 0.2], [0.3, 1.0]])[:, :, None]
    with pytest.raises(GeometryError):
        DivergenceForm(0, a)
    with pytest.raises(GeometryError):
        DivergenceForm.constant(plane, [[1.0, 0.2], [0.3, 1.0]])


def test_check_ellipticity():
    I2 = np.eye(2)[:, :, None].repeat(3, axis=2)
    assert check_ellipticity(I2) == pytest.approx(1.0)
    assert check_ellipticity(np.diag([2.0, 3.0])[:, :, None]) == pytest.approx(2.0)
    bad = I2.copy()
    bad[:, :, 1] = [[0.5, 1.0], [1.0, 0.5]]
    assert check_ellipticity(bad) is None


def test_commutator_and_leibniz(plane3):
    rng = np.random.default_rng(0)
    F = plane3.domain
    M = 3
    n = 27 * 27
    f = LCFunction(F, M, rng.normal(size=n))
    assert commutator_residual(plane3, 0, 1, f, M) <= 1e-12 * f.norm()
    # constants are annihilated up to row-sum round-off
    assert commutator_residual(plane3, 0, 1, LCFunction.constant(F, 1), M) <= 1e-14
    u, phi = LCFunction(F, M, rng.normal(size=n)), LCFunction(F, M, rng.normal(size=n))
    for i in range(2):
        assert leibniz_residual(plane3, i, u, phi, M) <= 1e-12
        assert leibniz_residual(plane3, i, u, LCFunction.constant(F, 1), M) == pytest.approx(0, abs=1e-13)


def test_level_consistency(plane):
    # the level-M operator equals the level-(M+1) operator on level-M functions
    M = 2
    D2, D3 = discretize(plane, M), discretize(plane, M + 1)
    rng = np.random.default_rng(1)
    f = LCFunction(plane.domain, M, rng.normal(size=D2.size))
    for i in range(2):
        coarse = LCFunction(plane.domain, M, D2.apply(i, D2.to_grid(f))).refine(M + 1).values
        fine = D3.apply(i, D3.to_grid(f))
        assert np.abs(coarse - fine).max() <= 1e-12


def test_normality_constant_b_is_normal(plane):
    spec = plane.with_form(DivergenceForm.constant(plane, np.eye(2), [0.5, 2.0]))
    assert normality_residual(spec, 2) <= 1e-12


def test_wavelet_label_eigenvalue_mixed_cover():
    spec = make_spec(2, [[(1, 0), (2, 1), (2, 3)]], [2], weights=[[[0, 1, 0], [1, 0, 5], [0, 5, 0]]])
    label = WaveletLabel(0, Ball(2, 2, 1), 1, Ball(2, 2, 1))
    lam = eigenvalue_oracle(spec, label, 4)
    # within-ball p^{n(a-1)} = 4 plus graph mass 1/2 + 5/4
    assert lam == pytest.approx(4 + 0.5 + 1.25, rel=1e-13)
