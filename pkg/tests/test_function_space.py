from fractions import Fraction

import numpy as np
import pytest

from conftest import make_spec, region
from padic_elliptic.errors import GeometryError, LevelError
from padic_elliptic.function_space import (
    LCFunction,
    WaveletLabel,
    basis_matrix,
    evaluate,
    graph_eigenfunctions,
    inner_product,
    kozyrev_wavelet,
    maximal_balls,
    tensor_basis,
    wavelet_phases,
)
from padic_elliptic.padic_core import Ball


def test_refine_and_inner_product():
    U = region(2, ((0, 0),))
    f = LCFunction(U, 1, [1.0, 3.0])
    g = f.refine(3)
    assert g.values.tolist() == [1, 3] * 4
    assert inner_product(f, g) == pytest.approx(5.0)
    assert evaluate(f, Ball(2, 4, 7)) == 3.0
    with pytest.raises(LevelError):
        g.refine(2)


def test_wavelet_values_p2():
    label = WaveletLabel(0, Ball(2, 0, 0), 1, Ball(2, 0, 0))
    psi = kozyrev_wavelet(label, 1)
    # chi(xi / 2) is +1 on 2Z_2 and -1 on 1 + 2Z_2
    assert np.allclose(psi.values, [1, -1])
    assert psi.norm() == pytest.approx(1.0)


def test_wavelet_phases_exact():
    label = WaveletLabel(0, Ball(3, 1, 1), 2, Ball(3, 0, 0))
    phases = wavelet_phases(label)
    assert [b.center for b, _ in phases] == [1, 4, 7]
    # centers scaled by 2/9: 2/9, 8/9, 14/9 -> fractional parts 2/9, 8/9, 5/9
    assert [t for _, t in phases] == [Fraction(2, 9), Fraction(8, 9), Fraction(5, 9)]


def test_wavelet_label_checks():
    with pytest.raises(GeometryError):
        WaveletLabel(0, Ball(3, 1, 1), 3, Ball(3, 0, 0))
    with pytest.raises(GeometryError):
        WaveletLabel(0, Ball(3, 0, 0), 1, Ball(3, 1, 0))
    label = WaveletLabel(0, Ball(2, 2, 0), 1, Ball(2, 0, 0))
    with pytest.raises(LevelError):
        kozyrev_wavelet(label, 2)


def test_graph_eigenfunctions_two_discs():
    vs = [Ball(2, 1, 0), Ball(2, 1, 1)]
    g = graph_eigenfunctions(vs, [[0, 3], [3, 0]])
    assert [x.eigenvalue for x in g] == pytest.approx([0.0, 3.0])
    # unit L^2 norm with disc measures 1/2
    for x in g:
        assert np.sum(x.coefficients**2 * 0.5) == pytest.approx(1.0)


def test_maximal_balls_merges_full_families():
    cells = Ball(2, 1, 0).subballs(3) + [Ball(2, 3, 1)]
    assert maximal_balls(cells, 0) == [Ball(2, 1, 0), Ball(2, 3, 1)]


def test_tensor_basis_is_orthonormal(plane3):
    basis = tensor_basis(plane3, plane3.domain, 2)
    T = basis_matrix(basis, float(Fraction(3) ** -4))
    assert T.shape == (81, 81)
    assert np.abs(T.conj().T @ T - np.eye(81)).max() < 1e-12


def test_tensor_basis_subregion_and_errors(plane):
    U = region(2, ((0, 0), (1, 0)))
    basis = tensor_basis(plane, U, 3)
    assert len(basis) == 8 * 4
    with pytest.raises(LevelError):
        tensor_basis(plane, U, 1)
    L_shape = region(2, ((1, 0), (1, 0)), ((1, 1), (1, 1)))
    with pytest.raises(GeometryError):
        tensor_basis(plane, L_shape, 3)


def test_basis_labels(z2):
    basis = tensor_basis(z2, z2.domain, 2)
    assert [b.label for b in basis] == [
        "graph(i=1,k=0)", "psi(i=1,B_0(0),j=1)", "psi(i=1,B_1(0),j=1)", "psi(i=1,B_1(1),j=1)",
    ]
    assert {b.structure for b in basis} == {"graph", "wavelet"}


def test_mixed_level_cover_basis_complete():
    spec = make_spec(2, [[(1, 0), (2, 1), (2, 3)]], [2], weights=[[[0, 1, 0], [1, 0, 5], [0, 5, 0]]])
    basis = tensor_basis(spec, spec.domain, 4)
    T = basis_matrix(basis, 2.0**-4)
    assert T.shape == (16, 16)
    assert np.abs(T.T.conj() @ T - np.eye(16)).max() < 1e-12
