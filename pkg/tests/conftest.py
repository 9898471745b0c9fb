import sys
from fractions import Fraction

import numpy as np
import pytest

from padic_elliptic.kernel import DivergenceForm, OperatorSpec, PolynomialForm
from padic_elliptic.padic_core import Ball, Cover, PolyDisc, Region


def ball(p, level, center=0):
    return Ball(p, level, Fraction(center))


def make_spec(p, discs, alphas, weights=None, form=None):
    """``discs`` is a per-coordinate list of ``(level, center)`` pairs."""
    cover = Cover(tuple(tuple(ball(p, lvl, c) for lvl, c in coord) for coord in discs))
    return OperatorSpec(cover, tuple(alphas), weights, form)


def region(p, *polydiscs):
    """Each polydisc is a tuple of ``(level, center)`` pairs."""
    return Region(tuple(PolyDisc(tuple(ball(p, lvl, c) for lvl, c in q)) for q in polydiscs))


def random_elliptic_form(spec, level, theta, rng, lower_order=False):
    """Per-cell coefficients with ``A(x) = G G^T + theta I``."""
    from padic_elliptic.padic_core import partition

    n = len(partition(spec.domain, level))
    d = spec.d
    a = np.empty((d, d, n))
    for k in range(n):
        G = rng.normal(size=(d, d))
        a[:, :, k] = G @ G.T + theta * np.eye(d)
    b = rng.normal(size=(d, n)) if lower_order else None
    c = rng.uniform(-0.5, 1.0, size=n) if lower_order else None
    return DivergenceForm(level, a, b, c)


@pytest.fixture
def z2():
    """Z_2, one cover disc, alpha = 1, P = X_1."""
    return make_spec(2, [[(0, 0)]], [1])


@pytest.fixture
def two_disc():
    """pi(F) = B_1(0) + B_1(1) in Q_2 with graph weight 3."""
    return make_spec(2, [[(1, 0), (1, 1)]], [1], weights=[[[0, 3], [3, 0]]])


@pytest.fixture
def plane():
    """d = 2, p = 2: Z_2 x (B_1(0) + B_1(1)) with weight 2 in the second coordinate."""
    return make_spec(2, [[(0, 0)], [(1, 0), (1, 1)]], [1, "1/2"],
                     weights=[[[0]], [[0, 2], [2, 0]]])


@pytest.fixture
def plane3():
    """d = 2, p = 3, three weighted discs in the first coordinate."""
    return make_spec(3, [[(1, 0), (1, 1), (1, 2)], [(0, 0)]], ["1/2", 2],
                     weights=[[[0, 1, 2], [1, 0, "1/2"], [2, "1/2", 0]], [[0]]])


def polynomial(d, terms):
    return PolynomialForm({tuple(k): g for k, g in terms.items()})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.REPORT):
        terminalreporter.write_line(mod.REPORT[n])
