"""Sub-Laplacians and divergence-form operators on p-adic polydiscs.

Exact ball geometry, truncated eigenbases (Kozyrev wavelets and graph
eigenfunctions), operator assembly, boundary conditions, weak Poisson
solves, heat kernels, Green functions and Markov path sampling.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .padic_core import (  # noqa: E402,F401
    Ball,
    Cover,
    PAdicScalar,
    PolyDisc,
    Region,
    ball_contains,
    ball_distance,
    haar_measure,
    partition,
)
from .kernel import DivergenceForm, OperatorSpec, PolynomialForm, discretize  # noqa: E402,F401
from .function_space import (  # noqa: E402,F401
    LCFunction,
    WaveletLabel,
    graph_eigenfunctions,
    inner_product,
    kozyrev_wavelet,
    tensor_basis,
)
