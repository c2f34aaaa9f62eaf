"""bvcalc: exact symbolic-numeric engine for finite-dimensional BV calculus."""

from .scalars import Scalar
from .algebra import (Generator, GradedPolynomial, Monomial, Signature,
                      SignatureMismatch, ghost_degree)
from .grammar import ParseError, parse_polynomial
from .chart import (Chart, ChartError, DarbouxChart, Semidensity,
                    bv_laplacian, delta_on_semidensity, lie_derivative,
                    poisson_bracket)

__all__ = [
    "Chart", "ChartError", "DarbouxChart", "Generator", "GradedPolynomial",
    "Monomial", "ParseError", "Scalar", "Semidensity", "Signature",
    "SignatureMismatch", "bv_laplacian", "delta_on_semidensity",
    "ghost_degree", "lie_derivative", "parse_polynomial", "poisson_bracket",
]

__version__ = "0.1.0"
