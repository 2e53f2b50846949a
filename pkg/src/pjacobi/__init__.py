"""Orthogonal polynomials for the weight (1-x^2)^beta (t^2-x^2)^alpha h(x) on (-1, 1).

Exact finite-n data (moments, recurrence coefficients, Hankel determinants) at
arbitrary precision, the Painlevé III sigma-function of the hard-edge double
scaling limit, and the asymptotic formulas built from it.
"""
from .highprec import DomainError, PjacobiError, PrecisionContext, PrecisionError
from .weight import WeightSpec, make_h
from .piii import PIIIParams, solve_sigma

__all__ = ["DomainError", "PjacobiError", "PrecisionContext", "PrecisionError", "WeightSpec", "make_h",
           "PIIIParams", "solve_sigma"]
__version__ = "0.1.0"
