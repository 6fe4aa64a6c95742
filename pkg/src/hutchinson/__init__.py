"""Minimal Hutchinson-invariant sets of first-order linear differential operators.

The operator ``T = Q(z) d/dz + P(z)`` is given by two complex polynomials.
Submodules cover polynomial arithmetic (:mod:`poly`), the rational field
``R = Q/P`` (:mod:`field`), curve tracing (:mod:`trace`), the two-sided grid
approximation of the minimal set (:mod:`minset`), boundary classification
(:mod:`classify`), closed-form reference cases (:mod:`cases`) and the command
line (:mod:`cli`).
"""

from .errors import (BothZero, HutchinsonError, NumericalError, ParseError, PreconditionError,
                     VerificationFailure)
from .field import OperatorSpec, Regime, RegimeTag, analyze, bounds, regime
from .minset import MinSetResult, compute_minset
from .poly import Polynomial, roots

__version__ = "0.1.0"

__all__ = [
    "BothZero", "HutchinsonError", "MinSetResult", "NumericalError", "OperatorSpec", "ParseError",
    "Polynomial", "PreconditionError", "Regime", "RegimeTag", "VerificationFailure", "analyze",
    "bounds", "compute_minset", "regime", "roots",
]
