"""Stationary determinantal processes on Z^d defined by a symbol f: T^d -> [0, 1].

Modules: symbol (parsing and builtins), spectral (coefficients, means, outer
series), kernel (determinants, pattern laws), sampling, entropy, order_phase,
ust_oracle and cli.
"""
from .symbol import SymbolSpec, builtin_symbol, complement, parse_symbol
from .spectral import CoeffTable, QuadParams, fourier_coeffs, means, outer_coeffs
from .kernel import CylinderEvent, joint_pmf, prob_cylinder, prob_ones

__version__ = "0.1.0"

__all__ = [
    "SymbolSpec", "builtin_symbol", "complement", "parse_symbol",
    "CoeffTable", "QuadParams", "fourier_coeffs", "means", "outer_coeffs",
    "CylinderEvent", "joint_pmf", "prob_cylinder", "prob_ones",
]
