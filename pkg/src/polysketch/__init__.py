"""Poly-TensorSketch: linear-time sketches of entrywise matrix functions."""

from .apps import rbf_factorize, rbf_kernel, sinkhorn
from .coeffs import build_regularizer, moments_chebyshev, moments_full, solve_ridge, solve_ridge_chebyshev
from .coreset import coreset_coefficients, greedy_k_center
from .polyts import FactoredOperator, poly_tensor_sketch
from .sketch import HashFamily, SketchFamilySet, count_sketch, tensor_sketch

__version__ = "0.1.0"

__all__ = [
    "FactoredOperator",
    "HashFamily",
    "SketchFamilySet",
    "build_regularizer",
    "coreset_coefficients",
    "count_sketch",
    "greedy_k_center",
    "moments_chebyshev",
    "moments_full",
    "poly_tensor_sketch",
    "rbf_factorize",
    "rbf_kernel",
    "sinkhorn",
    "solve_ridge",
    "solve_ridge_chebyshev",
    "tensor_sketch",
]
