"""Poly-TensorSketch: a low-rank factored estimate of ``p(UV^T)`` applied entrywise.

For a polynomial ``p(x) = sum_j c_j x^j`` the operator is
``Gamma = sum_j c_j T_U^(j) T_V^(j)^T`` where ``T^(j)`` are degree-j
TensorSketches of the rows sharing one family set. It is never formed as an
``n1 x n2`` matrix except through :meth:`FactoredOperator.materialize`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numkit import as_matrix, as_vector, fft_forward, fft_inverse
from .sketch import SketchFamilySet, count_sketch, tensor_sketch_error_bound

MATERIALIZE_LIMIT = 10**8


@dataclass(frozen=True)
class Term:
    coeff: float
    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True, eq=False)
class FactoredOperator:
    """``sum_j coeff_j * left_j @ right_j.T`` kept in factored form."""

    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ValueError("operator needs at least one term")
        n1, n2 = self.terms[0].left.shape[0], self.terms[0].right.shape[0]
        for t in self.terms:
            if t.left.shape[1] != t.right.shape[1]:
                raise DimensionError("left/right sketch widths differ")
            if t.left.shape[0] != n1 or t.right.shape[0] != n2:
                raise DimensionError("terms disagree on operator shape")

    @property
    def shape(self):
        return self.terms[0].left.shape[0], self.terms[0].right.shape[0]

    @property
    def coeffs(self):
        return np.array([t.coeff for t in self.terms])

    @property
    def degree(self):
        return len(self.terms) - 1

    def apply(self, x):
        """``Gamma @ x`` in O(n m r); ``x`` may be a vector or an n2 x p block."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.shape[1]:
            raise DimensionError(f"operand has length {x.shape[0]}, operator has {self.shape[1]} columns")
        out = np.zeros((self.shape[0],) + x.shape[1:])
        for t in self.terms:
            if t.coeff != 0.0:
                out += t.coeff * (t.left @ (t.right.T @ x))
        return out

    def apply_transpose(self, x):
        """``Gamma.T @ x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.shape[0]:
            raise DimensionError(f"operand has length {x.shape[0]}, operator has {self.shape[0]} rows")
        out = np.zeros((self.shape[1],) + x.shape[1:])
        for t in self.terms:
            if t.coeff != 0.0:
                out += t.coeff * (t.right @ (t.left.T @ x))
        return out

    def entries(self, rows, cols):
        """Selected entries ``Gamma[rows[i], cols[i]]`` without forming Gamma."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        out = np.zeros(len(rows))
        for t in self.terms:
            out += t.coeff * np.einsum("ij,ij->i", t.left[rows], t.right[cols])
        return out

    def materialize(self):
        n1, n2 = self.shape
        if n1 * n2 > MATERIALIZE_LIMIT:
            raise MemoryError(f"refusing to materialize a {n1} x {n2} operator")
        out = np.zeros((n1, n2))
        for t in self.terms:
            out += t.coeff * (t.left @ t.right.T)
        return out


def poly_tensor_sketch(U, V, coeffs, m, seed=0):
    """Build the factored operator for monomial coefficients ``coeffs``.

    The degree-j sketches come from the recursion
    ``T^(j) = IFFT(FFT(C^(j)) * FFT(T^(j-1)))``, keeping the running product
    in the Fourier domain; the same families are applied to ``U`` and ``V``.
    """
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    c = as_vector(coeffs, "coeffs")
    if U.shape[1] != V.shape[1]:
        raise DimensionError(f"U has {U.shape[1]} columns, V has {V.shape[1]}")
    if len(c) < 1:
        raise ValueError("need at least one coefficient (degree r >= 0)")
    if m < 1:
        raise ValueError("sketch dimension m must be >= 1")
    r = len(c) - 1
    families = SketchFamilySet.draw(seed, U.shape[1], m, r)

    terms = [Term(float(c[0]), np.ones((U.shape[0], 1)), np.ones((V.shape[0], 1)))]
    if r >= 1:
        tu = count_sketch(U, families[0])
        tv = count_sketch(V, families[0])
        terms.append(Term(float(c[1]), tu, tv))
        fu, fv = fft_forward(tu), fft_forward(tv)
    for j in range(2, r + 1):
        fu = fu * fft_forward(count_sketch(U, families[j - 1]))
        fv = fv * fft_forward(count_sketch(V, families[j - 1]))
        terms.append(Term(float(c[j]), fft_inverse(fu).real, fft_inverse(fv).real))
    return FactoredOperator(tuple(terms))


def apply(op, x):
    return op.apply(x)


def materialize(op):
    return op.materialize()


def pts_error_bound(U, V, coeffs, m, poly_sup_err):
    """Expected squared Frobenius error bound for a polynomial of sup-error ``eps``.

    ``2 n1 n2 eps^2 + sum_{j>=1} 2 r c_j^2 (2+3^j) S_j(U) S_j(V) / m`` with
    ``S_j(U) = sum_i ||u_i||^(2j)``.
    """
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    c = as_vector(coeffs, "coeffs")
    r = len(c) - 1
    total = 2.0 * U.shape[0] * V.shape[0] * poly_sup_err**2
    for j in range(1, r + 1):
        if c[j] != 0.0:
            total += 2.0 * r * c[j] ** 2 * tensor_sketch_error_bound(U, V, j, m)
    return total
