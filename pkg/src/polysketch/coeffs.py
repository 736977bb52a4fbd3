"""Polynomial coefficients that balance fit quality against sketch variance.

The fitted polynomial minimizes ``||X c - f||^2 + ||W c||^2`` where the rows
of ``X`` are powers (or Chebyshev values) of the entries of ``U V^T`` and
``W`` is a diagonal penalty that grows with the TensorSketch variance of each
degree. ``X`` itself is never built: :class:`MomentSystem` holds the Gram
matrix, the right-hand side and ``sum f(A)^2``, accumulated block by block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DimensionError, NumericalRangeError
from .numkit import as_matrix, as_vector, min_eigenvalue_sym, solve_spd
from .sketch import row_norm_power_sum

# entries of U V^T materialized at once while accumulating moments
BLOCK_ENTRIES = 1 << 18
MONOMIAL_COND_LIMIT = 1e12
INTERVAL_SLACK = 1e-12


@dataclass(frozen=True)
class Regularizer:
    diag: np.ndarray

    @property
    def squared(self):
        return self.diag**2


@dataclass(frozen=True)
class MomentSystem:
    gram: np.ndarray
    rhs: np.ndarray
    f_sq_sum: float
    basis: str = "monomial"
    interval_a: float | None = None
    n_effective: float = 0.0

    @property
    def degree(self):
        return len(self.rhs) - 1


@dataclass
class CoeffSolution:
    monomial_coeffs: np.ndarray
    basis_coeffs: np.ndarray
    objective_value: float
    solver: str
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Regularizer and moments
# ---------------------------------------------------------------------------


def build_regularizer(U, V, m, r):
    """Diagonal penalty: entry ``i`` is ``sqrt(r (2+3^i) S_i(U) S_i(V) / m)``, entry 0 is 0."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if r < 0:
        raise ValueError("r must be >= 0")
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    diag = np.zeros(r + 1)
    for i in range(1, r + 1):
        diag[i] = np.sqrt(r * (2.0 + 3.0**i) * row_norm_power_sum(U, i) * row_norm_power_sum(V, i) / m)
    return Regularizer(diag)


def _evaluate(f, A):
    out = np.asarray(f(A), dtype=np.float64)
    if out.shape != A.shape:
        out = np.broadcast_to(out, A.shape)
    return out


def chebyshev_values(y, r):
    """Stack ``t_0(y) .. t_r(y)`` along a new leading axis."""
    y = np.asarray(y, dtype=np.float64)
    T = np.empty((r + 1,) + y.shape)
    T[0] = 1.0
    if r >= 1:
        T[1] = y
    for j in range(2, r + 1):
        T[j] = 2.0 * y * T[j - 1] - T[j - 2]
    return T


def _accumulate(U, V, f, r, basis, a=None, row_weights=None):
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    if U.shape[1] != V.shape[1]:
        raise DimensionError(f"U has {U.shape[1]} columns, V has {V.shape[1]}")
    if r < 0:
        raise ValueError("r must be >= 0")
    n1, n2 = U.shape[0], V.shape[0]
    weights = np.ones(n1) if row_weights is None else as_vector(row_weights, "row_weights")
    step = max(1, BLOCK_ENTRIES // n2)

    gram = np.zeros((r + 1, r + 1))
    rhs = np.zeros(r + 1)
    power_sums = np.zeros(2 * r + 1)
    f_sq = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, n1, step):
            A = U[start : start + step] @ V.T
            w = weights[start : start + step, None]
            F = _evaluate(f, A)
            wF = w * F
            f_sq += float(np.sum(wF * F))
            if basis == "monomial":
                P = np.broadcast_to(w, A.shape).copy()
                for p in range(2 * r + 1):
                    power_sums[p] += np.sum(P)
                    if p <= r:
                        rhs[p] += np.sum(P * F)
                    P *= A
            else:
                Y = A / a
                if np.max(np.abs(Y), initial=0.0) > 1.0 + INTERVAL_SLACK:
                    raise ValueError(f"entries of U V^T leave the interval [-{a}, {a}]")
                T = chebyshev_values(np.clip(Y, -1.0, 1.0), r).reshape(r + 1, -1)
                Tw = T * np.broadcast_to(w, A.shape).reshape(-1)
                gram += Tw @ T.T
                rhs += Tw @ F.reshape(-1)
    if basis == "monomial":
        idx = np.arange(r + 1)
        gram = power_sums[idx[:, None] + idx[None, :]]
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(rhs)) and np.isfinite(f_sq)):
        raise NumericalRangeError(
            "moment accumulation overflowed; use the Chebyshev basis (moments_chebyshev)"
        )
    gram = 0.5 * (gram + gram.T)
    return MomentSystem(gram, rhs, f_sq, basis, a, float(np.sum(weights) * n2))


def moments_full(U, V, f, r, row_weights=None):
    """Monomial moments: ``gram[p][q] = sum A^(p+q)``, ``rhs[p] = sum f(A) A^p``.

    ``row_weights`` multiplies every entry in row ``i`` of ``A = U V^T``
    (used by the coreset path).
    """
    return _accumulate(U, V, f, r, "monomial", row_weights=row_weights)


def moments_chebyshev(U, V, f, r, a=None, row_weights=None):
    """Chebyshev moments on ``[-a, a]``: ``gram[p][q] = sum t_p(A/a) t_q(A/a)``."""
    if a is None:
        a = chebyshev_interval(U, V)
    if not a > 0:
        raise ValueError("interval half-width a must be positive")
    return _accumulate(U, V, f, r, "chebyshev", a=float(a), row_weights=row_weights)


def chebyshev_interval(U, V):
    """``a = max_i ||u_i|| * max_j ||v_j||``, which bounds every ``|(U V^T)_ij|``."""
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    a = float(np.max(np.linalg.norm(U, axis=1)) * np.max(np.linalg.norm(V, axis=1)))
    if a == 0.0:
        raise ValueError("degenerate input: U or V is all zeros")
    return a


def conversion_matrix(a, r):
    """``R`` with ``sum_j (R c')_j x^j = sum_j c'_j t_j(x / a)``."""
    if not a > 0:
        raise ValueError("a must be positive")
    R = np.zeros((r + 1, r + 1))
    R[0, 0] = 1.0
    if r >= 1:
        R[1, 1] = 1.0 / a
    for j in range(2, r + 1):
        R[1:, j] = (2.0 / a) * R[:-1, j - 1]
        R[:, j] -= R[:, j - 2]
    return R


def monomial_condition(ms):
    """2-norm condition number of the monomial Gram (inf when singular)."""
    lam_min = min_eigenvalue_sym(ms.gram)
    lam_max = float(np.max(np.linalg.eigvalsh(ms.gram)))
    return np.inf if lam_min <= 0 else lam_max / lam_min


def monomial_well_conditioned(ms):
    return ms.basis == "monomial" and monomial_condition(ms) <= MONOMIAL_COND_LIMIT


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


def _penalty(ms, W):
    """Penalty matrix ``Q`` such that the penalty is ``c^T Q c`` in the basis of ``ms``."""
    if len(W.diag) != ms.degree + 1:
        raise DimensionError(f"regularizer has {len(W.diag)} entries, system has {ms.degree + 1}")
    if ms.basis == "monomial":
        return np.diag(W.squared)
    R = conversion_matrix(ms.interval_a, ms.degree)
    return R.T @ np.diag(W.squared) @ R


def regression_objective(ms, W, c):
    """``||X c - f||^2 + ||W c||^2`` from moments; ``c`` is in the basis of ``ms``."""
    c = as_vector(c, "c")
    Q = _penalty(ms, W)
    value = c @ ms.gram @ c - 2.0 * c @ ms.rhs + ms.f_sq_sum + c @ Q @ c
    return float(value)


def _solution(ms, W, c_basis, solver, **info):
    if ms.basis == "monomial":
        mono = c_basis
    else:
        mono = conversion_matrix(ms.interval_a, ms.degree) @ c_basis
    obj = max(regression_objective(ms, W, c_basis), 0.0)
    return CoeffSolution(np.asarray(mono), np.asarray(c_basis), obj, solver, dict(info))


def solve_ridge(ms, W):
    """``c* = (X^T X + W^2)^-1 X^T f`` on monomial moments."""
    if ms.basis != "monomial":
        raise ValueError("solve_ridge takes monomial moments; use solve_ridge_chebyshev")
    c = solve_spd(ms.gram + _penalty(ms, W), ms.rhs)
    return _solution(ms, W, c, "exact")


def solve_ridge_chebyshev(ms, W, R=None):
    """``c' = (X'^T X' + R^T W^2 R)^-1 X'^T f``; monomial coefficients are ``R c'``."""
    if ms.basis != "chebyshev":
        raise ValueError("solve_ridge_chebyshev takes Chebyshev moments")
    if R is None:
        R = conversion_matrix(ms.interval_a, ms.degree)
    H = ms.gram + R.T @ np.diag(W.squared) @ R
    c_prime = solve_spd(H, ms.rhs)
    lam_min = min_eigenvalue_sym(H)
    cond = float(np.max(np.linalg.eigvalsh(H)) / lam_min) if lam_min > 0 else np.inf
    return _solution(ms, W, c_prime, "chebyshev", condition=cond)


def _monomial_quadratic(ms, W):
    """Hessian ``H`` and linear term ``g`` of the objective in monomial coordinates."""
    if ms.basis == "monomial":
        return ms.gram + np.diag(W.squared), ms.rhs.copy()
    R = conversion_matrix(ms.interval_a, ms.degree)
    Rinv = np.linalg.solve(R, np.eye(len(R)))
    H = Rinv.T @ ms.gram @ Rinv + np.diag(W.squared)
    return 0.5 * (H + H.T), Rinv.T @ ms.rhs


def solve_ridge_nonneg(ms, W, tol=1e-8):
    """Minimize the objective subject to non-negative monomial coefficients.

    Lawson-Hanson active-set iteration on the quadratic ``c^T H c - 2 g^T c``.
    """
    H, g = _monomial_quadratic(ms, W)
    n = len(g)
    scale = max(1.0, float(np.max(np.abs(g))), float(np.max(np.abs(H))))
    passive = np.zeros(n, dtype=bool)
    c = np.zeros(n)
    pivots = 0
    while True:
        grad = g - H @ c  # half the negative gradient
        candidates = np.where(~passive & (grad > tol * scale))[0]
        if len(candidates) == 0:
            break
        if pivots >= 10 * n:
            raise ConvergenceError(f"active-set iteration exceeded {10 * n} pivots")
        passive[candidates[np.argmax(grad[candidates])]] = True
        pivots += 1
        while True:
            idx = np.where(passive)[0]
            z = np.zeros(n)
            z[idx] = solve_spd(H[np.ix_(idx, idx)], g[idx])
            if np.all(z[idx] > 0):
                c = z
                break
            blocking = idx[z[idx] <= 0]
            alpha = np.min(c[blocking] / (c[blocking] - z[blocking]))
            c = c + alpha * (z - c)
            passive &= c > tol * 1e-3 * max(1.0, float(np.max(np.abs(c))))
            c[~passive] = 0.0
            if not passive.any():
                break

    multipliers = -(g - H @ c)  # >= 0 on the active set at optimum
    kkt = max(
        float(np.max(np.abs(multipliers[passive]), initial=0.0)),
        float(np.max(-multipliers[~passive], initial=0.0)),
    ) / scale
    if ms.basis == "monomial":
        c_basis = c
    else:
        c_basis = np.linalg.solve(conversion_matrix(ms.interval_a, ms.degree), c)
    sol = _solution(ms, W, c_basis, "nonneg", kkt_residual=kkt, multipliers=multipliers, pivots=pivots)
    sol.monomial_coeffs = c
    return sol


# ---------------------------------------------------------------------------
# Reference coefficient series
# ---------------------------------------------------------------------------


def taylor_exp_coefficients(scale, r):
    """Monomial coefficients of the degree-r Taylor polynomial of ``exp(scale * x)``."""
    c = np.ones(r + 1)
    for j in range(1, r + 1):
        c[j] = c[j - 1] * scale / j
    return c


def chebyshev_series_coefficients(f, a, r):
    """Monomial coefficients of the degree-r Chebyshev interpolant of ``f`` on ``[-a, a]``."""
    c_prime = np.polynomial.chebyshev.chebinterpolate(lambda y: f(a * y), r)
    return conversion_matrix(a, r) @ c_prime


# ---------------------------------------------------------------------------
# Error-bound calculators
# ---------------------------------------------------------------------------


def bound_constant(U, V, r):
    """``C = max(5 ||U||_F^2 ||V||_F^2, (2+3^r) S_r(U) S_r(V))``."""
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    first = 5.0 * np.sum(U * U) * np.sum(V * V)
    second = (2.0 + 3.0**r) * row_norm_power_sum(U, r) * row_norm_power_sum(V, r)
    return float(max(first, second))


def smallest_singular_value(ms):
    """``sqrt(max(0, lambda_min(gram)))``: smallest singular value of ``X``."""
    return float(np.sqrt(max(0.0, min_eigenvalue_sym(ms.gram))))


def lemma_bound(ms, W, c):
    """``2 (||X c - f||^2 + ||W c||^2)``, an upper bound on the expected squared error."""
    return 2.0 * regression_objective(ms, W, c)


def multiplicative_bound(U, V, m, r, sigma_min):
    """Factor ``2 / (1 + m sigma^2 / (r C))`` multiplying ``||f(UV^T)||_F^2``."""
    if r < 1:
        raise ValueError("the multiplicative bound needs r >= 1")
    if sigma_min < 0:
        raise ValueError("sigma_min must be >= 0")
    C = bound_constant(U, V, r)
    return 2.0 / (1.0 + m * sigma_min**2 / (r * C))


def coreset_bound(coreset_f_norm_sq, sigma_bar, C, m, r, epsilon, L, v_norm_sum):
    """Coreset error bound: multiplicative term on the coreset system plus ``2 eps L sum ||v_i||``."""
    inputs = dict(
        coreset_f_norm_sq=coreset_f_norm_sq, sigma_bar=sigma_bar, C=C, m=m, r=r,
        epsilon=epsilon, L=L, v_norm_sum=v_norm_sum,
    )
    for name, value in inputs.items():
        if value < 0:
            raise ValueError(f"{name} must be >= 0")
    factor = 2.0 / (1.0 + m * sigma_bar**2 / (r * C))
    return factor * coreset_f_norm_sq + 2.0 * epsilon * L * v_norm_sum
