"""Applications of the factored operator: RBF kernels, baselines, Sinkhorn, feature maps.

Gaussian kernels factor as ``exp(-s ||x - y||^2) = z_x exp(2 s <x, y>) z_y`` with
``z_x = exp(-s ||x||^2)``, so a sketch of the entrywise exponential of a scaled
Gram matrix plus two diagonal scalings gives a kernel operator. The RBF
convention here is ``exp(-||x - y||^2 / gamma)`` and Sinkhorn uses
``exp(-gamma ||x - y||^2)``; both go through :func:`gaussian_factorize`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import coeffs as cf
from .coreset import coreset_coefficients, coreset_moments, exact_coefficients
from .errors import DimensionError, PositivityError
from .numkit import as_matrix, as_vector
from .polyts import poly_tensor_sketch

COEFF_METHODS = ("coreset", "exact", "taylor", "chebyshev")
SINKHORN_KERNELS = ("exact", "polyts", "rff", "nystrom")
POSITIVITY_FLOOR = 1e-30
PINV_CUTOFF = 1e-10


# ---------------------------------------------------------------------------
# Gaussian kernel factorization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelFactorization:
    """``diag(z_left) Gamma diag(z_right)`` with ``Gamma`` a :class:`FactoredOperator`."""

    z_left: np.ndarray
    z_right: np.ndarray
    operator: object
    coeffs: np.ndarray

    @property
    def shape(self):
        return self.operator.shape

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        zr = self.z_right.reshape((-1,) + (1,) * (x.ndim - 1))
        zl = self.z_left.reshape((-1,) + (1,) * (x.ndim - 1))
        return zl * self.operator.apply(zr * x)

    def apply_transpose(self, x):
        x = np.asarray(x, dtype=np.float64)
        zr = self.z_right.reshape((-1,) + (1,) * (x.ndim - 1))
        zl = self.z_left.reshape((-1,) + (1,) * (x.ndim - 1))
        return zr * self.operator.apply_transpose(zl * x)

    def entries(self, rows, cols):
        return self.z_left[rows] * self.operator.entries(rows, cols) * self.z_right[cols]

    def materialize(self):
        return self.z_left[:, None] * self.operator.materialize() * self.z_right[None, :]


@dataclass(frozen=True, eq=False)
class RbfFactorization(KernelFactorization):
    """RBF kernel ``Z Gamma Z`` with ``Z_ii = exp(-||u_i||^2 / gamma)``."""

    gamma: float = 1.0

    @property
    def z_scale(self):
        return self.z_left


def fit_exp_coefficients(X, Y, scale, m, r, k_centers, seed, method="coreset"):
    """Monomial coefficients approximating ``exp(scale * t)`` on the entries of ``X Y^T``."""
    f = lambda t: np.exp(scale * t)  # noqa: E731
    if method == "coreset":
        k = min(k_centers, X.shape[0], Y.shape[0])
        return coreset_coefficients(X, Y, f, m, r, k, seed).monomial_coeffs
    if method == "exact":
        return exact_coefficients(X, Y, f, m, r).monomial_coeffs
    if method == "taylor":
        return cf.taylor_exp_coefficients(scale, r)
    if method == "chebyshev":
        return cf.chebyshev_series_coefficients(f, cf.chebyshev_interval(X, Y), r)
    raise ValueError(f"unknown coefficient method {method!r}; choose from {COEFF_METHODS}")


def gaussian_factorize(X, Y, scale, m, r, k_centers=10, seed=0, method="coreset"):
    """Factor ``exp(-scale ||x_i - y_j||^2)`` as ``z_x Gamma z_y``."""
    if not scale > 0:
        raise ValueError("kernel scale must be positive")
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"X has {X.shape[1]} columns, Y has {Y.shape[1]}")
    c = fit_exp_coefficients(X, Y, 2.0 * scale, m, r, k_centers, seed, method)
    op = poly_tensor_sketch(X, Y, c, m, seed)
    zx = np.exp(-scale * np.sum(X * X, axis=1))
    zy = np.exp(-scale * np.sum(Y * Y, axis=1))
    return KernelFactorization(zx, zy, op, c)


def rbf_factorize(U, gamma, m=10, r=10, k_centers=10, seed=0, method="coreset"):
    """Sketched RBF kernel ``K ~ Z Gamma Z`` where ``Gamma ~ exp(2 U U^T / gamma)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    g = gaussian_factorize(U, U, 1.0 / gamma, m, r, k_centers, seed, method)
    return RbfFactorization(g.z_left, g.z_right, g.operator, g.coeffs, float(gamma))


def rbf_kernel(U, gamma, V=None):
    """Dense ``exp(-||u_i - v_j||^2 / gamma)``."""
    U = as_matrix(U, "U")
    V = U if V is None else as_matrix(V, "V")
    return np.exp(-cdist(U, V, "sqeuclidean") / gamma)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def rff_features(U, gamma, dim_out, seed=0):
    """Random Fourier features for ``exp(-||x - y||^2 / gamma)``.

    Frequencies are ``N(0, (2/gamma) I)`` and phases ``U[0, 2 pi)``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    U = as_matrix(U, "U")
    rng = np.random.default_rng(seed)
    W = rng.normal(0.0, math.sqrt(2.0 / gamma), size=(U.shape[1], dim_out))
    b = rng.uniform(0.0, 2.0 * math.pi, size=dim_out)
    return math.sqrt(2.0 / dim_out) * np.cos(U @ W + b)


@dataclass(frozen=True, eq=False)
class LowRankKernel:
    """``left @ core @ right.T`` kept in factored form."""

    left: np.ndarray
    core: np.ndarray
    right: np.ndarray

    @property
    def shape(self):
        return self.left.shape[0], self.right.shape[0]

    def apply(self, x):
        return self.left @ (self.core @ (self.right.T @ x))

    def apply_transpose(self, x):
        return self.right @ (self.core.T @ (self.left.T @ x))

    def entries(self, rows, cols):
        return np.einsum("ij,ij->i", self.left[rows] @ self.core, self.right[cols])

    def materialize(self):
        return self.left @ self.core @ self.right.T


def rff_kernel(X, Y, gamma, dim_out, seed=0):
    """RFF kernel between two point sets sharing one frequency draw."""
    X = as_matrix(X, "X")
    F = rff_features(np.vstack([X, as_matrix(Y, "Y")]), gamma, dim_out, seed)
    return LowRankKernel(F[: len(X)], np.eye(dim_out), F[len(X) :])


def nystrom_sample_size(m, r):
    return int(math.ceil(max(math.sqrt(r * m), r)))


def nystrom_approx(U, gamma, s, seed=0, V=None):
    """Nystrom kernel ``K_{:,S} pinv(K_SS) K_{S,:}`` with uniform landmarks.

    With ``V`` given the landmarks come from the union of both point sets.
    """
    U = as_matrix(U, "U")
    pool = U if V is None else np.vstack([U, as_matrix(V, "V")])
    if not 1 <= s <= len(pool):
        raise ValueError(f"need 1 <= s <= {len(pool)}, got {s}")
    rng = np.random.default_rng(seed)
    S = pool[np.sort(rng.choice(len(pool), size=s, replace=False))]
    K_ss = rbf_kernel(S, gamma)
    lam, Q = np.linalg.eigh(K_ss)
    keep = lam > PINV_CUTOFF * lam[-1]
    core = (Q[:, keep] / lam[keep]) @ Q[:, keep].T
    left = rbf_kernel(U, gamma, S)
    right = left if V is None else rbf_kernel(V, gamma, S)
    return LowRankKernel(left, core, right)


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------


def relative_frobenius_error(approx, exact):
    return float(np.linalg.norm(approx - exact) / np.linalg.norm(exact))


def mean_relative_entry_error(approx, exact):
    """Mean of ``|approx_ij - exact_ij| / |exact_ij|`` over all entries."""
    return float(np.mean(np.abs(approx - exact) / np.abs(exact)))


# ---------------------------------------------------------------------------
# Sinkhorn
# ---------------------------------------------------------------------------


@dataclass
class SinkhornState:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    b: np.ndarray
    iterations: int = 0
    objective: float = float("nan")
    residual: float = float("nan")
    clamped: int = 0
    clamp_history: list = field(default_factory=list)


class DenseKernel:
    def __init__(self, K):
        self.K = K

    @property
    def shape(self):
        return self.K.shape

    def apply(self, x):
        return self.K @ x

    def apply_transpose(self, x):
        return self.K.T @ x


def sinkhorn_kernel(x_points, y_points, gamma, kernel="exact", m=20, r=3, k_centers=10, seed=0, rank=None):
    """Kernel operator for ``exp(-gamma ||x_i - y_j||^2)``.

    Points are shifted by their joint mean first; distances are unchanged and
    the inner products seen by the polynomial fit stay small.
    """
    X = as_matrix(x_points, "x_points")
    Y = as_matrix(y_points, "y_points")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"x has {X.shape[1]} columns, y has {Y.shape[1]}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    shift = np.vstack([X, Y]).mean(axis=0)
    X, Y = X - shift, Y - shift
    if kernel == "exact":
        return DenseKernel(np.exp(-gamma * cdist(X, Y, "sqeuclidean")))
    if kernel == "polyts":
        return gaussian_factorize(X, Y, gamma, m, r, k_centers, seed, method="coreset")
    if kernel == "rff":
        return rff_kernel(X, Y, 1.0 / gamma, rank or m * r, seed)
    if kernel == "nystrom":
        return nystrom_approx(X, 1.0 / gamma, rank or nystrom_sample_size(m, r), seed, V=Y)
    raise ValueError(f"unknown kernel {kernel!r}; choose from {SINKHORN_KERNELS}")


def transport_objective(op, u, v, x_points, y_points):
    """``sum_ij u_i K_ij v_j ||x_i - y_j||^2`` using ``d + 2`` matvecs with ``K``.

    Expands ``||x - y||^2 = ||x||^2 + ||y||^2 - 2 <x, y>`` so no entry of the
    distance matrix is formed.
    """
    X = as_matrix(x_points, "x_points")
    Y = as_matrix(y_points, "y_points")
    shift = np.vstack([X, Y]).mean(axis=0)
    X, Y = X - shift, Y - shift
    nx, ny = np.sum(X * X, axis=1), np.sum(Y * Y, axis=1)
    block = np.column_stack([v, v * ny, v[:, None] * Y])
    KB = op.apply(block)
    total = np.sum(u * nx * KB[:, 0]) + np.sum(u * KB[:, 1]) - 2.0 * np.sum((u[:, None] * X) * KB[:, 2:])
    return float(total)


def _positive_part(y, iteration):
    if not np.all(np.isfinite(y)):
        raise PositivityError("kernel matvec produced non-finite values", iteration=iteration)
    low = y < POSITIVITY_FLOOR
    return np.where(low, POSITIVITY_FLOOR, y), int(np.count_nonzero(low))


def sinkhorn_iterations(x_points, y_points, a, b, gamma, iters, kernel="exact", op=None, **params):
    """Yield the :class:`SinkhornState` after every sweep.

    Each sweep is ``u = a / (K v)``, ``v = b / (K^T u)``; matvec outputs are
    clamped below at 1e-30 and the number of clamped entries is recorded.
    The residual is ``||u * (K v) - a||_1`` with the updated ``v``.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("marginals must be strictly positive")
    if abs(a.sum() - 1.0) > 1e-12 or abs(b.sum() - 1.0) > 1e-12:
        raise ValueError("marginals must sum to 1")
    if op is None:
        op = sinkhorn_kernel(x_points, y_points, gamma, kernel, **params)
    if op.shape != (len(a), len(b)):
        raise DimensionError(f"kernel shape {op.shape} does not match marginals ({len(a)}, {len(b)})")

    state = SinkhornState(np.ones(len(a)), np.ones(len(b)), a, b)
    Kv, _ = _positive_part(op.apply(state.v), 0)
    for it in range(1, iters + 1):
        u = a / Kv
        Ktu, c1 = _positive_part(op.apply_transpose(u), it)
        v = b / Ktu
        Kv, c2 = _positive_part(op.apply(v), it)
        state.u, state.v, state.iterations = u, v, it
        state.residual = float(np.sum(np.abs(u * Kv - a)))
        state.clamp_history.append(c1 + c2)
        state.clamped += c1 + c2
        yield state


def sinkhorn(x_points, y_points, a, b, gamma, iters, kernel="exact", op=None, **params):
    """Run ``iters`` Sinkhorn sweeps and attach the transport objective."""
    if op is None:
        op = sinkhorn_kernel(x_points, y_points, gamma, kernel, **params)
    state = SinkhornState(np.ones(len(a)), np.ones(len(b)), as_vector(a, "a"), as_vector(b, "b"))
    for state in sinkhorn_iterations(x_points, y_points, a, b, gamma, iters, op=op):
        pass
    state.objective = transport_objective(op, state.u, state.v, x_points, y_points)
    return state


# ---------------------------------------------------------------------------
# Feature maps
# ---------------------------------------------------------------------------


def nonneg_coefficients(U, f, m, r, k_centers=10, seed=0):
    """Non-negative monomial coefficients fitted on coreset moments of ``(U, U)``."""
    U = as_matrix(U, "U")
    ms, _ = coreset_moments(U, U, f, r, min(k_centers, U.shape[0]), seed)
    return cf.solve_ridge_nonneg(ms, cf.build_regularizer(U, U, m, r)).monomial_coeffs


def feature_map(U, f=None, m=10, r=3, k_centers=10, seed=0, coeffs=None):
    """Explicit features ``[sqrt(c_0) T^(0), ..., sqrt(c_r) T^(r)]`` of width ``1 + r m``.

    ``T_U T_V^T`` is then a Poly-TensorSketch estimate of ``f(U V^T)``. Pass
    ``coeffs`` (non-negative) to reuse a fit, e.g. for held-out rows.
    """
    U = as_matrix(U, "U")
    if coeffs is None:
        if f is None:
            raise ValueError("need f or coeffs")
        coeffs = nonneg_coefficients(U, f, m, r, k_centers, seed)
    c = as_vector(coeffs, "coeffs")
    if np.any(c < 0):
        raise ValueError("feature maps need non-negative coefficients")
    r = len(c) - 1
    op = poly_tensor_sketch(U, U[:1], c, m, seed)
    blocks = [np.sqrt(c[0]) * op.terms[0].left]
    for t in op.terms[1:]:
        blocks.append(np.sqrt(t.coeff) * t.left)
    return np.hstack(blocks)


def rbf_feature_map(U, gamma, m=20, r=3, k_centers=10, seed=0, coeffs=None):
    """Features whose inner products estimate ``exp(-||u_i - u_j||^2 / gamma)``."""
    U = as_matrix(U, "U")
    f = lambda t: np.exp(2.0 * t / gamma)  # noqa: E731
    z = np.exp(-np.sum(U * U, axis=1) / gamma)
    return z[:, None] * feature_map(U, f, m, r, k_centers, seed, coeffs)
