"""Greedy k-center coresets and the coefficient fit restricted to them.

Instead of regressing over all ``n1 * n2`` entries of ``U V^T``, one side is
replaced by ``k`` cluster centers and every coreset entry is weighted by the
size of its cluster. Only the weights enter the moment accumulation; the
``kn x kn`` diagonal weight matrix is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import coeffs
from .numkit import as_matrix

ORACLE_LIMIT = 12


@dataclass(frozen=True)
class CoresetAssignment:
    center_indices: np.ndarray
    mapping: np.ndarray
    distortions: np.ndarray
    epsilon: float

    @property
    def k(self):
        return len(self.center_indices)

    @property
    def cluster_sizes(self):
        return np.bincount(self.mapping, minlength=self.k).astype(np.float64)

    @property
    def radius(self):
        return float(np.max(self.distortions, initial=0.0))


def _distances_to(points, center):
    return np.linalg.norm(points - center, axis=1)


def greedy_k_center(points, k, seed=0, first=None):
    """Greedy farthest-point clustering, a 2-approximation to the optimal k-center radius.

    The first center is drawn uniformly with ``seed`` unless ``first`` is
    given. Later centers maximize the current distance to the chosen set,
    ties going to the lowest index; points already chosen are never chosen
    again, so ``k = n`` makes every point a center.
    """
    points = as_matrix(points, "points")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if first is None:
        first = int(np.random.default_rng(seed).integers(n))
    centers = [int(first)]
    delta = _distances_to(points, points[first])
    chosen = np.zeros(n, dtype=bool)
    chosen[first] = True
    for _ in range(1, k):
        masked = np.where(chosen, -1.0, delta)
        a = int(np.argmax(masked))
        centers.append(a)
        chosen[a] = True
        delta = np.minimum(delta, _distances_to(points, points[a]))

    centers = np.array(centers)
    dist = np.stack([_distances_to(points, points[c]) for c in centers], axis=1)
    mapping = np.argmin(dist, axis=1)
    distortions = dist[np.arange(n), mapping]
    return CoresetAssignment(centers, mapping, distortions, float(np.sum(distortions)))


def optimal_k_center_oracle(points, k):
    """Exact optimal k-center radius with centers restricted to the input points."""
    points = as_matrix(points, "points")
    n = points.shape[0]
    if n > ORACLE_LIMIT:
        raise ValueError(f"exhaustive oracle limited to n <= {ORACLE_LIMIT}, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    dist = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    return float(min(np.max(np.min(dist[:, list(S)], axis=1)) for S in combinations(range(n), k)))


def coreset_moments(U, V, f, r, k, seed=0, basis="chebyshev"):
    """Weighted coreset moments plus the side-selection record.

    Returns ``(moments, info)``. The side with the smaller
    ``eps_side * sum of opposite row norms`` is clustered; equality goes to U.
    """
    U = as_matrix(U, "U")
    V = as_matrix(V, "V")
    if not 1 <= k <= min(U.shape[0], V.shape[0]):
        raise ValueError(f"k={k} must lie in [1, min(n1, n2)]")
    au = greedy_k_center(U, k, seed)
    av = greedy_k_center(V, k, seed)
    score_u = au.epsilon * float(np.sum(np.linalg.norm(V, axis=1)))
    score_v = av.epsilon * float(np.sum(np.linalg.norm(U, axis=1)))
    a = coeffs.chebyshev_interval(U, V) if basis == "chebyshev" else None
    if score_u <= score_v:
        side, assignment = "U", au
        left, right = U[au.center_indices], V
    else:
        # entries of U Vbar^T are those of Vbar U^T, so weight rows of the swapped product
        side, assignment = "V", av
        left, right = V[av.center_indices], U
    if basis == "chebyshev":
        ms = coeffs.moments_chebyshev(left, right, f, r, a, row_weights=assignment.cluster_sizes)
    elif basis == "monomial":
        ms = coeffs.moments_full(left, right, f, r, row_weights=assignment.cluster_sizes)
    else:
        raise ValueError(f"unknown basis {basis!r}")
    info = dict(side=side, assignment=assignment, epsilon=assignment.epsilon, scores=(score_u, score_v))
    return ms, info


def coreset_coefficients(U, V, f, m, r, k, seed=0, basis="chebyshev"):
    """Coefficients ``(Xbar^T D Xbar + W^2)^-1 Xbar^T D fbar`` from a k-center coreset."""
    ms, info = coreset_moments(U, V, f, r, k, seed, basis)
    W = coeffs.build_regularizer(U, V, m, r)
    sol = coeffs.solve_ridge(ms, W) if basis == "monomial" else coeffs.solve_ridge_chebyshev(ms, W)
    sol.solver = "coreset"
    sol.info.update(info, basis=basis, moments=ms)
    return sol


def exact_coefficients(U, V, f, m, r, basis="chebyshev"):
    """Reference fit over every entry of ``U V^T``."""
    W = coeffs.build_regularizer(U, V, m, r)
    if basis == "monomial":
        return coeffs.solve_ridge(coeffs.moments_full(U, V, f, r), W)
    if basis == "chebyshev":
        return coeffs.solve_ridge_chebyshev(coeffs.moments_chebyshev(U, V, f, r), W)
    raise ValueError(f"unknown basis {basis!r}")
