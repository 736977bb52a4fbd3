"""Seeded CountSketch and TensorSketch.

Every hash/sign table is an explicit, fully independent uniform draw. Tables
are regenerated bit-for-bit from ``(seed, d, m)``; a family set derives one
seed per family from a master seed with the SplitMix64 output function.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse

from .errors import DimensionError
from .numkit import as_matrix, as_vector, fft_forward, fft_inverse

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

DIRECT_LIMIT = 10**6


def splitmix64(x):
    """SplitMix64 finalizer (Steele, Lea & Flood constants)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master, index):
    """Seed of the ``index``-th child stream: the index-th SplitMix64 output."""
    return splitmix64((int(master) + (int(index) + 1) * _GOLDEN) & _MASK64)


@dataclass(frozen=True, eq=False)
class HashFamily:
    """One CountSketch: a hash ``[d] -> [m]`` and a sign ``[d] -> {-1, +1}``."""

    dim_in: int
    dim_out: int
    hash: np.ndarray
    sign: np.ndarray
    seed: int

    @classmethod
    def draw(cls, seed, dim_in, dim_out):
        if dim_in < 1 or dim_out < 1:
            raise ValueError("hash dimensions must be >= 1")
        rng = np.random.default_rng(int(seed) & _MASK64)
        h = rng.integers(0, dim_out, size=dim_in)
        s = 2.0 * rng.integers(0, 2, size=dim_in) - 1.0
        return cls.from_tables(h, s, dim_out, seed=seed)

    @classmethod
    def from_tables(cls, hash, sign, dim_out, seed=0):
        h = np.array(hash, dtype=np.int64)
        s = np.array(sign, dtype=np.float64)
        if h.ndim != 1 or h.shape != s.shape:
            raise DimensionError("hash and sign tables must be equal-length vectors")
        if np.any(h < 0) or np.any(h >= dim_out):
            raise ValueError(f"hash values must lie in [0, {dim_out})")
        if not np.all(np.abs(s) == 1.0):
            raise ValueError("sign values must be -1 or +1")
        h.setflags(write=False)
        s.setflags(write=False)
        return cls(len(h), int(dim_out), h, s, int(seed))

    @cached_property
    def matrix(self):
        """Sparse ``d x m`` matrix with ``sign[i]`` at ``(i, hash[i])``."""
        return scipy.sparse.csr_matrix(
            (self.sign, (np.arange(self.dim_in), self.hash)),
            shape=(self.dim_in, self.dim_out),
        )


@dataclass(frozen=True, eq=False)
class SketchFamilySet:
    families: tuple
    master_seed: int = 0

    @classmethod
    def draw(cls, master_seed, dim_in, dim_out, count):
        fams = tuple(
            HashFamily.draw(derive_seed(master_seed, i), dim_in, dim_out)
            for i in range(count)
        )
        return cls(fams, int(master_seed))

    def __len__(self):
        return len(self.families)

    def __getitem__(self, i):
        return self.families[i]

    def __iter__(self):
        return iter(self.families)


def count_sketch(U, family):
    """CountSketch every row of ``U`` (n x d) into n x m. O(nd)."""
    U = as_matrix(U, "U")
    if U.shape[1] != family.dim_in:
        raise DimensionError(
            f"U has {U.shape[1]} columns but the hash family expects {family.dim_in}"
        )
    return np.asarray(family.matrix.T @ U.T).T


def tensor_sketch(U, families, degree):
    """Degree-``k`` TensorSketch of each row of ``U`` via FFT products.

    Uses ``families[0..k-1]``. Degree 0 is the all-ones ``n x 1`` column.
    """
    U = as_matrix(U, "U")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if degree > len(families):
        raise ValueError(f"degree {degree} needs {degree} hash families, got {len(families)}")
    if degree == 0:
        return np.ones((U.shape[0], 1))
    if degree == 1:
        return count_sketch(U, families[0])
    spectrum = fft_forward(count_sketch(U, families[0]))
    for i in range(1, degree):
        spectrum = spectrum * fft_forward(count_sketch(U, families[i]))
    return fft_inverse(spectrum).real


def tensor_sketch_step(prev, U, family):
    """Raise a degree ``j-1`` sketch to degree ``j`` with one fresh CountSketch.

    ``prev`` of width 1 is treated as the degree-0 sketch, for which the
    result is simply the CountSketch of ``U``.
    """
    prev = as_matrix(prev, "prev")
    cs = count_sketch(U, family)
    if prev.shape[0] != cs.shape[0]:
        raise DimensionError(f"prev has {prev.shape[0]} rows, U has {cs.shape[0]}")
    if prev.shape[1] == 1:
        return cs * prev
    if prev.shape[1] != family.dim_out:
        raise DimensionError(
            f"prev has width {prev.shape[1]}, family sketches to {family.dim_out}"
        )
    return fft_inverse(fft_forward(cs) * fft_forward(prev)).real


def tensor_sketch_direct(u, families, degree):
    """Definitional TensorSketch of one vector by enumerating all index tuples.

    Exponential in ``degree``; a test oracle only.
    """
    u = as_vector(u, "u")
    d = len(u)
    if degree == 0:
        return np.ones(1)
    if degree > len(families):
        raise ValueError(f"degree {degree} needs {degree} hash families, got {len(families)}")
    if d**degree > DIRECT_LIMIT:
        raise ValueError(f"d^k = {d}^{degree} exceeds the enumeration limit {DIRECT_LIMIT}")
    fams = families[:degree] if isinstance(families, (list, tuple)) else families.families[:degree]
    m = fams[0].dim_out
    out = np.zeros(m)
    for idx in itertools.product(range(d), repeat=degree):
        pos = 0
        val = 1.0
        for fam, i in zip(fams, idx):
            pos += int(fam.hash[i])
            val *= fam.sign[i] * u[i]
        out[pos % m] += val
    return out


def row_norm_power_sum(U, k):
    """``sum_i (sum_j U_ij^2)^k``, the data term of the TensorSketch variance."""
    U = as_matrix(U, "U")
    return float(np.sum(np.sum(U * U, axis=1) ** k))


def tensor_sketch_error_bound(U, V, degree, m):
    """Upper bound on ``E ||(UV^T)^k - T_U T_V^T||_F^2`` for a degree-k sketch."""
    return (2.0 + 3.0**degree) * row_norm_power_sum(U, degree) * row_norm_power_sum(V, degree) / m
