"""Small dense linear-algebra and transform kernel.

Matrices are plain ``float64`` numpy arrays; :func:`as_matrix` is the
validating constructor used at every public boundary. The FFT works for any
length: powers of two go through an iterative radix-2 core and everything
else through Bluestein's chirp-z reformulation on top of that core, so a
sketch of width ``m = 10`` is transformed at length 10 without padding.

``FFT_BACKEND`` selects between that native implementation (``"native"``)
and numpy's pocketfft (``"numpy"``, the default, also exact-length). Both
are unnormalized forward transforms and agree to rounding.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, NotSymmetricError, SingularSystemError

SYMMETRY_TOL = 1e-10
JITTER_START = 1e-12
JITTER_RETRIES = 3
RESIDUAL_TOL = 1e-8

FFT_BACKEND = "numpy"


def as_matrix(x, name="matrix"):
    """Return ``x`` as a finite 2-D float64 array (no copy when possible)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def as_vector(x, name="vector"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or Inf")
    return v


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------


def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_pow2(x):
    """Iterative radix-2 DIT transform along the last axis (length 2^p)."""
    n = x.shape[-1]
    lead = x.shape[:-1]
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverse_indices(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def _ifft_pow2(x):
    n = x.shape[-1]
    return np.conj(_fft_pow2(np.conj(x))) / n


def _bluestein(x):
    n = x.shape[-1]
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase argument small for accuracy
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    size = 1 << (2 * n - 2).bit_length()
    a = np.zeros(x.shape[:-1] + (size,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(size, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[size - n + 1 :] = np.conj(chirp[1:])[::-1]
    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return chirp * conv[..., :n]


def fft_forward(x, backend=None):
    """Unnormalized DFT along the last axis, any length >= 1.

    Accepts real or complex input with arbitrary leading (batch) axes.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1:
        raise DimensionError("FFT length must be >= 1")
    backend = backend or FFT_BACKEND
    if backend == "numpy":
        return np.fft.fft(x, axis=-1)
    if backend != "native":
        raise ValueError(f"unknown FFT backend {backend!r}")
    if n & (n - 1) == 0:
        return _fft_pow2(x)
    return _bluestein(x)


def fft_inverse(x, backend=None):
    """Inverse of :func:`fft_forward`, including the ``1/length`` factor."""
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft_forward(np.conj(x), backend)) / x.shape[-1]


def circular_convolve(x, y):
    """Length-m circular convolution ``z[j] = sum_{a+b = j mod m} x[a] y[b]``.

    Both arguments may carry leading batch axes; they broadcast.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(
            f"convolution lengths differ: {x.shape[-1]} vs {y.shape[-1]}"
        )
    return fft_inverse(fft_forward(x) * fft_forward(y)).real


def circular_convolve_direct(x, y):
    """O(m^2) reference implementation used as a test oracle."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError("direct convolution takes two equal-length vectors")
    m = len(x)
    z = np.zeros(m)
    for a in range(m):
        for b in range(m):
            z[(a + b) % m] += x[a] * y[b]
    return z


# ---------------------------------------------------------------------------
# Symmetric solves and eigenvalues
# ---------------------------------------------------------------------------


def _check_symmetric(A, name="matrix"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric")
    return A


def _cholesky_solve(A, b):
    factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def solve_spd(A, b):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    A plain Cholesky factorization is tried first. If it fails, the diagonal
    is shifted by ``1e-12 * trace(A)/n`` and the shift grows tenfold for up
    to three attempts; a jittered solution is accepted only when its residual
    against the *unshifted* ``A`` is within ``1e-8 * ||b||``.
    """
    A = _check_symmetric(A)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if b.shape[0] != n:
        raise DimensionError(f"rhs length {b.shape[0]} != system size {n}")
    try:
        x = _cholesky_solve(A, b)
        if np.all(np.isfinite(x)):
            return x
    except np.linalg.LinAlgError:
        pass

    scale = np.trace(A) / n
    if not scale > 0:
        scale = max(float(np.max(np.abs(A))), 1.0)
    jitter = JITTER_START * scale
    b_norm = np.linalg.norm(b)
    for _ in range(JITTER_RETRIES):
        try:
            x = _cholesky_solve(A + jitter * np.eye(n), b)
        except np.linalg.LinAlgError:
            jitter *= 10
            continue
        if np.all(np.isfinite(x)) and np.linalg.norm(A @ x - b) <= RESIDUAL_TOL * b_norm:
            return x
        jitter *= 10
    raise SingularSystemError(
        f"matrix is not numerically positive definite (jitter up to {jitter / 10:.3g})"
    )


def jacobi_eigenvalues(A, tol=1e-15, max_sweeps=100):
    """All eigenvalues of a small symmetric matrix by cyclic Jacobi rotations."""
    A = _check_symmetric(A).copy()
    n = A.shape[0]
    if n > 64:
        raise DimensionError("Jacobi eigenvalue routine is limited to n <= 64")
    total = np.linalg.norm(A)
    if total == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * total:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                with np.errstate(over="ignore", divide="ignore"):
                    tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if abs(tau) > 1e150:
                        t = 0.5 / tau
                    else:
                        t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
    return np.sort(np.diag(A))


def min_eigenvalue_sym(A):
    """Smallest eigenvalue of a symmetric matrix (n <= 64). May be <= 0."""
    return float(jacobi_eigenvalues(A)[0])
