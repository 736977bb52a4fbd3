"""Datasets: LIBSVM text files and synthetic Gaussian matrices."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None
    source: str

    @property
    def shape(self):
        return self.features.shape


def _parse_label(token, lineno):
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"bad label {token!r}", line=lineno) from None
    if not np.isfinite(value):
        raise DataError(f"non-finite label {token!r}", line=lineno)
    return value


def parse_libsvm(path):
    """Read ``label idx:val idx:val ...`` lines; indices are 1-based and strictly increasing.

    Blank lines and lines starting with ``#`` are skipped. The dimension is
    the largest index seen; absent entries are zero.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    labels, rows, dim = [], [], 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], lineno))
        idx, vals, last = [], [], 0
        for tok in tokens[1:]:
            key, sep, val = tok.partition(":")
            try:
                i, v = int(key), float(val)
            except ValueError:
                raise DataError(f"malformed feature {tok!r}", line=lineno) from None
            if not sep:
                raise DataError(f"malformed feature {tok!r}", line=lineno)
            if i <= last:
                raise DataError(f"index {i} is not strictly increasing (1-based)", line=lineno)
            if not np.isfinite(v):
                raise DataError(f"non-finite value in {tok!r}", line=lineno)
            idx.append(i - 1)
            vals.append(v)
            last = i
        rows.append((idx, vals))
        dim = max(dim, last)
    if not rows:
        raise DataError(f"{path} contains no data rows")
    X = np.zeros((len(rows), dim))
    for r, (idx, vals) in enumerate(rows):
        X[r, idx] = vals
    y = np.array(labels)
    if np.all(y == np.round(y)):
        y = y.astype(np.int64)
    return Dataset(X, y, str(path))


def write_libsvm(path, features, labels=None):
    """Write rows in LIBSVM format, zero entries omitted, full double precision."""
    X = np.asarray(features, dtype=np.float64)
    y = np.zeros(len(X), dtype=np.int64) if labels is None else np.asarray(labels)
    lines = []
    for label, row in zip(y, X):
        nz = np.flatnonzero(row)
        lab = str(int(label)) if float(label).is_integer() else repr(float(label))
        lines.append(" ".join([lab] + [f"{i + 1}:{float(row[i])!r}" for i in nz]))
    Path(path).write_text("\n".join(lines) + "\n")


def synthetic(n, d, seed=0):
    """``n x d`` matrix with entries ``N(0, 1/d)``."""
    if n < 1 or d < 1:
        raise ValueError("synthetic shape needs n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    X = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d))
    return Dataset(X, None, f"synthetic:{n},{d}")


def synthetic_pixels(n, d=3, seed=0):
    """Source and target clouds in ``[0, 1]^d`` standing in for sampled image pixels.

    The source is uniform; the target is ``Beta(2, 5)`` per channel, a darker palette.
    """
    if n < 1 or d < 1:
        raise ValueError("synthetic shape needs n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, (n, d)), rng.beta(2.0, 5.0, (n, d))
