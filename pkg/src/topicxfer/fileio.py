"""Shared on-disk formats: matrix files and key=value metadata files.

Matrix format: first line ``rows cols``, then ``rows`` lines of ``cols``
space-separated decimals printed with 17 significant digits.
"""

import numpy as np

from .errors import CorpusError


def format_float(x):
    """Render a float with 17 significant digits (exact float64 round-trip)."""
    return f"{float(x):.17g}"


def write_matrix(path, mat):
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got shape {mat.shape}")
    rows, cols = mat.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{rows} {cols}\n")
        for r in range(rows):
            fh.write(" ".join(format_float(v) for v in mat[r]) + "\n")


def read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusError(f"{path}: malformed matrix header")
        rows, cols = int(header[0]), int(header[1])
        mat = np.empty((rows, cols), dtype=np.float64)
        for r in range(rows):
            parts = fh.readline().split()
            if len(parts) != cols:
                raise CorpusError(f"{path}: row {r} has {len(parts)} values, expected {cols}")
            mat[r] = [float(p) for p in parts]
    if not np.isfinite(mat).all():
        raise CorpusError(f"{path}: matrix contains non-finite values")
    return mat


def read_vector(path):
    mat = read_matrix(path)
    if mat.shape[0] != 1:
        raise CorpusError(f"{path}: expected a single-row matrix, got {mat.shape}")
    return mat[0]


def write_kv(path, items):
    """Write ``key=value`` lines in the given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in items:
            fh.write(f"{key}={value}\n")


def read_kv(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CorpusError(f"{path}: line {lineno}: expected 'key=value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
