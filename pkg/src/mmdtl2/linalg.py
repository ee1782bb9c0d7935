"""Dense matrix substrate.

Everything downstream works on plain float64 numpy arrays in C (row-major)
order, which matches the row-major vec convention used by the transform
solver. The helpers here add the argument checking and the deterministic
fill that the rest of the package relies on; the heavy lifting is numpy's.
"""

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class NumericalError(RuntimeError):
    """A solver failed for numerical reasons (not a usage error)."""


def as_matrix(a, name="matrix"):
    """Coerce to a 2-D float64 C-order array, rejecting non-finite input."""
    m = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a, b):
    a = as_matrix(a, "left factor")
    b = as_matrix(b, "right factor")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"shape mismatch for product: {a.shape} @ {b.shape}"
        )
    return a @ b


def norm_inf(a):
    """Largest absolute entry (0.0 for empty input)."""
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def cholesky(a, sym_tol=1e-8):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Symmetry is checked explicitly (numpy would silently use one triangle);
    failure to factor raises NumericalError so callers can apply their own
    retry policy.
    """
    a = as_matrix(a, "spd matrix")
    n, m = a.shape
    if n != m:
        raise ValueError(f"cholesky needs a square matrix, got {a.shape}")
    scale = norm_inf(a)
    if norm_inf(a - a.T) > sym_tol * (1.0 + scale):
        raise ValueError("cholesky needs a symmetric matrix")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"cholesky factorization failed: {exc}") from None


def solve_factored(factor, b):
    """Solve A x = b given the lower Cholesky factor of A.

    b may be a vector or a matrix of stacked right-hand sides.
    """
    factor = as_matrix(factor, "cholesky factor")
    rhs = np.asarray(b, dtype=np.float64)
    vector_rhs = rhs.ndim == 1
    if vector_rhs:
        rhs = rhs[:, None]
    if rhs.shape[0] != factor.shape[0]:
        raise ValueError(
            f"rhs rows {rhs.shape[0]} do not match factor size {factor.shape[0]}"
        )
    x = cho_solve((factor, True), rhs, check_finite=False)
    return x[:, 0] if vector_rhs else x


def solve_lower(factor, b):
    """Forward substitution with a lower-triangular factor."""
    return solve_triangular(factor, b, lower=True, check_finite=False)


def seeded_fill(rows, cols, distribution="uniform01", seed=0):
    """Deterministic matrix fill from a fixed 64-bit generator.

    Uses numpy's PCG64 stream (O'Neill's permuted congruential generator,
    fixed published constants), so the same (shape, distribution, seed)
    triple yields the same bytes on every platform.
    """
    if rows < 0 or cols < 0:
        raise ValueError("matrix dimensions must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    if distribution == "uniform01":
        return rng.random((rows, cols))
    if distribution == "normal":
        return rng.standard_normal((rows, cols))
    raise ValueError(f"unknown distribution {distribution!r}")
