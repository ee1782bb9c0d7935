"""Kernels, Gram matrices, and the target-side solve operators.

The transform solver never inverts the big regularized scatter matrix
A = c_f I + X S X^T directly when it can help it. With positive per-column
anchor weights the matrix-inversion-lemma route works entirely at
target-sample scale:

    G = (1/c_f) K - (1/c_f^2) K (S^-1 + K/c_f)^-1 K
    T = (1/c_f) I - (1/c_f^2) K (S^-1 + K/c_f)^-1

where K is the Gram matrix of the augmented target samples and S the
diagonal of per-column weight sums. T satisfies T K = G and, in linear
mode, T X^T = X^T A^-1, which is what makes kernel prediction and the
high-dimensional regime work without ever touching A.

All kernels are evaluated on augmented vectors (the constant 1 appended).
"""

from dataclasses import dataclass

import numpy as np

from .linalg import NumericalError, cholesky, norm_inf, solve_factored

KERNEL_KINDS = ("linear", "rbf", "poly")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    gamma=None means "resolve to 1/dim at fit time", with dim the augmented
    feature dimension. linear ignores all parameters.
    """

    kind: str = "linear"
    gamma: float | None = None
    coef0: float = 1.0
    degree: int = 3

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(
                f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}"
            )
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.kind == "poly" and self.degree < 1:
            raise ValueError("degree must be at least 1")

    def resolved(self, dim):
        """Concrete spec with gamma defaulted to 1/dim."""
        gamma = self.gamma if self.gamma is not None else 1.0 / dim
        return KernelSpec(self.kind, gamma, self.coef0, self.degree)


def kernel_eval(spec, x, z):
    """k(x, z) for two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    if x.shape != z.shape:
        raise ValueError(f"vector lengths differ: {x.size} vs {z.size}")
    if spec.kind == "linear":
        return float(x @ z)
    if spec.gamma is None:
        raise ValueError("gamma unresolved; call KernelSpec.resolved first")
    if spec.kind == "rbf":
        d = x - z
        return float(np.exp(-spec.gamma * (d @ d)))
    return float((spec.gamma * (x @ z) + spec.coef0) ** spec.degree)


def cross_gram(spec, columns, other):
    """Kernel matrix k(columns_i, other_j), shape (cols(columns), cols(other))."""
    columns = np.asarray(columns, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    if columns.shape[0] != other.shape[0]:
        raise ValueError("sample dimensions differ between the two sets")
    inner = columns.T @ other
    if spec.kind == "linear":
        return inner
    if spec.gamma is None:
        raise ValueError("gamma unresolved; call KernelSpec.resolved first")
    if spec.kind == "rbf":
        sq_a = np.sum(columns * columns, axis=0)
        sq_b = np.sum(other * other, axis=0)
        d2 = np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * inner, 0.0)
        return np.exp(-spec.gamma * d2)
    return (spec.gamma * inner + spec.coef0) ** spec.degree


def gram(spec, columns):
    """Symmetric Gram matrix of one sample set (columns are samples).

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric regardless of floating-point summation order.
    """
    raw = cross_gram(spec, columns, columns)
    upper = np.triu(raw, 1)
    return upper + upper.T + np.diag(np.diag(raw))


def spd_solve(matrix, rhs):
    """Cholesky solve with an escalating diagonal jitter fallback.

    Tries the bare factorization first, then three retries with jitter
    1e-10 * trace/n scaled by successive powers of 10. Returns
    (solution, jitter_used); raises NumericalError when all attempts fail.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    sym = 0.5 * (matrix + matrix.T)
    trace = float(np.trace(sym))
    base = 1e-10 * (trace / n if trace > 0 else 1.0)
    jitters = [0.0, base, 10.0 * base, 100.0 * base]
    last = None
    for jitter in jitters:
        try:
            factor = cholesky(sym + jitter * np.eye(n))
        except NumericalError as exc:
            last = exc
            continue
        return solve_factored(factor, rhs), jitter
    raise NumericalError(
        f"symmetric positive definite solve failed after jitter retries: {last}"
    )


@dataclass(eq=False)
class GOperator:
    """The target-side quadratic-form matrix G plus provenance.

    case_used records which route produced it; jitter is the diagonal
    shift the inner solve needed (0.0 when clean); asymmetry is the
    pre-symmetrization defect, kept as an instability signal.
    """

    matrix: np.ndarray
    case_used: str
    jitter: float = 0.0
    asymmetry: float = 0.0

    @property
    def unstable(self):
        return self.jitter > 0 or self.asymmetry > 1e-8 * (1.0 + norm_inf(self.matrix))


@dataclass(eq=False)
class TOperator:
    """Target-side solve operator T with the route and jitter that built it."""

    matrix: np.ndarray
    case_used: str
    jitter: float = 0.0


def _woodbury_core(gram_t, col_sums, c_f):
    """Solve (S^-1 + K/c_f) Z = K, returning (Z, jitter)."""
    inner = np.diag(1.0 / col_sums) + gram_t / c_f
    return spd_solve(inner, gram_t)


def compute_G(gram_t, col_sums, c_f, x_t_aug=None):
    """Assemble G, choosing the cheapest valid route.

    All column sums positive: the matrix-inversion-lemma route (never
    forms A). Otherwise a provided augmented target matrix (linear mode)
    selects the dense route; all-zero weights reduce it to G = K/c_f
    since A is then a multiple of the identity. Kernel mode with a zero
    column sum has no valid route: use c_d > 0 and make sure every target
    label also appears in the source.
    """
    gram_t = np.asarray(gram_t, dtype=np.float64)
    col_sums = np.asarray(col_sums, dtype=np.float64).ravel()
    if c_f <= 0:
        raise ValueError(f"c_f must be positive, got {c_f}")
    if gram_t.shape[0] != gram_t.shape[1] or gram_t.shape[0] != col_sums.size:
        raise ValueError("gram and column sums sizes disagree")
    if np.any(col_sums < 0):
        raise ValueError("column sums must be non-negative")
    if np.all(col_sums > 0):
        z, jitter = _woodbury_core(gram_t, col_sums, c_f)
        raw = gram_t / c_f - (gram_t @ z) / (c_f * c_f)
        case = "woodbury"
    elif x_t_aug is None:
        raise ValueError(
            "kernel mode needs every anchor column sum positive; run with "
            "c_d > 0 and target labels covered by the source label set"
        )
    elif np.all(col_sums == 0):
        raw = gram_t / c_f
        jitter = 0.0
        case = "dense_A"
    else:
        x_t_aug = np.asarray(x_t_aug, dtype=np.float64)
        a = c_f * np.eye(x_t_aug.shape[0]) + (x_t_aug * col_sums) @ x_t_aug.T
        solved, jitter = spd_solve(a, x_t_aug)
        raw = x_t_aug.T @ solved
        case = "dense_A"
    asymmetry = norm_inf(raw - raw.T)
    return GOperator(0.5 * (raw + raw.T), case, jitter, asymmetry)


def inverse_gram_G(gram_t, col_sums, c_f):
    """Cross-check route requiring an invertible Gram: (c_f K^-1 + S)^-1.

    Only valid when gram_t is nonsingular; used by tests to corroborate
    the production routes, never selected by compute_G.
    """
    gram_t = np.asarray(gram_t, dtype=np.float64)
    col_sums = np.asarray(col_sums, dtype=np.float64).ravel()
    inv_k = np.linalg.inv(gram_t)
    raw = np.linalg.inv(c_f * inv_k + np.diag(col_sums))
    asymmetry = norm_inf(raw - raw.T)
    return GOperator(0.5 * (raw + raw.T), "inverse_gram", 0.0, asymmetry)


def compute_T(gram_t, col_sums, c_f):
    """Matrix-inversion-lemma form of T; needs all column sums positive."""
    gram_t = np.asarray(gram_t, dtype=np.float64)
    col_sums = np.asarray(col_sums, dtype=np.float64).ravel()
    if c_f <= 0:
        raise ValueError(f"c_f must be positive, got {c_f}")
    if np.any(col_sums <= 0):
        raise ValueError("T needs every anchor column sum positive")
    z, jitter = _woodbury_core(gram_t, col_sums, c_f)
    m = gram_t.shape[0]
    t = np.eye(m) / c_f - z.T / (c_f * c_f)
    return TOperator(t, "woodbury", jitter)


def target_operator_general(gram_t, col_sums, c_f):
    """T = (c_f I + K diag(s))^-1, valid for any non-negative weights.

    Coincides with compute_T when every weight is positive and with I/c_f
    when all are zero; covers the mixed case (linear mode only callers).
    Falls back to a general LU solve because the system is not symmetric.
    """
    gram_t = np.asarray(gram_t, dtype=np.float64)
    col_sums = np.asarray(col_sums, dtype=np.float64).ravel()
    m = gram_t.shape[0]
    if np.all(col_sums == 0):
        return TOperator(np.eye(m) / c_f, "diagonal", 0.0)
    system = c_f * np.eye(m) + gram_t * col_sums[None, :]
    try:
        t = np.linalg.solve(system, np.eye(m))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"target operator solve failed: {exc}") from None
    return TOperator(t, "general", 0.0)
