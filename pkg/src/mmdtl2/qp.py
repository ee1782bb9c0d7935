"""Box-constrained quadratic program solver for the transform dual.

The dual of the transform step is

    minimize   (1/2) a^T Q a - l^T a    subject to  0 <= a <= upper

with Q positive semidefinite and a single scalar box bound. Projected
cyclic coordinate descent solves it: each coordinate is moved to its
clipped one-dimensional minimum, in ascending order, with the gradient
maintained incrementally. PSD Q makes every zero-diagonal coordinate's
row identically zero, so those coordinates see a constant slope and are
fixed by the sign of -l.
"""

from dataclasses import dataclass, field

import numpy as np

_ZERO_DIAG = 1e-14


@dataclass(eq=False)
class BoxQP:
    """Problem data; quad is symmetrized at construction.

    class_count / target_count / labels_flat are optional block metadata:
    when present (problems assembled from K classes x M samples in k-major
    order) the solution can be reshaped per class.
    """

    quad: np.ndarray
    lin: np.ndarray
    upper: float
    class_count: int | None = None
    target_count: int | None = None
    labels_flat: np.ndarray | None = None

    def __post_init__(self):
        self.quad = np.asarray(self.quad, dtype=np.float64)
        self.lin = np.asarray(self.lin, dtype=np.float64).ravel()
        if self.quad.ndim != 2 or self.quad.shape[0] != self.quad.shape[1]:
            raise ValueError("quadratic term must be a square matrix")
        if self.quad.shape[0] != self.lin.size:
            raise ValueError("quadratic and linear term sizes disagree")
        if not np.all(np.isfinite(self.quad)) or not np.all(np.isfinite(self.lin)):
            raise ValueError("problem data contains non-finite entries")
        if not self.upper > 0:
            raise ValueError(f"upper bound must be positive, got {self.upper}")
        self.quad = 0.5 * (self.quad + self.quad.T)
        if self.labels_flat is not None:
            self.labels_flat = np.asarray(self.labels_flat, dtype=np.float64).ravel()

    @property
    def size(self):
        return self.lin.size


@dataclass(eq=False)
class DualSolution:
    """Solver output.

    a is the flat k-major solution. When the problem carried block
    metadata, lam[m, k] = a[k*M + m] and ups holds the matching +-1 labels
    in the same (target_count x class_count) layout. objectives holds the
    value after each sweep; monotone_violation flags any per-sweep increase
    beyond rounding slack (recorded, not raised).
    """

    a: np.ndarray
    converged: bool
    sweeps: int
    objectives: list = field(default_factory=list)
    lam: np.ndarray | None = None
    ups: np.ndarray | None = None
    monotone_violation: bool = False


def objective_value(problem, a):
    """(1/2) a^T Q a - l^T a, the quantity the solver minimizes."""
    a = np.asarray(a, dtype=np.float64).ravel()
    return float(0.5 * a @ (problem.quad @ a) - problem.lin @ a)


def dual_objective(problem, a):
    """The maximized dual value, i.e. the negated minimization objective."""
    return -objective_value(problem, a)


def solve_box_qp(problem, tol=1e-8, max_sweeps=10000):
    """Cyclic projected coordinate descent from a = 0.

    Stops when no coordinate moved more than tol in a sweep. Hitting
    max_sweeps first is reported through converged=False rather than an
    error; the iterate is still feasible and usable.
    """
    n = problem.size
    q = problem.quad
    lin = problem.lin
    upper = float(problem.upper)
    a = np.zeros(n)
    grad = -lin.copy()
    diag = np.diag(q).copy()
    objectives = []
    converged = False
    violated = False
    sweeps = 0
    prev_obj = None
    for sweeps in range(1, max_sweeps + 1):
        worst = 0.0
        for i in range(n):
            if diag[i] <= _ZERO_DIAG:
                slope = -lin[i]
                new = 0.0 if slope > 0 else (upper if slope < 0 else a[i])
            else:
                new = a[i] - grad[i] / diag[i]
                new = min(max(new, 0.0), upper)
            step = new - a[i]
            if step != 0.0:
                a[i] = new
                grad += step * q[:, i]
                worst = max(worst, abs(step))
        obj = float(0.5 * a @ (grad - lin))
        objectives.append(obj)
        if prev_obj is not None and obj > prev_obj + 1e-9 * (1.0 + abs(prev_obj)):
            violated = True
        prev_obj = obj
        if worst < tol:
            converged = True
            break
    lam = ups = None
    if problem.class_count and problem.target_count:
        k, m = problem.class_count, problem.target_count
        lam = np.ascontiguousarray(a.reshape(k, m).T)
        if problem.labels_flat is not None:
            ups = np.ascontiguousarray(problem.labels_flat.reshape(k, m).T)
    return DualSolution(a, converged, sweeps, objectives, lam, ups, violated)


def kkt_residual(problem, a):
    """Infinity norm of the projected optimality residual.

    Interior coordinates contribute |g|, coordinates at the lower bound
    max(0, -g), coordinates at the upper bound max(0, g). Infeasible
    points are rejected.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size != problem.size:
        raise ValueError("solution size does not match the problem")
    upper = float(problem.upper)
    slack = 1e-12 * (1.0 + upper)
    if np.any(a < -slack) or np.any(a > upper + slack):
        raise ValueError("point is outside the box")
    grad = problem.quad @ a - problem.lin
    edge = 1e-9 * upper
    at_lo = a <= edge
    at_hi = a >= upper - edge
    res = np.abs(grad)
    res = np.where(at_lo, np.maximum(0.0, -grad), res)
    res = np.where(at_hi, np.maximum(0.0, grad), res)
    res = np.where(at_lo & at_hi, np.minimum(np.maximum(0.0, -grad), np.maximum(0.0, grad)), res)
    return float(np.max(res)) if res.size else 0.0
