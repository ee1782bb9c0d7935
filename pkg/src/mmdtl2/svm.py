"""Weighted one-vs-rest linear SVMs via dual coordinate descent.

Each class k gets an independent binary problem with signs +1 for class k
and -1 for the rest. The bias is handled by augmentation: the solver works
on (x; 1), so the bias is part of the regularized weight vector and every
per-sample diagonal entry is at least 1, which keeps the coordinate update
well defined. Per-sample costs C_i enter as individual box bounds on the
dual variables.

The sweep order is frozen: one permutation drawn with seed 0, then cyclic
ascending passes over it. The optimum is unique (strict convexity in the
augmented weight vector), so the converged result does not depend on the
order samples arrive in.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import augment_columns, ovr_labels


@dataclass(eq=False)
class WeightedTrainSet:
    """Samples (dim x count, columns are samples) with per-sample costs."""

    features: np.ndarray
    labels: np.ndarray
    per_sample_c: np.ndarray
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        self.per_sample_c = np.asarray(self.per_sample_c, dtype=np.float64).ravel()
        if self.features.shape[1] != self.labels.size:
            raise ValueError("feature columns and labels disagree")
        if self.per_sample_c.size != self.labels.size:
            raise ValueError("per-sample costs and labels disagree")
        if self.labels.size == 0:
            raise ValueError("cannot train on zero samples")
        if np.any(self.per_sample_c <= 0):
            raise ValueError("per-sample costs must be positive")
        if self.class_count < 2:
            raise ValueError("one-vs-rest needs at least 2 classes")
        if self.labels.min() < 1 or self.labels.max() > self.class_count:
            raise ValueError(f"labels must lie in 1..{self.class_count}")


@dataclass(eq=False)
class HyperplaneStack:
    """K hyperplanes in feature space: weights (dim x K) and bias (K,)."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def class_count(self):
        return self.weights.shape[1]

    @property
    def dim(self):
        return self.weights.shape[0]

    def bias_tiled(self, count):
        """Bias repeated per target sample in k-major order."""
        return np.repeat(self.bias, count)


def _solve_binary(rows, signs, upper, tol, max_sweeps):
    """Dual coordinate descent for one binary problem.

    rows holds augmented samples as rows (count x dim+1). Returns the
    augmented weight vector.
    """
    n = rows.shape[0]
    qdiag = np.einsum("ij,ij->i", rows, rows)
    order = np.random.Generator(np.random.PCG64(0)).permutation(n)
    alpha = np.zeros(n)
    w = np.zeros(rows.shape[1])
    for _ in range(max_sweeps):
        worst = 0.0
        for i in order:
            x = rows[i]
            grad = signs[i] * (w @ x) - 1.0
            new = alpha[i] - grad / qdiag[i]
            new = min(max(new, 0.0), upper[i])
            step = new - alpha[i]
            if step != 0.0:
                alpha[i] = new
                w += (step * signs[i]) * x
                worst = max(worst, abs(step))
        if worst < tol:
            break
    return w, alpha


def train_weighted_ovr(train, tol=1e-6, max_sweeps=1000):
    """Train one hyperplane per class; returns a HyperplaneStack.

    A class whose samples all carry the same sign still gets a hyperplane
    (the regularized degenerate optimum); that is normal for splits that
    lost a class.
    """
    rows = np.ascontiguousarray(augment_columns(train.features).T)
    sign_matrix = ovr_labels(train.labels, train.class_count).signs
    dim = train.features.shape[0]
    weights = np.empty((dim, train.class_count))
    bias = np.empty(train.class_count)
    for k in range(train.class_count):
        w, _ = _solve_binary(
            rows, sign_matrix[k], train.per_sample_c, tol, max_sweeps
        )
        weights[:, k] = w[:dim]
        bias[k] = w[dim]
    return HyperplaneStack(weights, bias)


def init_source_svm(source, c_s, tol=1e-6, max_sweeps=1000, class_count=None):
    """Source-only starting classifier, every sample at cost c_s."""
    if c_s <= 0:
        raise ValueError(f"c_s must be positive, got {c_s}")
    train = WeightedTrainSet(
        source.features,
        source.labels,
        np.full(source.count, float(c_s)),
        class_count if class_count is not None else source.class_count,
    )
    return train_weighted_ovr(train, tol, max_sweeps)


def decision_values(stack, x):
    """Per-class scores for one feature-space sample."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != stack.dim:
        raise ValueError(f"sample dim {x.size} does not match {stack.dim}")
    return stack.weights.T @ x + stack.bias


def decision_matrix(stack, columns):
    """Per-class scores for stacked samples; shape (K, count)."""
    return stack.weights.T @ columns + stack.bias[:, None]


def hinge_total(stack, columns, sign_matrix):
    """Sum of one-vs-rest hinge terms max(0, 1 - y_km score_km)."""
    margins = sign_matrix * decision_matrix(stack, columns)
    return float(np.sum(np.maximum(0.0, 1.0 - margins)))


def hinge_loss_target(stack, transformed, labels_ovr):
    """Hinge sum over transformed target samples (columns, feature space)."""
    return hinge_total(stack, transformed, labels_ovr.signs)


def hinge_loss_source(stack, source):
    """Hinge sum over the source set with its own label signs."""
    signs = ovr_labels(source.labels, source.class_count).signs
    return hinge_total(stack, source.features, signs)
