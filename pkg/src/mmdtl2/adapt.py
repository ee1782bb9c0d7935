"""Alternating optimization of the domain transform and the classifiers.

One round of the loop solves the transform step (a box QP over the dual
variables, assembled from the classifier stack and the target-side
operators) and retrains the one-vs-rest classifiers on the source set
joined with the freshly transformed target samples.

The transform W (source_dim x target_dim+1, applied to augmented target
vectors) is never formed during fitting or prediction. Everything runs
through the factored form

    W x = R T kvec(x)

with R = X^s S + Theta (Ups o Lam)^T collecting the source-side terms,
T the target-side solve operator, and kvec(x) the kernel evaluations of
x against the stored target samples. An explicit W exists only through
materialize_w, and only for the linear kernel.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import augment_columns, build_weight_model, ovr_labels
from .kernels import (
    KernelSpec,
    compute_G,
    compute_T,
    cross_gram,
    gram,
    target_operator_general,
)
from .linalg import norm_inf
from .qp import BoxQP, dual_objective, kkt_residual, solve_box_qp
from .svm import (
    HyperplaneStack,
    WeightedTrainSet,
    hinge_loss_target,
    init_source_svm,
    train_weighted_ovr,
)

MODEL_MAGIC = "MMDTL2-MODEL v1"
MODES = ("mmdtl2", "mmdt")

# Side length above which a square allocation could only be the flattened
# transform operator (or something equally pathological); guards activate
# past it and stay dormant at desk scale where such sides are legitimate.
_GUARD_FLOOR = 100_000


class AllocationGuard:
    """Tripwire against building the flattened-operator square.

    The transform step's normal-equation operator is a square of side
    source_dim * (target_dim + 1); the factored path must never allocate
    anything that large. check() is called with every planned 2-D shape.
    """

    def __init__(self, forbidden_side):
        self.forbidden_side = int(forbidden_side)
        self.active = self.forbidden_side >= _GUARD_FLOOR

    def check(self, rows, cols):
        if self.active and min(rows, cols) >= self.forbidden_side:
            raise RuntimeError(
                f"allocation guard: planned {rows}x{cols} array reaches the "
                f"forbidden operator side {self.forbidden_side}"
            )
        return rows, cols


@dataclass
class AdaptParams:
    """Knobs for fit().

    c_f weighs the transform regularizer, c_t the target hinge in the
    classifier step, c_s the source hinge, c_d the per-pair anchoring
    weight. c_box is the hinge weight of the transform step (the dual box
    bound); it defaults to c_t and is exposed separately for research use.
    mode "mmdt" pins c_f = 1 and c_d = 0 whatever the fields say.
    explicit_linear routes the fit through the dense assembly and a
    materialized W (linear kernel only, small problems).
    """

    c_f: float = 0.1
    c_t: float = 0.1
    c_s: float = 0.1
    c_d: float = 0.1
    c_box: float | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    iterations: int = 5
    qp_tol: float = 1e-8
    qp_max_sweeps: int = 10000
    svm_tol: float = 1e-6
    svm_max_sweeps: int = 1000
    seed: int = 0
    mode: str = "mmdtl2"
    explicit_linear: bool = False

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("c_f", "c_t", "c_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.c_d < 0:
            raise ValueError("c_d must be non-negative")
        if self.c_box is not None and self.c_box <= 0:
            raise ValueError("c_box must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.qp_tol <= 0 or self.svm_tol <= 0:
            raise ValueError("tolerances must be positive")

    def resolved(self):
        """Apply mode pinning and the c_box default."""
        self.validate()
        out = replace(self)
        if out.mode == "mmdt":
            out = replace(out, c_f=1.0, c_d=0.0)
        if out.c_box is None:
            out = replace(out, c_box=out.c_t)
        return out


@dataclass(eq=False)
class TransformModel:
    """Factored transform: columns of targets anchor the kernel expansion.

    source_factor is R (source_dim x M), target_operator is T (M x M),
    targets the raw (unaugmented) target samples. train_gram caches the
    Gram matrix of the augmented targets. w_explicit is only set by
    explicit-linear fits.
    """

    source_factor: np.ndarray
    target_operator: np.ndarray
    targets: np.ndarray
    kernel: KernelSpec
    train_gram: np.ndarray | None = None
    w_explicit: np.ndarray | None = None

    def __post_init__(self):
        self._targets_aug = augment_columns(self.targets)
        if self.train_gram is None:
            self.train_gram = gram(self.kernel, self._targets_aug)
        self._rt = self.source_factor @ self.target_operator

    @property
    def source_dim(self):
        return self.source_factor.shape[0]

    @property
    def target_dim(self):
        return self.targets.shape[0]

    @property
    def anchor_count(self):
        return self.targets.shape[1]


def transform_columns(model, columns):
    """Map raw target-domain samples (dim x n) into the source space."""
    columns = np.asarray(columns, dtype=np.float64)
    if columns.shape[0] != model.target_dim:
        raise ValueError(
            f"sample dim {columns.shape[0]} does not match model "
            f"target dim {model.target_dim}"
        )
    aug = augment_columns(columns)
    if model.w_explicit is not None:
        return model.w_explicit @ aug
    kmat = cross_gram(model.kernel, model._targets_aug, aug)
    return model._rt @ kmat


def transform_sample(model, x):
    """Map one raw target-domain sample into the source space."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return transform_columns(model, x[:, None])[:, 0]


def training_transforms(model):
    """Transformed anchors themselves: R T K, one column per target sample."""
    if model.w_explicit is not None:
        return model.w_explicit @ model._targets_aug
    return model._rt @ model.train_gram


def materialize_w(model):
    """Explicit W (source_dim x target_dim+1); linear kernel only."""
    if model.kernel.kind != "linear":
        raise ValueError(
            "an explicit transform matrix only exists for the linear kernel"
        )
    if model.w_explicit is not None:
        return model.w_explicit
    return model._rt @ model._targets_aug.T


def build_dual(theta, source, targets_aug, labels_ovr, weights, g_op, c_box):
    """Assemble the transform-step dual as a BoxQP.

    The quadratic term is written blockwise: block (k, k') is
    (theta_k . theta_k') G, then both axes are scaled by the k-major label
    signs. The linear term is 1 - y o b_tilde - y o vec(Theta^T X^s S G).
    The full class-by-class Kronecker product is never formed as such.
    """
    k = theta.class_count
    m = labels_ovr.count
    if targets_aug.shape[1] != m:
        raise ValueError("target count and label matrix disagree")
    if labels_ovr.class_count != k:
        raise ValueError("classifier stack and label matrix class counts disagree")
    g = g_op.matrix
    theta_gram = theta.weights.T @ theta.weights
    quad = np.empty((k * m, k * m))
    for r in range(k):
        for c in range(k):
            quad[r * m : (r + 1) * m, c * m : (c + 1) * m] = theta_gram[r, c] * g
    y = labels_ovr.flat
    quad *= y[:, None] * y[None, :]
    xs_s = source.features @ weights.matrix
    vec_term = (theta.weights.T @ (xs_s @ g)).ravel()
    lin = 1.0 - y * theta.bias_tiled(m) - y * vec_term
    return BoxQP(quad, lin, c_box, class_count=k, target_count=m, labels_flat=y)


@dataclass
class WStepInfo:
    """Diagnostics from one transform-step solve."""

    dual_value: float
    constant: float
    g_case: str
    jitter: float
    kkt: float = 0.0
    instability: list = field(default_factory=list)

    @property
    def primal_value(self):
        """Optimum of the transform step (dual value plus dropped constant)."""
        return self.dual_value + self.constant


def solve_w_subproblem(theta, source, target, labels_ovr, weights, params):
    """One transform step: returns (DualSolution, TransformModel, WStepInfo).

    Chooses the factored route whenever every anchor column sum is
    positive; explicit_linear forces the dense assembly instead. The
    allocation guard vets every planned array against the flattened
    operator side source_dim * (target_dim + 1).
    """
    params = params.resolved()
    l_s, l_t, m = source.dim, target.dim, target.count
    k = labels_ovr.class_count
    guard = AllocationGuard(l_s * (l_t + 1))
    kspec = params.kernel.resolved(l_t + 1)
    if params.explicit_linear and kspec.kind != "linear":
        raise ValueError("explicit linear mode needs the linear kernel")
    x_t_aug = augment_columns(target.features)
    guard.check(m, m)
    gram_t = gram(kspec, x_t_aug)
    instability = []

    if weights.all_positive_cols and not params.explicit_linear:
        g_op = compute_G(gram_t, weights.col_sums, params.c_f)
    elif kspec.kind == "linear":
        guard.check(l_t + 1, l_t + 1)
        g_op = compute_G(gram_t, weights.col_sums, params.c_f, x_t_aug)
    else:
        # Raises the instructive error for kernel mode with uncovered labels.
        g_op = compute_G(gram_t, weights.col_sums, params.c_f)
    if g_op.unstable:
        instability.append(f"g_assembly jitter={g_op.jitter:g} asym={g_op.asymmetry:g}")
    # Negative diagonal in G is impossible in exact arithmetic (it is a
    # Gram-like quadratic form), so any sign flip marks cancellation loss.
    g_diag_min = float(np.min(np.diagonal(g_op.matrix)))
    if g_diag_min < -1e-12 * (1.0 + norm_inf(g_op.matrix)):
        instability.append(f"g_negative_diagonal min={g_diag_min:g}")

    if weights.all_positive_cols:
        t_op = compute_T(gram_t, weights.col_sums, params.c_f)
    else:
        t_op = target_operator_general(gram_t, weights.col_sums, params.c_f)
    if t_op.jitter > 0:
        instability.append(f"t_assembly jitter={t_op.jitter:g}")

    guard.check(k * m, k * m)
    problem = build_dual(theta, source, x_t_aug, labels_ovr, weights, g_op, params.c_box)
    solution = solve_box_qp(problem, params.qp_tol, params.qp_max_sweeps)
    if not solution.converged:
        instability.append(f"qp_not_converged sweeps={solution.sweeps}")
    if solution.monotone_violation:
        instability.append("qp_monotonicity")

    guard.check(l_s, m)
    xs_s = source.features @ weights.matrix
    r = xs_s + theta.weights @ (solution.ups * solution.lam).T
    w_explicit = None
    if params.explicit_linear:
        w_explicit = (r @ t_op.matrix) @ x_t_aug.T
    tmodel = TransformModel(
        r, t_op.matrix, target.features, kspec, train_gram=gram_t, w_explicit=w_explicit
    )

    # Constant dropped by the dual objective: (1/2) s - (1/2) q^T V^-1 q,
    # with the second piece reduced to an M x M trace.
    source_sq = np.einsum("ij,ij->j", source.features, source.features)
    s_const = float(weights.row_sums @ source_sq)
    qvq = float(np.sum(g_op.matrix * (xs_s.T @ xs_s)))
    info = WStepInfo(
        dual_value=dual_objective(problem, solution.a),
        constant=0.5 * s_const - 0.5 * qvq,
        g_case=g_op.case_used,
        jitter=max(g_op.jitter, t_op.jitter),
        kkt=kkt_residual(problem, solution.a),
        instability=instability,
    )
    return solution, tmodel, info


@dataclass
class IterationStats:
    """Per-outer-iteration log entry."""

    index: int
    w_objective: float
    w_objective_at_prev: float | None
    dual_value: float
    primal_value: float
    qp_sweeps: int
    qp_converged: bool
    g_case: str
    jitter: float
    instability: list


@dataclass
class FitReport:
    iterations: list
    early_stopped: bool
    qp_solves: int
    svm_trains: int

    @property
    def instability_events(self):
        return [e for it in self.iterations for e in it.instability]


@dataclass(eq=False)
class AdaptedModel:
    """Fitted transform plus classifier stack, ready for prediction."""

    transform: TransformModel
    hyperplanes: HyperplaneStack
    class_count: int
    mode: str
    params: AdaptParams
    report: FitReport | None = None

    @property
    def source_dim(self):
        return self.transform.source_dim

    @property
    def target_dim(self):
        return self.transform.target_dim


def _w_objective_terms(transformed, weights, source, s_const):
    """Anchoring term (1/2) sum s_nm |t_m - x_n|^2, vectorized."""
    t_sq = np.einsum("ij,ij->j", transformed, transformed)
    cross = np.sum(weights.matrix * (source.features.T @ transformed))
    return 0.5 * (float(weights.col_sums @ t_sq) - 2.0 * cross + s_const)


def fit(source, target, params):
    """Alternate transform and classifier steps; returns an AdaptedModel.

    Each outer iteration runs exactly one transform solve and one
    classifier training. Stops early once the transform-step optimum
    changes by less than 1e-4 in relative terms.
    """
    params = params.resolved()
    if source.count < 1 or target.count < 1:
        raise ValueError("both datasets must be non-empty")
    k = max(source.class_count, target.class_count)
    if k < 2:
        raise ValueError("need at least 2 classes")
    labels_ovr = ovr_labels(target.labels, k)
    weights = build_weight_model(source.labels, target.labels, params.c_d)
    theta = init_source_svm(
        source, params.c_s, params.svm_tol, params.svm_max_sweeps, class_count=k
    )
    svm_trains = 1
    qp_solves = 0

    source_sq = np.einsum("ij,ij->j", source.features, source.features)
    s_const = float(weights.row_sums @ source_sq)

    history = []
    early = False
    tmodel = None
    prev = None  # (w_objective, transformed, fro2, anchor_term)
    for index in range(1, params.iterations + 1):
        solution, tmodel, info = solve_w_subproblem(
            theta, source, target, labels_ovr, weights, params
        )
        qp_solves += 1
        transformed = training_transforms(tmodel)
        if tmodel.w_explicit is not None:
            fro2 = float(np.sum(tmodel.w_explicit * tmodel.w_explicit))
        else:
            fro2 = float(np.sum(tmodel._rt * transformed))
        anchor = _w_objective_terms(transformed, weights, source, s_const)
        hinge = hinge_loss_target(theta, transformed, labels_ovr)
        w_obj = 0.5 * params.c_f * fro2 + params.c_box * hinge + anchor

        # The fresh W globally minimizes the current subproblem, so its
        # objective cannot exceed the previous iterate's under this theta.
        w_obj_at_prev = None
        if prev is not None:
            _, p_transformed, p_fro2, p_anchor = prev
            p_hinge = hinge_loss_target(theta, p_transformed, labels_ovr)
            w_obj_at_prev = 0.5 * params.c_f * p_fro2 + params.c_box * p_hinge + p_anchor

        history.append(
            IterationStats(
                index=index,
                w_objective=w_obj,
                w_objective_at_prev=w_obj_at_prev,
                dual_value=info.dual_value,
                primal_value=info.primal_value,
                qp_sweeps=solution.sweeps,
                qp_converged=solution.converged,
                g_case=info.g_case,
                jitter=info.jitter,
                instability=list(info.instability),
            )
        )

        union = WeightedTrainSet(
            np.hstack([source.features, transformed]),
            np.concatenate([source.labels, target.labels]),
            np.concatenate(
                [np.full(source.count, params.c_s), np.full(target.count, params.c_t)]
            ),
            k,
        )
        theta = train_weighted_ovr(union, params.svm_tol, params.svm_max_sweeps)
        svm_trains += 1

        if prev is not None:
            prev_obj = prev[0]
            if abs(w_obj - prev_obj) < 1e-4 * (1.0 + abs(prev_obj)):
                early = True
                break
        prev = (w_obj, transformed, fro2, anchor)

    report = FitReport(history, early, qp_solves, svm_trains)
    return AdaptedModel(tmodel, theta, k, params.mode, params, report)


def decision_columns(model, columns):
    """Per-class scores (K x n) for raw target-domain samples."""
    mapped = transform_columns(model.transform, columns)
    return model.hyperplanes.weights.T @ mapped + model.hyperplanes.bias[:, None]


def predict_columns(model, columns):
    """Class labels for raw target-domain samples (ties pick the smallest id)."""
    scores = decision_columns(model, columns)
    return np.argmax(scores, axis=0).astype(np.int64) + 1


def predict(model, x):
    """Class label for one raw target-domain sample."""
    x = np.asarray(x, dtype=np.float64).ravel()
    return int(predict_columns(model, x[:, None])[0])


def _format_row(values):
    return " ".join(repr(float(v)) for v in values)


def _write_matrix(lines, header, matrix):
    lines.append(header)
    for row in matrix:
        lines.append(_format_row(row))


def save_model(model, path):
    """Serialize to the versioned text format; floats keep full precision."""
    t = model.transform
    l_s, l_t, m = t.source_dim, t.target_dim, t.anchor_count
    k = model.class_count
    p = model.params
    lines = [MODEL_MAGIC, f"dims {l_s} {l_t} {m} {k}", f"mode {model.mode}"]
    ker = t.kernel
    lines.append(
        f"kernel {ker.kind} {repr(float(ker.gamma))} "
        f"{repr(float(ker.coef0))} {int(ker.degree)}"
    )
    _write_matrix(lines, "Theta", model.hyperplanes.weights)
    lines.append("bias")
    lines.append(_format_row(model.hyperplanes.bias))
    _write_matrix(lines, "R", t.source_factor)
    _write_matrix(lines, "T", t.target_operator)
    _write_matrix(lines, "targets", t.targets)
    lines.append("params")
    lines.append(f"cf {repr(float(p.c_f))}")
    lines.append(f"ct {repr(float(p.c_t))}")
    lines.append(f"cs {repr(float(p.c_s))}")
    lines.append(f"cd {repr(float(p.c_d))}")
    lines.append(f"cbox {repr(float(p.c_box if p.c_box is not None else p.c_t))}")
    lines.append(f"iterations {int(p.iterations)}")
    lines.append(f"qp_tol {repr(float(p.qp_tol))}")
    lines.append(f"svm_tol {repr(float(p.svm_tol))}")
    lines.append(f"seed {int(p.seed)}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, lines):
        self.lines = lines
        self.pos = 0

    def next(self):
        if self.pos >= len(self.lines):
            raise ValueError("model file ended early")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, tag):
        line = self.next()
        if line != tag:
            raise ValueError(f"expected {tag!r} in model file, found {line!r}")

    def matrix(self, tag, rows, cols):
        self.expect(tag)
        out = np.empty((rows, cols))
        for r in range(rows):
            cells = self.next().split()
            if len(cells) != cols:
                raise ValueError(f"{tag} row {r + 1}: expected {cols} values")
            out[r] = [float(c) for c in cells]
        return out


def load_model(path):
    """Read a model file written by save_model; unknown versions rejected."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.rstrip("\n").rstrip("\r") for line in handle]
    lines = [line for line in lines if line != ""]
    reader = _Reader(lines)
    magic = reader.next()
    if magic != MODEL_MAGIC:
        raise ValueError(f"unsupported model version: {magic!r}")
    tag, *dims = reader.next().split()
    if tag != "dims" or len(dims) != 4:
        raise ValueError("malformed dims line")
    l_s, l_t, m, k = (int(d) for d in dims)
    mode_cells = reader.next().split()
    if len(mode_cells) != 2 or mode_cells[0] != "mode" or mode_cells[1] not in MODES:
        raise ValueError(f"malformed mode line: {mode_cells!r}")
    mode = mode_cells[1]
    cells = reader.next().split()
    if len(cells) != 5 or cells[0] != "kernel":
        raise ValueError("malformed kernel line")
    kspec = KernelSpec(cells[1], float(cells[2]), float(cells[3]), int(cells[4]))
    theta = reader.matrix("Theta", l_s, k)
    reader.expect("bias")
    bias = np.array([float(c) for c in reader.next().split()])
    if bias.size != k:
        raise ValueError("bias length does not match class count")
    r = reader.matrix("R", l_s, m)
    t = reader.matrix("T", m, m)
    targets = reader.matrix("targets", l_t, m)
    reader.expect("params")
    raw = {}
    while reader.pos < len(lines):
        cells = reader.next().split()
        if len(cells) != 2:
            raise ValueError(f"malformed params line: {cells!r}")
        raw[cells[0]] = cells[1]
    params = AdaptParams(
        c_f=float(raw["cf"]),
        c_t=float(raw["ct"]),
        c_s=float(raw["cs"]),
        c_d=float(raw["cd"]),
        c_box=float(raw["cbox"]),
        kernel=kspec,
        iterations=int(raw["iterations"]),
        qp_tol=float(raw["qp_tol"]),
        svm_tol=float(raw["svm_tol"]),
        seed=int(raw["seed"]),
        mode=mode,
    )
    tmodel = TransformModel(r, t, targets, kspec)
    stack = HyperplaneStack(theta, bias)
    return AdaptedModel(tmodel, stack, k, mode, params)
