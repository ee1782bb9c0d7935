"""Dense reference constructions that certify the factored solver paths.

This module is test support, not shipped API: it builds the flattened
transform-step objects (the stacked operator V, the weighted cross vector
q, the per-class feature stack Phi) directly, at sizes where that is
affordable, and measures how far the production operators deviate from
them. Every identity the compact path relies on appears here once, under
a grep-able name:

    l2_quadratic_form   anchoring term as a quadratic form in vec(W)
    margin_linearization   per-class margins written against vec(W)
    gram_factorization  Phi^T V^-1 Phi against the class-gram times G
    cross_vec_row       q^T V^-1 Phi against vec(Theta^T X^s S G)
    kron_solve_columns  V^-1 Phi against the columnwise split solve
    w_retrieval         V-solve recovery of W against the factored form
    primal_two_forms    canonical QP objective against the direct one
    duality_gap         direct primal at the retrieved W minus the dual

All deviations are reported relative: max|diff| / (1 + scale).
"""

from dataclasses import dataclass

import numpy as np

from .adapt import solve_w_subproblem, training_transforms
from .dataset import augment_columns, build_weight_model, ovr_labels
from .kernels import compute_G

# Dense assemblies grow with the square of source_dim * (target_dim + 1);
# refuse anything past this side to keep the oracle honest about its scale.
MAX_DENSE_SIDE = 64


def vec_op(matrix):
    """Row-major flattening of a matrix into a vector."""
    return np.asarray(matrix, dtype=np.float64).reshape(-1)


def unvec(vector, rows, cols):
    """Inverse of vec_op for the given shape."""
    vector = np.asarray(vector, dtype=np.float64).ravel()
    if vector.size != rows * cols:
        raise ValueError(f"cannot reshape {vector.size} values to {rows}x{cols}")
    return vector.reshape(rows, cols)


def u_matrix(x_aug, source_dim):
    """Block-diagonal lift of one augmented sample's outer product."""
    x_aug = np.asarray(x_aug, dtype=np.float64).ravel()
    return np.kron(np.eye(source_dim), np.outer(x_aug, x_aug))


@dataclass(eq=False)
class PrimalAssembly:
    """Dense transform-step objects for one instance."""

    v: np.ndarray
    q: np.ndarray
    s: float
    phi: np.ndarray
    y_flat: np.ndarray
    b_tilde: np.ndarray
    a_matrix: np.ndarray
    x_t_aug: np.ndarray
    source_dim: int
    target_dim: int


def build_assembly(theta, source, target, weights, c_f):
    """Construct V, q, s, Phi and friends densely.

    Guarded: source_dim * (target_dim + 1) must stay at or below
    MAX_DENSE_SIDE.
    """
    l_s, l_t, m = source.dim, target.dim, target.count
    side = l_s * (l_t + 1)
    if side > MAX_DENSE_SIDE:
        raise ValueError(
            f"dense assembly side {side} exceeds the oracle cap {MAX_DENSE_SIDE}"
        )
    k = theta.class_count
    x_t_aug = augment_columns(target.features)
    scatter = (x_t_aug * weights.col_sums) @ x_t_aug.T
    a_matrix = c_f * np.eye(l_t + 1) + scatter
    v = np.kron(np.eye(l_s), a_matrix)
    q = vec_op(source.features @ weights.matrix @ x_t_aug.T)
    source_sq = np.einsum("ij,ij->j", source.features, source.features)
    s = float(weights.row_sums @ source_sq)
    phi = np.empty((side, k * m))
    for kk in range(k):
        for mm in range(m):
            phi[:, kk * m + mm] = vec_op(
                np.outer(theta.weights[:, kk], x_t_aug[:, mm])
            )
    labels_ovr = ovr_labels(target.labels, k)
    return PrimalAssembly(
        v=v,
        q=q,
        s=s,
        phi=phi,
        y_flat=labels_ovr.flat,
        b_tilde=theta.bias_tiled(m),
        a_matrix=a_matrix,
        x_t_aug=x_t_aug,
        source_dim=l_s,
        target_dim=l_t,
    )


def anchoring_term(w_matrix, source, x_t_aug, weights):
    """Direct evaluation of (1/2) sum_nm s_nm |W xhat_m - x_n|^2."""
    mapped = w_matrix @ x_t_aug
    total = 0.0
    for n in range(source.count):
        diff = mapped - source.features[:, [n]]
        total += float(weights.matrix[n] @ np.einsum("ij,ij->j", diff, diff))
    return 0.5 * total


def hinge_slacks(theta, w_matrix, x_t_aug, labels_ovr):
    """Slack matrix xi[k, m] = max(0, 1 - y_km (theta_k . W xhat_m + b_k))."""
    scores = theta.weights.T @ (w_matrix @ x_t_aug) + theta.bias[:, None]
    return np.maximum(0.0, 1.0 - labels_ovr.signs * scores)


def primal_canonical(assembly, w_vec, slacks, c_box):
    """Canonical QP objective at (vec(W), xi)."""
    return float(
        0.5 * w_vec @ (assembly.v @ w_vec)
        - assembly.q @ w_vec
        + 0.5 * assembly.s
        + c_box * np.sum(slacks)
    )


def primal_direct(theta, w_matrix, source, x_t_aug, weights, labels_ovr, c_f, c_box):
    """Original transform-step objective with hinge-derived slacks."""
    slacks = hinge_slacks(theta, w_matrix, x_t_aug, labels_ovr)
    return float(
        0.5 * c_f * np.sum(w_matrix * w_matrix)
        + c_box * np.sum(slacks)
        + anchoring_term(w_matrix, source, x_t_aug, weights)
    )


def _rel_dev(lhs, rhs):
    lhs = np.asarray(lhs, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    scale = max(
        float(np.max(np.abs(lhs))) if lhs.size else 0.0,
        float(np.max(np.abs(rhs))) if rhs.size else 0.0,
    )
    dev = float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
    return dev / (1.0 + scale)


def identity_suite(source, target, theta, params, seed=0):
    """Measure every factored-path identity on one instance.

    Returns a dict of relative deviations (see the module docstring for
    the names). params must carry positive c_f and c_box; the linear
    kernel is implied, since the dense objects only exist in that mode.
    """
    params = params.resolved()
    if params.kernel.kind != "linear":
        raise ValueError("the dense oracle works in linear mode only")
    rng = np.random.Generator(np.random.PCG64(seed))
    k = theta.class_count
    l_s, l_t, m = source.dim, target.dim, target.count
    weights = build_weight_model(source.labels, target.labels, params.c_d)
    labels_ovr = ovr_labels(target.labels, k)
    assembly = build_assembly(theta, source, target, weights, params.c_f)
    x_t_aug = assembly.x_t_aug

    gram_t = x_t_aug.T @ x_t_aug
    gram_t = 0.5 * (gram_t + gram_t.T)
    g_op = compute_G(gram_t, weights.col_sums, params.c_f, x_t_aug)
    g = g_op.matrix

    out = {}

    # Quadratic-form rewrite of the anchoring term, random W.
    w_rand = rng.standard_normal((l_s, l_t + 1))
    w_vec = vec_op(w_rand)
    u = assembly.v - params.c_f * np.eye(assembly.v.shape[0])
    quad_form = 0.5 * float(w_vec @ (u @ w_vec) - 2.0 * assembly.q @ w_vec + assembly.s)
    direct = anchoring_term(w_rand, source, x_t_aug, weights)
    out["l2_quadratic_form"] = _rel_dev(quad_form, direct)

    # Margins through Phi equal margins through W itself.
    via_phi = assembly.y_flat * (assembly.phi.T @ w_vec + assembly.b_tilde)
    scores = theta.weights.T @ (w_rand @ x_t_aug) + theta.bias[:, None]
    via_w = (labels_ovr.signs * scores).ravel()
    out["margin_linearization"] = _rel_dev(via_phi, via_w)

    # Solve-based identities against the production G.
    v_inv_phi = np.linalg.solve(assembly.v, assembly.phi)
    theta_gram = theta.weights.T @ theta.weights
    out["gram_factorization"] = _rel_dev(
        assembly.phi.T @ v_inv_phi, np.kron(theta_gram, g)
    )
    xs_s = source.features @ weights.matrix
    out["cross_vec_row"] = _rel_dev(
        assembly.q @ v_inv_phi, (theta.weights.T @ (xs_s @ g)).ravel()
    )
    a_inv_xt = np.linalg.solve(assembly.a_matrix, x_t_aug)
    out["kron_solve_columns"] = _rel_dev(v_inv_phi, np.kron(theta.weights, a_inv_xt))

    # Retrieval: the stacked solve and the factored form agree at random
    # feasible dual variables.
    a_rand = params.c_box * rng.random(k * m)
    w_solved = np.linalg.solve(
        assembly.v, assembly.q + assembly.phi @ (assembly.y_flat * a_rand)
    )
    lam = a_rand.reshape(k, m).T
    ups = labels_ovr.upsilon
    w_factored = (xs_s + theta.weights @ (ups * lam).T) @ a_inv_xt.T
    out["w_retrieval"] = _rel_dev(unvec(w_solved, l_s, l_t + 1), w_factored)

    # Canonical and direct primal agree at that W with hinge slacks.
    w_mat = unvec(w_solved, l_s, l_t + 1)
    slacks = hinge_slacks(theta, w_mat, x_t_aug, labels_ovr)
    canonical = primal_canonical(assembly, w_solved, slacks, params.c_box)
    direct = primal_direct(
        theta, w_mat, source, x_t_aug, weights, labels_ovr, params.c_f, params.c_box
    )
    out["primal_two_forms"] = _rel_dev(canonical, direct)

    # End-to-end gap: solve the production dual, retrieve W, compare the
    # direct primal with the dual optimum plus its dropped constant.
    solution, tmodel, info = solve_w_subproblem(
        theta, source, target, labels_ovr, weights, params
    )
    mapped = training_transforms(tmodel)
    sl = np.maximum(
        0.0,
        1.0
        - labels_ovr.signs
        * (theta.weights.T @ mapped + theta.bias[:, None]),
    )
    fro2 = float(np.sum(tmodel._rt * mapped)) if tmodel.w_explicit is None else float(
        np.sum(tmodel.w_explicit ** 2)
    )
    primal = (
        0.5 * params.c_f * fro2
        + params.c_box * float(np.sum(sl))
        + _anchor_from_transforms(mapped, source, weights)
    )
    gap = primal - info.primal_value
    out["duality_gap"] = abs(gap) / (1.0 + abs(primal))
    return out


def _anchor_from_transforms(mapped, source, weights):
    t_sq = np.einsum("ij,ij->j", mapped, mapped)
    s_sq = np.einsum("ij,ij->j", source.features, source.features)
    cross = np.sum(weights.matrix * (source.features.T @ mapped))
    return 0.5 * (
        float(weights.col_sums @ t_sq)
        - 2.0 * float(cross)
        + float(weights.row_sums @ s_sq)
    )
