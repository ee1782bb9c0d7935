import numpy as np
import pytest

from helpers import random_instance

from mmdtl2.dataset import DomainDataset, augment_columns, build_weight_model, ovr_labels
from mmdtl2.oracle import (
    MAX_DENSE_SIDE,
    build_assembly,
    hinge_slacks,
    primal_canonical,
    primal_direct,
    identity_suite,
    u_matrix,
    unvec,
    vec_op,
)
from mmdtl2.svm import HyperplaneStack


class TestVecOp:
    def test_row_major(self):
        assert vec_op([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx([1, 2, 3, 4])

    def test_round_trip(self):
        assert unvec([1.0, 2.0, 3.0, 4.0], 2, 2) == pytest.approx(
            np.array([[1.0, 2.0], [3.0, 4.0]])
        )

    def test_single_element(self):
        assert vec_op([[7.0]]) == pytest.approx([7.0])
        assert unvec([7.0], 1, 1) == pytest.approx(np.array([[7.0]]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            unvec([1.0, 2.0, 3.0], 2, 2)


class TestUMatrix:
    def test_single_row_space(self):
        out = u_matrix([1.0, 1.0], 1)
        assert out == pytest.approx(np.ones((2, 2)))

    def test_block_diagonal(self):
        out = u_matrix([0.0, 1.0], 2)
        block = np.array([[0.0, 0.0], [0.0, 1.0]])
        expected = np.block(
            [[block, np.zeros((2, 2))], [np.zeros((2, 2)), block]]
        )
        assert out == pytest.approx(expected)

    def test_quadratic_form_is_transform_norm(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=(3, 4))
        x = rng.normal(size=4)
        lhs = vec_op(w) @ u_matrix(x, 3) @ vec_op(w)
        assert lhs == pytest.approx(float((w @ x) @ (w @ x)))


class TestBuildAssembly:
    def test_zero_weights(self):
        inst = random_instance(3)
        weights = build_weight_model(
            inst["source"].labels, inst["target"].labels, 0.0
        )
        asm = build_assembly(
            inst["theta"], inst["source"], inst["target"], weights, 0.8
        )
        assert asm.q == pytest.approx(np.zeros_like(asm.q))
        assert asm.s == 0.0
        side = asm.v.shape[0]
        assert asm.v == pytest.approx(0.8 * np.eye(side))

    def test_tiny_worked_example(self):
        # N=1, M=1, c_d=1, source feature (2), target feature (0):
        # q = vec((2) (0,1)) = (0, 2); s = 4
        source = DomainDataset(np.array([[2.0]]), [1], 2)
        target = DomainDataset(np.array([[0.0]]), [1], 2)
        weights = build_weight_model([1], [1], 1.0)
        theta = HyperplaneStack(np.zeros((1, 2)), np.zeros(2))
        asm = build_assembly(theta, source, target, weights, 1.0)
        assert asm.q == pytest.approx([0.0, 2.0])
        assert asm.s == pytest.approx(4.0)

    def test_v_is_kron_of_a(self):
        inst = random_instance(4, positive_weights=True)
        asm = build_assembly(
            inst["theta"], inst["source"], inst["target"], inst["weights"],
            inst["params"].c_f,
        )
        expected = np.kron(np.eye(inst["source"].dim), asm.a_matrix)
        assert np.max(np.abs(asm.v - expected)) <= 1e-12

    def test_size_guard(self):
        rng = np.random.default_rng(0)
        source = DomainDataset(rng.normal(size=(9, 4)), [1, 2, 1, 2], 2)
        target = DomainDataset(rng.normal(size=(9, 2)), [1, 2], 2)
        weights = build_weight_model(source.labels, target.labels, 0.5)
        theta = HyperplaneStack(rng.normal(size=(9, 2)), rng.normal(size=2))
        assert source.dim * (target.dim + 1) > MAX_DENSE_SIDE
        with pytest.raises(ValueError):
            build_assembly(theta, source, target, weights, 1.0)


class TestIdentitySuite:
    def test_all_identities_small_sweep(self):
        for seed in range(15):
            inst = random_instance(seed)
            report = identity_suite(
                inst["source"], inst["target"], inst["theta"], inst["params"],
                seed=seed,
            )
            for name, dev in report.items():
                assert dev <= 1e-9, f"seed {seed}: {name} deviated {dev:.3e}"

    def test_zero_theta_gram_factorization_exact(self):
        inst = random_instance(8)
        k = inst["theta"].class_count
        zero_theta = HyperplaneStack(
            np.zeros((inst["source"].dim, k)), np.zeros(k)
        )
        report = identity_suite(
            inst["source"], inst["target"], zero_theta, inst["params"], seed=1
        )
        assert report["gram_factorization"] == 0.0

    def test_rejects_kernel_mode(self):
        inst = random_instance(2, kernel="rbf", positive_weights=True)
        with pytest.raises(ValueError):
            identity_suite(
                inst["source"], inst["target"], inst["theta"], inst["params"]
            )


def test_primal_two_forms_at_feasible_w():
    inst = random_instance(19, positive_weights=True)
    params = inst["params"]
    asm = build_assembly(
        inst["theta"], inst["source"], inst["target"], inst["weights"], params.c_f
    )
    rng = np.random.default_rng(7)
    w = rng.normal(size=(inst["source"].dim, inst["target"].dim + 1))
    slacks = hinge_slacks(inst["theta"], w, asm.x_t_aug, inst["labels_ovr"])
    canonical = primal_canonical(asm, vec_op(w), slacks, params.c_box or params.c_t)
    direct = primal_direct(
        inst["theta"], w, inst["source"], asm.x_t_aug, inst["weights"],
        inst["labels_ovr"], params.c_f, params.c_box or params.c_t,
    )
    assert abs(canonical - direct) <= 1e-10 * (1.0 + abs(direct))
