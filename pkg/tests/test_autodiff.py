import numpy as np
import pytest

import gcnkan.autodiff as ad
from gcnkan.errors import EvaluationError, ShapeError, TapeUsageError


def grad_of(build, *leaves_data):
    """Run build(tape, *leaf_tensors) -> loss, return (loss, [grads])."""
    tape = ad.Tape()
    leaves = [tape.leaf(np.asarray(d, dtype=float)) for d in leaves_data]
    loss = build(tape, *leaves)
    grads = ad.backward(tape, loss)
    return loss, [grads[leaf] for leaf in leaves]


class TestTapeMechanics:
    def test_sum_all_gradient_is_ones(self):
        w = np.arange(6.0).reshape(2, 3)
        _, (g,) = grad_of(lambda t, a: ad.sum_all(a), w)
        assert np.array_equal(g, np.ones((2, 3)))

    def test_unused_leaf_gradient_is_exactly_zero(self):
        tape = ad.Tape()
        a = tape.leaf(np.ones((2, 2)))
        b = tape.leaf(np.full((2, 2), 3.0))
        loss = ad.sum_all(a)
        grads = ad.backward(tape, loss)
        assert np.array_equal(grads[b], np.zeros((2, 2)))

    def test_loss_from_other_tape_rejected(self):
        tape1, tape2 = ad.Tape(), ad.Tape()
        a = tape1.leaf(np.ones((2, 2)))
        loss = ad.sum_all(a)
        with pytest.raises(TapeUsageError):
            ad.backward(tape2, loss)

    def test_non_scalar_loss_rejected(self):
        tape = ad.Tape()
        a = tape.leaf(np.ones((2, 2)))
        out = ad.relu(a)
        with pytest.raises(TapeUsageError):
            ad.backward(tape, out)

    def test_mixing_tapes_in_one_op_rejected(self):
        tape1, tape2 = ad.Tape(), ad.Tape()
        a = tape1.leaf(np.ones((2, 2)))
        b = tape2.leaf(np.ones((2, 2)))
        with pytest.raises(TapeUsageError):
            ad.add(a, b)

    def test_backward_is_deterministic(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal((4, 4))
        x = rng.standard_normal((4, 4))

        def run():
            tape = ad.Tape()
            a = tape.leaf(w)
            loss = ad.sum_all(ad.relu(ad.matmul(a, x)))
            return ad.backward(tape, loss)[a]

        g1, g2 = run(), run()
        assert np.array_equal(g1, g2)

    def test_untaped_inputs_stay_plain_arrays(self):
        out = ad.matmul(np.eye(2), np.ones((2, 2)))
        assert isinstance(out, np.ndarray)


class TestMatmul:
    def test_identity_case(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(ad.matmul(np.eye(2), m), m)

    def test_hand_product(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0], [1.0]])
        assert np.array_equal(ad.matmul(a, b), np.array([[2.0], [4.0]]))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError) as exc:
            ad.matmul(np.ones((3, 2)), np.ones((3, 2)))
        assert "(3, 2)" in str(exc.value)

    def test_associative_with_identity(self, rng):
        for _ in range(20):
            a = rng.standard_normal((5, 5))
            b = rng.standard_normal((5, 5))
            c = rng.standard_normal((5, 5))
            left = ad.matmul(ad.matmul(a, b), c)
            right = ad.matmul(a, ad.matmul(b, c))
            assert np.allclose(left, right, atol=1e-12)
            assert np.allclose(ad.matmul(a, np.eye(5)), a, atol=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        a0 = rng.standard_normal((3, 4))
        b0 = rng.standard_normal((4, 2))
        _, (ga, gb) = grad_of(
            lambda t, a, b: ad.sum_all(ad.mul(ad.matmul(a, b),
                                              ad.matmul(a, b))), a0, b0)
        fa = ad.finite_diff_grad(
            lambda th: float(np.sum((th @ b0) ** 2)), a0)
        fb = ad.finite_diff_grad(
            lambda th: float(np.sum((a0 @ th) ** 2)), b0)
        assert np.allclose(ga, fa, rtol=1e-6, atol=1e-8)
        assert np.allclose(gb, fb, rtol=1e-6, atol=1e-8)


class TestElementwiseOps:
    def test_add_sub_mul_grads(self, rng):
        a0 = rng.standard_normal((3, 3))
        b0 = rng.standard_normal((3, 3))

        _, (ga, gb) = grad_of(
            lambda t, a, b: ad.sum_all(ad.mul(ad.add(a, b), ad.sub(a, b))),
            a0, b0)
        # d/da sum(a^2 - b^2) = 2a, d/db = -2b
        assert np.allclose(ga, 2 * a0, atol=1e-12)
        assert np.allclose(gb, -2 * b0, atol=1e-12)

    def test_mul_with_shared_operand(self):
        a0 = np.array([[2.0, -3.0]])
        _, (g,) = grad_of(lambda t, a: ad.sum_all(ad.mul(a, a)), a0)
        assert np.allclose(g, 2 * a0, atol=1e-12)

    def test_scale_and_shift_scale(self, rng):
        a0 = rng.standard_normal((2, 3))
        shift = rng.standard_normal(3)
        sc = rng.uniform(0.5, 2.0, 3)

        _, (g,) = grad_of(
            lambda t, a: ad.sum_all(ad.shift_scale(a, shift, sc)), a0)
        assert np.allclose(g, np.broadcast_to(sc, (2, 3)), atol=1e-12)

        _, (g2,) = grad_of(lambda t, a: ad.sum_all(ad.scale(a, -1.5)), a0)
        assert np.allclose(g2, np.full((2, 3), -1.5), atol=1e-12)

    def test_mean_all_gradient(self):
        a0 = np.arange(6.0).reshape(2, 3)
        _, (g,) = grad_of(lambda t, a: ad.mean_all(a), a0)
        assert np.allclose(g, np.full((2, 3), 1.0 / 6.0), atol=1e-15)


class TestRelu:
    def test_mixed_signs_indicator(self):
        w0 = np.array([[1.5, -2.0], [0.25, -0.75]])
        _, (g,) = grad_of(lambda t, a: ad.sum_all(ad.relu(a)), w0)
        assert np.array_equal(g, (w0 > 0).astype(float))

    def test_subgradient_at_zero_is_zero(self):
        w0 = np.array([[0.0, 1.0, -1.0]])
        _, (g,) = grad_of(lambda t, a: ad.sum_all(ad.relu(a)), w0)
        assert np.array_equal(g, np.array([[0.0, 1.0, 0.0]]))

    def test_gradient_matches_finite_differences_off_kink(self, rng):
        for _ in range(10):
            a0 = rng.standard_normal((4, 3))
            a0 = np.where(np.abs(a0) < 0.05, 0.1, a0)  # keep clear of 0
            _, (g,) = grad_of(
                lambda t, a: ad.sum_all(ad.mul(ad.relu(a), ad.relu(a))), a0)
            fd = ad.finite_diff_grad(
                lambda th: float(np.sum(np.maximum(th, 0) ** 2)), a0)
            assert np.allclose(g, fd, rtol=1e-6, atol=1e-8)


class TestColMax:
    def test_gradient_lands_on_argmax_entries(self):
        h0 = np.array([[1.0, 5.0], [3.0, 2.0], [2.0, 4.0]])
        _, (g,) = grad_of(lambda t, a: ad.sum_all(ad.col_max(a)), h0)
        expected = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
        assert np.array_equal(g, expected)

    def test_tie_goes_to_lowest_row_index(self):
        h0 = np.array([[2.0], [2.0], [1.0]])
        out = ad.col_max(h0)
        assert out.shape == (1, 1) and out[0, 0] == 2.0
        _, (g,) = grad_of(lambda t, a: ad.sum_all(ad.col_max(a)), h0)
        assert np.array_equal(g, np.array([[1.0], [0.0], [0.0]]))

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            ad.col_max(np.ones((2,)))


class TestKanCombine:
    def test_gradients_match_finite_differences(self, rng):
        from conftest import interior_grid_inputs
        grid_size = 4
        grid = np.arange(grid_size) / grid_size
        for _ in range(10):
            h0 = interior_grid_inputs(rng, 5, 3, grid_size)
            c0 = rng.standard_normal((2, 3, grid_size))
            _, (gh, gc) = grad_of(
                lambda t, h, c: ad.sum_all(
                    ad.mul(ad.kan_combine(h, c, grid),
                           ad.kan_combine(h, c, grid))), h0, c0)

            def f_h(th):
                basis = np.maximum(th[:, :, None] - grid, 0.0)
                out = np.einsum("njk,ijk->ni", basis, c0)
                return float(np.sum(out ** 2))

            def f_c(tc):
                basis = np.maximum(h0[:, :, None] - grid, 0.0)
                out = np.einsum("njk,ijk->ni", basis, tc)
                return float(np.sum(out ** 2))

            assert np.allclose(gh, ad.finite_diff_grad(f_h, h0),
                               rtol=1e-5, atol=1e-7)
            assert np.allclose(gc, ad.finite_diff_grad(f_c, c0),
                               rtol=1e-5, atol=1e-7)

    def test_width_mismatch_rejected(self):
        grid = np.arange(4) / 4.0
        with pytest.raises(ShapeError):
            ad.kan_combine(np.ones((2, 3)), np.ones((2, 5, 4)), grid)


class TestCrossEntropyLogits:
    def test_uniform_softmax(self):
        for label in (0, 1):
            val = ad.cross_entropy_logits(np.array([0.0, 0.0]), label)
            assert abs(float(val) - np.log(2.0)) < 1e-12

    def test_saturated_correct_class(self):
        val = ad.cross_entropy_logits(np.array([1000.0, -1000.0]), 0)
        assert float(val) < 1e-12 and np.isfinite(float(val))

    def test_hand_softmax(self):
        val = ad.cross_entropy_logits(np.array([1.0, 2.0]), 0)
        assert abs(float(val) - np.log(1.0 + np.e)) < 1e-12

    def test_gradient_is_softmax_minus_onehot(self):
        logits0 = np.array([[0.3, -1.2]])
        _, (g,) = grad_of(
            lambda t, a: ad.cross_entropy_logits(a, 1), logits0)
        p = np.exp(logits0 - logits0.max())
        p /= p.sum()
        assert np.allclose(g, p - np.array([[0.0, 1.0]]), atol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(10):
            logits0 = rng.standard_normal((1, 2))
            label = int(rng.integers(0, 2))
            _, (g,) = grad_of(
                lambda t, a: ad.cross_entropy_logits(a, label), logits0)
            fd = ad.finite_diff_grad(
                lambda th: float(ad.cross_entropy_logits(th.ravel(), label)),
                logits0)
            assert np.allclose(g, fd, rtol=1e-5, atol=1e-9)


class TestFiniteDiff:
    def test_quadratic(self):
        g = ad.finite_diff_grad(lambda th: float(th[0] ** 2),
                                np.array([3.0]))
        assert abs(g[0] - 6.0) < 1e-6

    def test_constant_function(self):
        g = ad.finite_diff_grad(lambda th: 7.5, np.ones(4))
        assert np.array_equal(g, np.zeros(4))

    def test_non_finite_names_coordinate(self):
        def f(th):
            return float("nan") if th[1] != 2.0 else 0.0

        with pytest.raises(EvaluationError) as exc:
            ad.finite_diff_grad(f, np.array([1.0, 2.0]))
        assert "1" in str(exc.value)

    def test_bad_step_rejected(self):
        with pytest.raises(ValueError):
            ad.finite_diff_grad(lambda th: 0.0, np.ones(2), h=0.0)
