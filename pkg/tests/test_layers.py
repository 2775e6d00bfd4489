import numpy as np
import pytest

import gcnkan.autodiff as ad
import gcnkan.layers as L
from conftest import interior_grid_inputs, small_graph
from gcnkan.errors import ConfigError, ShapeError
from gcnkan.model import init_params, model_forward, predict_scores


def taped_grad(forward, arrays):
    """Lift arrays onto a tape, reduce forward() with sum_all, return grads."""
    tape = ad.Tape()
    leaves = [tape.leaf(np.asarray(a, dtype=float)) for a in arrays]
    loss = ad.sum_all(forward(*leaves))
    grads = ad.backward(tape, loss)
    return [grads[leaf] for leaf in leaves]


def fd_check(forward, arrays, which, rel=1e-4, floor=1e-7):
    """Compare the taped gradient of arrays[which] against central differences."""
    grads = taped_grad(forward, arrays)

    def scalar(a):
        swapped = list(arrays)
        swapped[which] = a
        return float(np.sum(np.asarray(forward(*swapped))))

    fd = ad.finite_diff_grad(scalar, np.asarray(arrays[which], dtype=float), 1e-5)
    denom = np.maximum(np.abs(fd), floor)
    worst = np.max(np.abs(grads[which] - fd) / denom)
    assert worst <= rel, f"worst relative gradient error {worst:.3e}"


class TestGcnForward:
    def test_identity_propagator_hand_value(self):
        layer = L.GcnLayer(np.array([[1.0, 0.0], [0.0, 1.0]]))
        h = np.array([[1.0, -2.0], [0.5, 3.0]])
        out = L.gcn_forward(layer, np.eye(2), h)
        np.testing.assert_array_equal(out, np.maximum(h, 0.0))

    def test_matches_composed_formula(self, rng):
        prop = rng.standard_normal((4, 4))
        prop = (prop + prop.T) / 2
        h = rng.standard_normal((4, 3))
        w = rng.standard_normal((3, 5))
        out = L.gcn_forward(L.GcnLayer(w), prop, h)
        np.testing.assert_allclose(out, np.maximum(prop @ h @ w, 0.0),
                                   atol=1e-12)

    def test_non_square_propagator_rejected(self):
        with pytest.raises(ShapeError):
            L.gcn_forward(L.GcnLayer(np.eye(2)), np.zeros((2, 3)), np.eye(2))

    def test_weight_gradient_against_fd(self, rng):
        prop = np.eye(3) * 0.5 + 0.1
        h = rng.standard_normal((3, 2)) + 3.0  # keep relu away from its kink
        w = rng.uniform(0.5, 1.5, size=(2, 4))
        fd_check(lambda wt: L.gcn_forward(L.GcnLayer(wt), prop, h), [w], 0)


class TestKanNormalize:
    def test_min_goes_to_zero_max_just_below_one(self, rng):
        h = rng.standard_normal((6, 3)) * 4.0
        out, (mins, maxs) = L.kan_normalize(h, 1e-8)
        np.testing.assert_array_equal(mins, h.min(axis=0, keepdims=True))
        np.testing.assert_array_equal(maxs, h.max(axis=0, keepdims=True))
        assert np.all(out.min(axis=0) == 0.0)
        assert np.all(out.max(axis=0) < 1.0)
        assert np.all(out >= 0.0)

    def test_matches_closed_form(self, rng):
        h = rng.standard_normal((5, 4))
        eps = 1e-8
        out, _ = L.kan_normalize(h, eps)
        want = (h - h.min(axis=0)) / (h.max(axis=0) - h.min(axis=0) + eps)
        np.testing.assert_allclose(out, want, atol=1e-15)

    def test_constant_column_maps_to_exact_zero(self):
        h = np.full((4, 2), 7.0)
        out, _ = L.kan_normalize(h, 1e-8)
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_supplied_stats_are_replayed(self, rng):
        h1 = rng.standard_normal((5, 3))
        h2 = rng.standard_normal((5, 3))
        _, stats = L.kan_normalize(h1, 1e-8)
        out, stats2 = L.kan_normalize(h2, 1e-8, stats=stats)
        mins, maxs = stats
        np.testing.assert_allclose(out, (h2 - mins) / (maxs - mins + 1e-8),
                                   atol=1e-15)
        assert stats2 is not stats or stats2 == stats
        np.testing.assert_array_equal(stats2[0], mins)

    def test_gradient_is_a_constant_columnwise_rescale(self, rng):
        # min and max rows must not receive extra gradient: the statistics
        # are constants for differentiation
        h = rng.standard_normal((6, 3))
        scale = 1.0 / (h.max(axis=0) - h.min(axis=0) + 1e-8)
        (g,) = taped_grad(lambda t: L.kan_normalize(t, 1e-8)[0], [h])
        np.testing.assert_allclose(g, np.broadcast_to(scale, h.shape),
                                   atol=1e-12)


class TestKanForward:
    def test_single_cell_hand_value(self):
        # one unit, one input, grid {0, 1/2}: x=0.75 activates both bases
        layer = L.KanLayer(np.array([[[2.0, -1.0]]]), 2)
        out = L.kan_forward(layer, np.array([[0.75]]))
        assert out[0, 0] == pytest.approx(2.0 * 0.75 - 1.0 * 0.25, abs=1e-15)

    def test_width_mismatch_rejected(self, rng):
        layer = L.KanLayer(rng.standard_normal((2, 3, 4)), 4)
        with pytest.raises(ShapeError):
            L.kan_forward(layer, np.zeros((5, 2)))

    def test_grid_layout(self):
        layer = L.KanLayer(np.zeros((1, 1, 5)), 5)
        np.testing.assert_array_equal(layer.grid, np.arange(5) / 5.0)

    def test_grid_size_must_be_positive(self):
        with pytest.raises(ConfigError):
            L.KanLayer(np.zeros((1, 1, 0)), 0)

    def test_coefficient_gradient_against_fd(self, rng):
        g = 5
        x = interior_grid_inputs(rng, 4, 3, g)
        c = rng.standard_normal((2, 3, g))
        fd_check(lambda ct: L.kan_forward(L.KanLayer(ct, g), x), [c], 0)

    def test_input_gradient_against_fd(self, rng):
        g = 5
        x = interior_grid_inputs(rng, 4, 3, g)
        c = rng.standard_normal((2, 3, g))
        layer = L.KanLayer(c, g)
        fd_check(lambda xt: L.kan_forward(layer, xt), [x], 0)


class TestDropout:
    def test_identity_at_inference(self, rng):
        h = rng.standard_normal((3, 4))
        assert L.dropout(h, 0.5, False, rng) is h

    def test_identity_at_rate_zero(self, rng):
        h = rng.standard_normal((3, 4))
        assert L.dropout(h, 0.0, True, rng) is h

    def test_zero_or_rescaled_survivors(self, rng):
        h = np.full((40, 25), 2.0)
        out = L.dropout(h, 0.25, True, rng)
        vals = np.unique(out)
        np.testing.assert_allclose(vals, [0.0, 2.0 / 0.75], atol=1e-12)
        frac = np.mean(out == 0.0)
        assert 0.15 < frac < 0.35

    def test_mean_is_roughly_preserved(self, rng):
        h = np.ones((200, 50))
        out = L.dropout(h, 0.4, True, rng)
        assert abs(out.mean() - 1.0) < 0.02

    def test_rate_validation(self, rng):
        with pytest.raises(ConfigError):
            L.dropout(np.ones((2, 2)), 1.0, True, rng)
        with pytest.raises(ConfigError):
            L.dropout(np.ones((2, 2)), -0.1, True, rng)

    def test_gradient_equals_the_mask(self):
        h = np.ones((5, 4))
        rng1 = np.random.default_rng(7)
        rng2 = np.random.default_rng(7)
        out = L.dropout(h, 0.5, True, rng1)
        (g,) = taped_grad(lambda t: L.dropout(t, 0.5, True, rng2), [h])
        np.testing.assert_array_equal(g, np.asarray(out))


class TestPoolAndClassify:
    def test_pool_hand_value(self):
        h = np.array([[1.0, -5.0], [0.0, 2.0], [3.0, 1.0]])
        out = L.global_max_pool(h)
        np.testing.assert_array_equal(out, [[3.0, 2.0]])

    def test_pool_ignores_node_order(self, rng):
        h = rng.standard_normal((7, 4))
        base = L.global_max_pool(h)
        np.testing.assert_array_equal(
            L.global_max_pool(h[rng.permutation(7)]), base)

    def test_classify_zero_input_returns_bias(self):
        head = L.ClassifierHead(np.ones((3, 2)), np.array([[0.5, -1.5]]))
        np.testing.assert_array_equal(
            L.classify(head, np.zeros((1, 3))), [[0.5, -1.5]])

    def test_classify_hand_affine(self):
        head = L.ClassifierHead(np.array([[1.0, -1.0], [2.0, 0.0]]),
                                np.array([[0.1, 0.2]]))
        out = L.classify(head, np.array([[3.0, 0.5]]))
        np.testing.assert_allclose(out, [[3.0 + 1.0 + 0.1, -3.0 + 0.2]],
                                   atol=1e-15)

    def test_classify_width_mismatch(self):
        head = L.ClassifierHead(np.ones((3, 2)), np.zeros((1, 2)))
        with pytest.raises(ShapeError):
            L.classify(head, np.zeros((1, 4)))

    def test_classify_gradients_against_fd(self, rng):
        z = rng.standard_normal((1, 3))
        w = rng.standard_normal((3, 2))
        b = rng.standard_normal((1, 2))
        fd_check(lambda wt, bt: L.classify(L.ClassifierHead(wt, bt), z),
                 [w, b], 0)
        fd_check(lambda wt, bt: L.classify(L.ClassifierHead(wt, bt), z),
                 [w, b], 1)


class TestDenseForward:
    def test_hand_value_with_broadcast_bias(self):
        layer = L.DenseLayer(np.array([[2.0], [1.0]]), np.array([[-1.0]]))
        h = np.array([[1.0, 1.0], [0.0, 0.0]])
        out = L.dense_forward(layer, h)
        np.testing.assert_array_equal(out, [[2.0], [0.0]])

    def test_width_mismatch_rejected(self):
        layer = L.DenseLayer(np.ones((3, 2)), np.zeros((1, 2)))
        with pytest.raises(ShapeError):
            L.dense_forward(layer, np.zeros((4, 5)))

    def test_weight_and_bias_gradients_against_fd(self, rng):
        h = rng.standard_normal((4, 3)) + 2.5
        w = rng.uniform(0.3, 1.0, size=(3, 2))
        b = rng.uniform(0.1, 0.5, size=(1, 2))
        fd_check(lambda wt, bt: L.dense_forward(L.DenseLayer(wt, bt), h),
                 [w, b], 0)
        fd_check(lambda wt, bt: L.dense_forward(L.DenseLayer(wt, bt), h),
                 [w, b], 1)


class TestModelForward:
    def test_logit_shapes_both_variants(self):
        table, graph = small_graph()
        x = table.features[0][:, None]
        for variant in ("gcn-kan", "gcn"):
            params = init_params(variant, np.random.default_rng(0),
                                 hidden=8, grid_size=4)
            logits = model_forward(params, graph, x)
            assert logits.shape == (2,)
            assert np.all(np.isfinite(logits))

    def test_taped_and_untaped_forward_agree(self):
        table, graph = small_graph()
        x = table.features[1][:, None]
        params = init_params("gcn-kan", np.random.default_rng(1),
                             hidden=8, grid_size=4)
        plain = model_forward(params, graph, x)
        tape = ad.Tape()
        lifted, _ = params.lift(tape)
        taped = model_forward(lifted, graph, x, tape=tape)
        np.testing.assert_array_equal(np.asarray(taped.data).ravel(), plain)

    def test_capture_reports_prepool_and_stats(self):
        table, graph = small_graph()
        x = table.features[2][:, None]
        params = init_params("gcn-kan", np.random.default_rng(2),
                             hidden=8, grid_size=4)
        cap = {}
        logits = model_forward(params, graph, x, capture=cap)
        assert cap["prepool"].shape == (graph.n_roi, 8)
        np.testing.assert_array_equal(
            cap["argmax_rows"], np.argmax(cap["prepool"], axis=0))
        assert len(cap["stats"]) == 2
        np.testing.assert_array_equal(cap["logits"], logits)

    def test_frozen_stats_change_the_output(self):
        table, graph = small_graph()
        x = table.features[0][:, None]
        params = init_params("gcn-kan", np.random.default_rng(3),
                             hidden=8, grid_size=4)
        cap = {}
        base = model_forward(params, graph, x, capture=cap)
        replay = model_forward(params, graph, x, frozen_stats=cap["stats"])
        np.testing.assert_array_equal(replay, base)
        shifted = [(mins - 0.5, maxs + 0.5) for mins, maxs in cap["stats"]]
        other = model_forward(params, graph, x, frozen_stats=shifted)
        assert not np.array_equal(other, base)

    def test_feature_shape_validated(self):
        table, graph = small_graph()
        params = init_params("gcn-kan", np.random.default_rng(0),
                             hidden=8, grid_size=4)
        with pytest.raises(ShapeError):
            model_forward(params, graph, table.features[0][None, :])

    def test_training_dropout_requires_rng(self):
        table, graph = small_graph()
        params = init_params("gcn-kan", np.random.default_rng(0),
                             hidden=8, grid_size=4)
        with pytest.raises(ConfigError):
            model_forward(params, graph, table.features[0][:, None],
                          training=True, dropout_rate=0.3)

    def test_predict_scores_are_probabilities(self):
        table, graph = small_graph()
        params = init_params("gcn-kan", np.random.default_rng(4),
                             hidden=8, grid_size=4)
        scores = predict_scores(params, graph, table)
        assert len(scores) == len(table.subject_ids)
        assert all(0.0 < s < 1.0 for s in scores)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            init_params("mlp", np.random.default_rng(0))


class TestInitParams:
    def test_kan_variant_parameter_names(self):
        params = init_params("gcn-kan", np.random.default_rng(0),
                             hidden=4, grid_size=3)
        names = [n for n, _ in params.named_arrays()]
        assert names == ["gcn1.weight", "gcn2.weight", "kan1.coeffs",
                         "kan2.coeffs", "head.weight", "head.bias"]

    def test_gcn_variant_parameter_names(self):
        params = init_params("gcn", np.random.default_rng(0), hidden=4)
        names = [n for n, _ in params.named_arrays()]
        assert names == ["gcn1.weight", "gcn2.weight", "dense1.weight",
                         "dense1.bias", "dense2.weight", "dense2.bias",
                         "head.weight", "head.bias"]

    def test_shapes_and_zero_biases(self):
        params = init_params("gcn-kan", np.random.default_rng(1),
                             hidden=6, grid_size=4, n_classes=2)
        assert params.gcn1.weight.shape == (1, 6)
        assert params.gcn2.weight.shape == (6, 6)
        assert params.kan1.coeffs.shape == (6, 6, 4)
        assert params.head.weight.shape == (6, 2)
        np.testing.assert_array_equal(params.head.bias, np.zeros((1, 2)))

    def test_moment_buffers_cover_every_parameter(self):
        params = init_params("gcn", np.random.default_rng(2), hidden=4)
        for name, arr in params.named_arrays():
            assert params.adam_m[name].shape == arr.shape
            assert np.all(params.adam_m[name] == 0.0)
            assert np.all(params.adam_v[name] == 0.0)
        assert params.adam_step_count == 0

    def test_init_is_seeded(self):
        a = init_params("gcn-kan", np.random.default_rng(9), hidden=5,
                        grid_size=3)
        b = init_params("gcn-kan", np.random.default_rng(9), hidden=5,
                        grid_size=3)
        for (_, x), (_, y) in zip(a.named_arrays(), b.named_arrays()):
            np.testing.assert_array_equal(x, y)

    def test_lift_routes_gradients_by_name(self):
        table, graph = small_graph()
        params = init_params("gcn-kan", np.random.default_rng(5),
                             hidden=8, grid_size=4)
        tape = ad.Tape()
        lifted, leaves = params.lift(tape)
        logits = model_forward(lifted, graph, table.features[0][:, None],
                               tape=tape)
        loss = ad.cross_entropy_logits(logits, 1)
        grads = ad.backward(tape, loss)
        assert set(leaves) == {n for n, _ in params.named_arrays()}
        for name, arr in params.named_arrays():
            assert grads[leaves[name]].shape == arr.shape
        # the original params must be untouched by lifting
        assert isinstance(params.gcn1.weight, np.ndarray)
