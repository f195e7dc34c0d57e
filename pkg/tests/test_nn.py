import numpy as np
import pytest

from absnet import models, probe
from absnet.nn import (
    SELU_ALPHA,
    SELU_LAMBDA,
    Activation,
    AvgPool2x2,
    Conv2D,
    Dense,
    Flatten,
    Network,
    ShapeError,
    activation_backward,
    activation_forward,
    softmax,
    softmax_xent,
)
from absnet.nn import functional as F


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x``."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


class TestActivations:
    def test_abs_values_and_derivative(self):
        x = np.array([-2.0, -0.5, 0.0, 0.5, 3.0])
        np.testing.assert_array_equal(activation_forward("abs", x), [2.0, 0.5, 0.0, 0.5, 3.0])
        np.testing.assert_array_equal(activation_backward("abs", x, np.ones(5)), [-1, -1, 0, 1, 1])

    def test_abs_keeps_gradient_magnitude(self, rng):
        x = probe.clamped_normal(rng, (50, 7))
        g = rng.standard_normal((50, 7))
        np.testing.assert_allclose(np.abs(activation_backward("abs", x, g)), np.abs(g))

    def test_selu_known_points(self):
        x = np.array([-1.0, 0.0, 1.0])
        want = [SELU_LAMBDA * SELU_ALPHA * (np.exp(-1) - 1), 0.0, SELU_LAMBDA]
        np.testing.assert_allclose(activation_forward("selu", x), want, rtol=1e-12)

    def test_relu_and_tanh(self):
        x = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_array_equal(activation_forward("relu", x), [0, 0, 2])
        np.testing.assert_allclose(activation_backward("tanh", x, np.ones(3)), 1 - np.tanh(x) ** 2)

    @pytest.mark.parametrize("kind", ["abs", "tanh", "relu", "selu"])
    def test_backward_matches_finite_differences(self, kind, rng):
        x = probe.clamped_normal(rng, (4, 6), margin=1e-2)
        up = rng.standard_normal(x.shape)
        num = numeric_grad(lambda: float(np.sum(activation_forward(kind, x) * up)), x)
        np.testing.assert_allclose(activation_backward(kind, x, up), num, rtol=1e-6, atol=1e-8)

    def test_unknown_activation(self):
        with pytest.raises(ValueError, match="unknown activation"):
            activation_forward("gelu", np.zeros(2))

    def test_dtype_preserved(self):
        x = np.linspace(-1, 1, 8, dtype=np.float32)
        for kind in ("abs", "tanh", "relu", "selu"):
            assert activation_forward(kind, x).dtype == np.float32


class TestConvolution:
    def test_hand_computed_cross_correlation(self):
        x = np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3)
        w = np.array([[[[1.0, 0.0], [0.0, -1.0]]]])
        out, _ = F.conv2d_forward(x, w, np.array([0.5]))
        # out[i, j] = x[i, j] - x[i+1, j+1] + 0.5 = -4 + 0.5
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), -3.5))

    def test_direct_oracle_hand_example(self):
        x = np.ones((1, 2, 4, 4))
        w = np.ones((3, 2, 3, 3))
        out = F.conv2d_direct(x, w, np.array([0.0, 1.0, 2.0]), "same")
        assert out.shape == (1, 3, 4, 4)
        # corner sees 2x2 of the 3x3 window in each of 2 channels, centre sees all 9
        np.testing.assert_array_equal(out[0, 0], [[8, 12, 12, 8], [12, 18, 18, 12], [12, 18, 18, 12], [8, 12, 12, 8]])
        np.testing.assert_array_equal(out[0, 2] - out[0, 0], np.full((4, 4), 2.0))

    @pytest.mark.parametrize("shape,padding", [
        ((3, 2, 6, 6), "valid"),    # 4x4 output: folded GEMM path
        ((2, 3, 12, 12), "same"),   # 12x12 output: batched GEMM path
        ((2, 1, 28, 28), "valid"),
        ((1, 4, 7, 5), "same"),
    ])
    def test_matches_direct_oracle(self, shape, padding, rng):
        x = rng.standard_normal(shape)
        w = rng.standard_normal((5, shape[1], 5, 3))
        b = rng.standard_normal(5)
        out, _ = F.conv2d_forward(x, w, b, padding)
        np.testing.assert_allclose(out, F.conv2d_direct(x, w, b, padding), rtol=1e-10, atol=1e-10)

    def test_both_gemm_paths_exercised(self):
        assert F.conv_output_hw(6, 6, 3, 3, "valid")[0] ** 2 < F._FLAT_GEMM_AREA
        assert F.conv_output_hw(12, 12, 5, 5, "same")[0] ** 2 >= F._FLAT_GEMM_AREA

    def test_output_sizes(self):
        assert F.conv_output_hw(28, 28, 5, 5, "valid") == (24, 24)
        assert F.conv_output_hw(12, 12, 5, 5, "same") == (12, 12)
        with pytest.raises(ValueError):
            F.conv_output_hw(5, 5, 3, 3, "full")

    @pytest.mark.parametrize("padding", ["valid", "same"])
    def test_col2im_is_adjoint_of_im2col(self, padding, rng):
        x = rng.standard_normal((2, 3, 7, 6))
        cols = F.im2col(x, 3, 5, padding)
        c = rng.standard_normal(cols.shape)
        np.testing.assert_allclose(np.sum(cols * c), np.sum(x * F.col2im(c, x.shape, 3, 5, padding)), rtol=1e-12)

    @pytest.mark.parametrize("shape,padding", [((2, 2, 5, 5), "valid"), ((2, 2, 9, 9), "same")])
    def test_backward_matches_finite_differences(self, shape, padding, rng):
        x = rng.standard_normal(shape)
        w = rng.standard_normal((3, shape[1], 3, 3))
        b = rng.standard_normal(3)
        out, cols = F.conv2d_forward(x, w, b, padding)
        up = rng.standard_normal(out.shape)
        gx, gw, gb = F.conv2d_backward(up, cols, x.shape, w, padding)
        loss = lambda: float(np.sum(F.conv2d_direct(x, w, b, padding) * up))
        np.testing.assert_allclose(gx, numeric_grad(loss, x), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(gw, numeric_grad(loss, w), rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(gb, up.sum(axis=(0, 2, 3)), rtol=1e-12)

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError):
            F.im2col(np.zeros((1, 1, 3, 3)), 5, 5)


class TestPoolDenseLoss:
    def test_avgpool_values(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(F.avgpool2x2_forward(x)[0, 0], [[2.5, 4.5], [10.5, 12.5]])

    def test_avgpool_backward_spreads_quarter(self):
        g = F.avgpool2x2_backward(np.array([[[[4.0]]]]))
        np.testing.assert_array_equal(g, np.ones((1, 1, 2, 2)))

    def test_avgpool_rejects_odd(self):
        with pytest.raises(ShapeError):
            AvgPool2x2().output_shape((1, 5, 4))

    def test_dense_backward(self, rng):
        x, w, b = rng.standard_normal((4, 3)), rng.standard_normal((2, 3)), rng.standard_normal(2)
        up = rng.standard_normal((4, 2))
        gx, gw, gb = F.dense_backward(up, x, w)
        loss = lambda: float(np.sum(F.dense_forward(x, w, b) * up))
        np.testing.assert_allclose(gx, numeric_grad(loss, x), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(gw, numeric_grad(loss, w), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(gb, up.sum(axis=0))

    def test_uniform_logits_give_log_k(self):
        loss, grad = softmax_xent(np.zeros((5, 10)), np.arange(5))
        np.testing.assert_allclose(loss, np.log(10))
        np.testing.assert_allclose(grad.sum(axis=1), 0, atol=1e-15)

    def test_xent_grad_matches_finite_differences(self, rng):
        logits = rng.standard_normal((6, 4))
        labels = rng.integers(0, 4, 6)
        _, grad = softmax_xent(logits, labels)
        np.testing.assert_allclose(grad, numeric_grad(lambda: softmax_xent(logits, labels)[0], logits), rtol=1e-6)

    def test_xent_stable_for_large_logits(self):
        loss, grad = softmax_xent(np.array([[1000.0, 0.0]]), np.array([1]))
        np.testing.assert_allclose(loss, 1000.0)
        assert np.isfinite(grad).all()

    def test_xent_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            softmax_xent(np.zeros((2, 3)), np.array([0, 3]))

    def test_softmax_rows_sum_to_one(self, rng):
        np.testing.assert_allclose(softmax(rng.standard_normal((3, 7)) * 50).sum(axis=1), 1.0)


class TestNetwork:
    def small_net(self, act="abs"):
        return Network([Conv2D(1, 2, 3, "same"), Activation(act), AvgPool2x2(), Flatten(), Dense(2 * 16, 3)], (1, 8, 8))

    def test_shape_chain_error_names_layer(self):
        with pytest.raises(ShapeError, match="layer 3"):
            Network([Conv2D(1, 2, 3), Activation("abs"), Flatten(), Dense(7, 2)], (1, 6, 6))

    def test_forward_rejects_wrong_input(self):
        with pytest.raises(ShapeError):
            self.small_net().forward(np.zeros((2, 1, 9, 9)))

    def test_backward_without_forward(self):
        net = self.small_net()
        with pytest.raises(RuntimeError, match="without a preceding training forward"):
            net.backward(np.zeros((1, 3)))

    def test_inference_forward_does_not_cache(self, rng):
        net = models.init_params(self.small_net(), 0)
        net.forward(rng.standard_normal((2, 1, 8, 8)), train=False)
        assert all(layer._cache is None for layer in net.layers)

    @pytest.mark.parametrize("act", ["abs", "tanh", "relu", "selu"])
    def test_network_gradients(self, act, rng):
        net = models.init_params(self.small_net(act).astype(np.float64), 1)
        x = probe.clamped_normal(rng, (3, 1, 8, 8))
        assert probe.check_gradients(net, x, np.array([0, 2, 1])) < 1e-6

    def test_input_gradient(self, rng):
        net = models.init_params(self.small_net("tanh").astype(np.float64), 2)
        x = rng.standard_normal((2, 1, 8, 8))
        labels = np.array([1, 0])
        _, g = softmax_xent(net.forward(x), labels)
        gx = net.backward(g, need_input_grad=True)
        num = numeric_grad(lambda: softmax_xent(net.forward(x, train=False), labels)[0], x)
        np.testing.assert_allclose(gx, num, rtol=1e-5, atol=1e-9)

    def test_predict_chunks_match_single_pass(self, rng):
        net = models.init_params(self.small_net(), 3)
        x = rng.standard_normal((7, 1, 8, 8)).astype(np.float32)
        np.testing.assert_allclose(net.predict(x, batch_size=3), net.forward(x, train=False), rtol=1e-5, atol=1e-6)

    def test_state_dict_roundtrip_and_mismatch(self):
        a = models.init_params(self.small_net(), 0)
        b = models.init_params(self.small_net(), 1)
        b.load_state_dict(a.state_dict())
        for k, v in a.parameters().items():
            np.testing.assert_array_equal(b.parameters()[k], v)
        with pytest.raises(ShapeError):
            b.load_state_dict({"0.weight": np.zeros((1, 1, 1, 1))})

    def test_astype_is_deep_copy(self):
        net = models.init_params(self.small_net(), 0)
        wide = net.astype(np.float64)
        assert wide.dtype == np.float64 and net.dtype == np.float32
        wide.parameters()["0.weight"][...] = 0
        assert np.any(net.parameters()["0.weight"] != 0)
