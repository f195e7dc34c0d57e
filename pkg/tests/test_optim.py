import numpy as np
import pytest

from absnet.optim import AdamState, NonFiniteGradientError, adam_init


def reference_adam(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook bias-corrected ADAM, one scalar at a time."""
    theta = [float(t) for t in theta]
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, g in enumerate(grads, start=1):
        for i, gi in enumerate(g):
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            theta[i] -= lr * mhat / (vhat ** 0.5 + eps)
    return np.array(theta)


class TestAdam:
    def test_first_step_moves_by_lr(self):
        # with bias correction the first update is lr * g / (|g| + eps)
        p = {"w": np.array([1.0, -2.0, 3.0])}
        opt = adam_init(p, lr=1e-3, dtype=np.float64)
        g = np.array([0.5, -4.0, 1e-3])
        opt.step(p, {"w": g})
        np.testing.assert_allclose(p["w"], np.array([1.0, -2.0, 3.0]) - 1e-3 * g / (np.abs(g) + 1e-8), rtol=1e-12)

    def test_matches_reference_over_many_steps(self, rng):
        theta0 = rng.standard_normal(5)
        grads = rng.standard_normal((40, 5))
        p = {"a": theta0[:2].copy(), "b": theta0[2:].copy()}
        opt = adam_init(p, lr=1e-2, dtype=np.float64)
        for g in grads:
            opt.step(p, {"a": g[:2], "b": g[2:]})
        np.testing.assert_allclose(np.r_[p["a"], p["b"]], reference_adam(theta0, grads, 1e-2), rtol=1e-12)

    def test_views_and_state_shapes(self):
        p = {"w": np.zeros((2, 3)), "b": np.zeros(2)}
        opt = adam_init(p, lr=1e-3)
        assert opt.m["w"].shape == (2, 3) and opt.v["b"].shape == (2,)
        opt.step(p, {"w": np.ones((2, 3)), "b": np.ones(2)})
        assert opt.t == 1
        np.testing.assert_allclose(opt.m["w"], 0.1, rtol=1e-6)

    def test_reset_zeroes_moments(self):
        p = {"w": np.zeros(3)}
        opt = adam_init(p, lr=1e-3)
        opt.step(p, {"w": np.ones(3)})
        opt.reset()
        assert opt.t == 0
        assert not opt.m["w"].any() and not opt.v["w"].any()

    def test_fresh_state_after_reset_repeats_first_step(self):
        p1, p2 = {"w": np.ones(2)}, {"w": np.ones(2)}
        o1, o2 = adam_init(p1, 1e-3, dtype=np.float64), adam_init(p2, 1e-3, dtype=np.float64)
        o1.step(p1, {"w": np.array([5.0, -1.0])})
        o1.reset()
        p1["w"][:] = 1.0
        g = {"w": np.array([0.2, 0.3])}
        o1.step(p1, g)
        o2.step(p2, g)
        np.testing.assert_array_equal(p1["w"], p2["w"])

    def test_non_finite_gradient_names_parameter(self):
        p = {"w": np.zeros(2), "b": np.zeros(1)}
        opt = adam_init(p, lr=1e-3)
        with pytest.raises(NonFiniteGradientError, match="b"):
            opt.step(p, {"w": np.zeros(2), "b": np.array([np.nan])})
        assert opt.t == 0
        np.testing.assert_array_equal(p["w"], 0)

    def test_shape_mismatch(self):
        p = {"w": np.zeros(2)}
        opt = adam_init(p, lr=1e-3)
        with pytest.raises(ValueError, match="shape mismatch"):
            opt.step(p, {"w": np.zeros(3)})
        with pytest.raises(ValueError, match="same names"):
            opt.step(p, {"v": np.zeros(2)})

    @pytest.mark.parametrize("lr", [0.0, -1e-3])
    def test_rejects_non_positive_lr(self, lr):
        with pytest.raises(ValueError):
            adam_init({"w": (2,)}, lr=lr)

    def test_accepts_shapes(self):
        opt = adam_init({"w": (2, 2), "b": (2,)}, lr=1e-4)
        assert isinstance(opt, AdamState)
        assert opt.lr == 1e-4 and opt.m["w"].shape == (2, 2)
