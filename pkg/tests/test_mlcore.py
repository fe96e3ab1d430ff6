import math

import numpy as np
import pytest

from qtail.mlcore import (
    AdamState,
    LinearLayer,
    Rng,
    adam_step,
    bce_grad_logits,
    bce_loss,
    bce_loss_logits,
    init_lecun_normal,
    init_variational_angles,
    linear_backward,
    linear_forward,
    sigmoid,
    sigmoid_backward,
    tanh_rescale,
    tanh_rescale_backward,
)


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(123).stream("shuffle", 4).random(16)
        b = Rng(123).stream("shuffle", 4).random(16)
        assert np.array_equal(a, b)

    def test_different_tags_different_streams(self):
        a = Rng(123).stream("shuffle", 4).random(16)
        b = Rng(123).stream("shuffle", 5).random(16)
        c = Rng(123).stream("augment", 4).random(16)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_different_seeds_differ(self):
        assert Rng(1).stream().random() != Rng(2).stream().random()

    def test_algorithm_named(self):
        assert Rng(0).algorithm == "philox4x64"


class TestLinear:
    def test_zero_layer(self):
        layer = LinearLayer(np.zeros((4, 3)), np.zeros(3))
        assert np.array_equal(linear_forward(layer, np.ones(4)), np.zeros(3))

    def test_identity_1x1(self):
        layer = LinearLayer(np.ones((1, 1)), np.zeros(1))
        assert linear_forward(layer, np.array([2.5]))[0] == 2.5

    def test_parameter_count_2048_to_8(self):
        layer = LinearLayer(np.zeros((2048, 8)), np.zeros(8))
        assert layer.parameter_count == 16392

    def test_shape_mismatch(self):
        layer = LinearLayer(np.zeros((4, 3)), np.zeros(3))
        with pytest.raises(ValueError):
            linear_forward(layer, np.ones(5))

    def test_batched(self):
        rng = np.random.default_rng(0)
        layer = LinearLayer(rng.normal(size=(4, 3)), rng.normal(size=3))
        x = rng.normal(size=(5, 4))
        y = linear_forward(layer, x)
        for i in range(5):
            assert np.allclose(y[i], linear_forward(layer, x[i]))


class TestTanhRescale:
    def test_zero(self):
        assert tanh_rescale(np.zeros(3)).tolist() == [0, 0, 0]

    def test_saturation(self):
        assert abs(tanh_rescale(np.array([50.0]))[0] - math.pi / 2) < 1e-12

    def test_odd_symmetry(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=32)
        assert np.allclose(tanh_rescale(-x), -tanh_rescale(x), atol=1e-15)

    def test_range(self):
        rng = np.random.default_rng(2)
        y = tanh_rescale(rng.normal(0, 100, size=1000))
        assert np.all(np.abs(y) <= math.pi / 2)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(np.zeros(1))[0] == 0.5

    def test_complement(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0, 10, size=100)
        assert np.allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)

    def test_extreme_negative_stable(self):
        v = sigmoid(np.array([-800.0]))[0]
        assert 0 < v <= 1e-300
        assert np.isfinite(v)

    def test_extreme_positive_stable(self):
        v = sigmoid(np.array([800.0]))[0]
        assert 0 < v < 1
        assert np.isfinite(v)


class TestBce:
    def test_half_prediction(self):
        assert abs(bce_loss(np.array([0.5]), np.array([1.0])) - math.log(2)) < 1e-12

    def test_perfect_prediction_clamped(self):
        loss = bce_loss(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert loss <= 2e-7

    def test_batch_mean(self):
        loss = bce_loss(np.array([0.5, 0.5]), np.array([1.0, 0.0]))
        assert abs(loss - math.log(2)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bce_loss(np.zeros(3), np.zeros(4))

    def test_logits_form_agrees_with_probability_form(self):
        # Capped at |z| <= 15: beyond ~16 the gap 1-p is unrepresentable to
        # the needed relative precision in float64, so no probability-form
        # evaluation can track the logits form to 1e-9.
        rng = np.random.default_rng(4)
        z = rng.uniform(-15, 15, size=(8, 5))
        y = (rng.random((8, 5)) < 0.5).astype(float)
        assert abs(bce_loss_logits(z, y) - bce_loss(sigmoid(z), y)) < 1e-9


class TestAdam:
    def test_zero_gradient_no_move(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState.init(params)
        new_params, new_state = adam_step(params, {"w": np.zeros(2)}, state)
        assert np.array_equal(new_params["w"], params["w"])
        assert np.all(new_state.first_moment["w"] == 0)
        assert new_state.step == 1

    def test_first_step_magnitude(self):
        params = {"w": np.array([0.0])}
        state = AdamState.init(params, lr=1e-4)
        new_params, _ = adam_step(params, {"w": np.array([0.5])}, state)
        assert abs(new_params["w"][0] - (-1e-4)) < 1e-9

    def test_quadratic_descent(self):
        # Run the update rule itself on f(w) = w^2 from w0 = 1.
        params = {"w": np.array([1.0])}
        state = AdamState.init(params, lr=0.1)
        for _ in range(100):
            grads = {"w": 2 * params["w"]}
            params, state = adam_step(params, grads, state)
        assert abs(params["w"][0]) < 0.5

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
        grads = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=2)}
        s0 = AdamState.init(params)
        p1, s1 = adam_step(params, grads, s0)
        p2, s2 = adam_step(params, grads, s0)
        assert np.array_equal(p1["a"], p2["a"]) and np.array_equal(p1["b"], p2["b"])
        assert s1.step == s2.step == 1

    def test_shape_mismatch(self):
        params = {"w": np.zeros(2)}
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.zeros(3)}, AdamState.init(params))


class TestInitializers:
    def test_lecun_variance(self):
        layer = init_lecun_normal(Rng(0), 2048, 489)  # ~1e6 draws
        var = layer.weights.var()
        assert abs(var - 1 / 2048) < 0.1 / 2048

    def test_lecun_deterministic(self):
        a = init_lecun_normal(Rng(7), 16, 4)
        b = init_lecun_normal(Rng(7), 16, 4)
        assert np.array_equal(a.weights, b.weights)

    def test_lecun_bias_zero(self):
        assert np.all(init_lecun_normal(Rng(0), 8, 3).bias == 0)

    def test_variational_std(self):
        angles = init_variational_angles(Rng(0), 1000, 1000)  # 1e6 draws
        assert abs(angles.std() - 2 * math.pi) < 0.05 * 2 * math.pi

    def test_variational_deterministic(self):
        a = init_variational_angles(Rng(3), 5, 2)
        b = init_variational_angles(Rng(3), 5, 2)
        assert np.array_equal(a, b)

    def test_variational_shape_19x3(self):
        assert init_variational_angles(Rng(0), 19, 3).size == 57


class TestBackwardFiniteDifferences:
    def assert_fd(self, f, grad, x, h=1e-6, rel=1e-5):
        fd = np.empty_like(x)
        flat_fd = fd.reshape(-1)
        flat_x = x.reshape(-1)
        for i in range(flat_x.size):
            orig = flat_x[i]
            flat_x[i] = orig + h
            up = f()
            flat_x[i] = orig - h
            dn = f()
            flat_x[i] = orig
            flat_fd[i] = (up - dn) / (2 * h)
        tol = np.maximum(1e-7, rel * np.abs(fd))
        assert np.all(np.abs(grad - fd) <= tol)

    def test_linear_backward(self):
        rng = np.random.default_rng(6)
        layer = LinearLayer(rng.normal(size=(5, 4)), rng.normal(size=4))
        x = rng.normal(size=(3, 5))
        r = rng.normal(size=(3, 4))  # loss = sum(r * y)
        dw, db, dx = linear_backward(layer, x, r)
        self.assert_fd(lambda: float((linear_forward(layer, x) * r).sum()), dw, layer.weights)
        self.assert_fd(lambda: float((linear_forward(layer, x) * r).sum()), db, layer.bias)
        self.assert_fd(lambda: float((linear_forward(layer, x) * r).sum()), dx, x)

    def test_tanh_rescale_backward(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=8)
        r = rng.normal(size=8)
        grad = tanh_rescale_backward(x, r)
        self.assert_fd(lambda: float((tanh_rescale(x) * r).sum()), grad, x)

    def test_sigmoid_backward(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=8)
        r = rng.normal(size=8)
        grad = sigmoid_backward(x, r)
        self.assert_fd(lambda: float((sigmoid(x) * r).sum()), grad, x)

    def test_bce_grad_logits(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(4, 3))
        y = (rng.random((4, 3)) < 0.5).astype(float)
        grad = bce_grad_logits(z, y)
        self.assert_fd(lambda: bce_loss_logits(z, y), grad, z)
