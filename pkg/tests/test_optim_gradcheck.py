import numpy as np
import pytest

from spihits.gradcheck import grad_check, max_relative_error, numeric_gradient
from spihits.layers import LayerParams, conv2d, conv2d_backward
from spihits.optim import NonFiniteGradientError, OptimizerConfig, sgd_step


def make_params(w, b, name="l"):
    return LayerParams.create(np.array(w, dtype=float), np.array(b, dtype=float), name)


class TestSgdStep:
    def test_plain_step(self):
        p = make_params([[[[1.0]]]], [0.0])
        p.grad_w[...] = 0.5
        sgd_step([p], OptimizerConfig(learning_rate=0.1, momentum=0.0), iteration=0)
        assert p.weights[0, 0, 0, 0] == pytest.approx(0.95)
        assert not p.grad_w.any()  # zeroed after the step

    def test_zero_grad_is_identity(self):
        p = make_params([[[[2.0]]]], [1.0])
        sgd_step([p], OptimizerConfig(learning_rate=0.1, momentum=0.0), iteration=0)
        assert p.weights[0, 0, 0, 0] == 2.0 and p.bias[0] == 1.0

    def test_lr_zero_schedule_is_identity(self):
        p = make_params([[[[2.0]]]], [0.0])
        p.grad_w[...] = 1.0
        cfg = OptimizerConfig(learning_rate=1e-12, momentum=0.0,
                              lr_schedule=[(0, 0.0)])
        sgd_step([p], cfg, iteration=5)
        assert p.weights[0, 0, 0, 0] == 2.0

    def test_momentum_recurrence(self):
        g, lam = 0.3, 0.01
        p = make_params([[[[0.0]]]], [0.0])
        cfg = OptimizerConfig(learning_rate=lam, momentum=0.9)
        p.grad_w[...] = g
        sgd_step([p], cfg, 0)
        w1 = p.weights.copy()
        p.grad_w[...] = g
        sgd_step([p], cfg, 1)
        # second update magnitude = lam * (0.9*g + g)
        assert abs(p.weights - w1)[0, 0, 0, 0] == pytest.approx(lam * 1.9 * g)

    def test_schedule_lookup(self):
        cfg = OptimizerConfig(learning_rate=1.0, lr_schedule=[(10, 0.1), (20, 0.01)])
        assert cfg.lr_at(0) == 1.0
        assert cfg.lr_at(10) == 0.1
        assert cfg.lr_at(19) == 0.1
        assert cfg.lr_at(25) == 0.01

    def test_schedule_must_increase(self):
        with pytest.raises(ValueError):
            OptimizerConfig(lr_schedule=[(10, 0.1), (10, 0.01)])

    def test_non_finite_gradient_names_layer(self):
        p = make_params([[[[1.0]]]], [0.0], name="stage3")
        p.grad_w[...] = np.nan
        with pytest.raises(NonFiniteGradientError, match="stage3"):
            sgd_step([p], OptimizerConfig(), 0)
        # aborted before mutating anything
        assert p.weights[0, 0, 0, 0] == 1.0


class TestGradCheck:
    def test_linear_single_conv(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(1, 1, 4, 4))
        p = LayerParams.create(rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2))
        r = rng.normal(size=(1, 2, 4, 4))

        def loss():
            return float(np.sum(conv2d(x, p, 1, 1) * r))

        p.zero_grad()
        gx = conv2d_backward(x, p, r, 1, 1)
        report = grad_check(
            loss,
            {"x": (x, gx), "w": (p.weights, p.grad_w), "b": (p.bias, p.grad_b)},
        )
        assert max(report.values()) <= 1e-7

    def test_sign_flipped_backward_fails(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(1, 1, 3, 3))
        p = LayerParams.create(rng.normal(size=(1, 1, 3, 3)), np.zeros(1))
        r = rng.normal(size=(1, 1, 3, 3))

        def loss():
            return float(np.sum(conv2d(x, p, 1, 1) * r))

        p.zero_grad()
        conv2d_backward(x, p, r, 1, 1)
        corrupted = -p.grad_w  # deliberate sign flip
        report = grad_check(loss, {"w": (p.weights, corrupted)})
        assert report["w"] == pytest.approx(2.0, abs=1e-3)

    def test_rejects_float32(self):
        x = np.zeros((2, 2), dtype=np.float32)
        with pytest.raises(ValueError, match="float64"):
            grad_check(lambda: 0.0, {"x": (x, x)})

    def test_numeric_gradient_of_quadratic(self):
        x = np.array([1.0, -2.0, 3.0])
        g = numeric_gradient(lambda: float(np.sum(x ** 2)), x)
        assert max_relative_error(2 * x, g) <= 1e-9
