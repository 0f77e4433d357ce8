from __future__ import annotations

from math import isclose, log

import numpy as np
import pytest

from biosignal_transfer.nn.core import (
    DenseLayer,
    DimensionError,
    LayerStateError,
    SGDConfig,
    dense_backward,
    init_glorot,
    matmul,
    relu,
    relu_backward,
    sgd_step,
    softmax,
    softmax_cross_entropy,
)


def test_matmul_rejects_mismatched_inner_dimensions() -> None:
    with pytest.raises(DimensionError) as exc_info:
        matmul(np.ones((2, 3)), np.ones((4, 5)))
    assert "2x3" in str(exc_info.value) or "(2, 3)" in str(exc_info.value)


def test_matmul_matches_numpy() -> None:
    a = np.arange(6, dtype=np.float64).reshape(2, 3)
    b = np.arange(12, dtype=np.float64).reshape(3, 4)
    np.testing.assert_array_equal(matmul(a, b), a @ b)


def test_glorot_init_stays_within_bound() -> None:
    weights = init_glorot(np.random.default_rng(0), 30, 20)
    bound = np.sqrt(6.0 / 50.0)
    assert weights.shape == (30, 20)
    assert np.all(np.abs(weights) <= bound)


def test_glorot_init_is_centred_and_seeded() -> None:
    weights = init_glorot(np.random.default_rng(0), 250, 400)
    bound = np.sqrt(6.0 / 650.0)
    standard_error = bound / np.sqrt(3.0) / np.sqrt(weights.size)
    assert weights.size == 100_000
    assert abs(weights.mean()) <= 3 * standard_error
    np.testing.assert_array_equal(init_glorot(np.random.default_rng(0), 250, 400), weights)


def test_glorot_init_rejects_zero_fan() -> None:
    with pytest.raises(ValueError):
        init_glorot(np.random.default_rng(0), 0, 3)


def test_dense_layer_forward_backward_shapes() -> None:
    layer = DenseLayer.create(np.random.default_rng(1), 4, 3)
    x = np.random.default_rng(2).standard_normal((5, 4))
    out = layer.forward(x)
    assert out.shape == (5, 3)

    grad_in, grad_w, grad_b = layer.backward(np.ones((5, 3)))
    assert grad_in.shape == (5, 4)
    assert grad_w.shape == (4, 3)
    np.testing.assert_allclose(grad_b, np.full(3, 5.0))
    np.testing.assert_allclose(grad_w, x.T @ np.ones((5, 3)))


def test_dense_backward_before_forward_raises() -> None:
    layer = DenseLayer.create(np.random.default_rng(0), 2, 2)
    with pytest.raises(LayerStateError):
        dense_backward(layer, np.ones((1, 2)))


def test_dense_forward_rejects_wrong_width() -> None:
    layer = DenseLayer.create(np.random.default_rng(0), 3, 2)
    with pytest.raises(DimensionError):
        layer.forward(np.ones((4, 5)))


def test_zero_width_layer_outputs_bias_only() -> None:
    layer = DenseLayer.create(np.random.default_rng(0), 0, 3)
    layer.bias[:] = [1.0, 2.0, 3.0]
    out = layer.forward(np.zeros((2, 0)))
    np.testing.assert_array_equal(out, np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]))


def test_relu_gradient_is_zero_at_the_kink() -> None:
    x = np.array([[-1.0, 0.0, 2.0]])
    assert relu(x).tolist() == [[0.0, 0.0, 2.0]]
    assert relu_backward(x, np.ones_like(x)).tolist() == [[0.0, 0.0, 1.0]]


def test_softmax_rows_sum_to_one_for_large_logits() -> None:
    probs = softmax(np.array([[1000.0, 1000.0, 999.0], [-5.0, 0.0, 5.0]]))
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(2))
    assert np.all(np.isfinite(probs))


def test_cross_entropy_of_uniform_logits_is_log_classes() -> None:
    loss, grad = softmax_cross_entropy(np.zeros((3, 4)), [0, 1, 3])
    assert isclose(loss, log(4.0), rel_tol=0.0, abs_tol=1e-12)
    np.testing.assert_allclose(grad.sum(axis=1), np.zeros(3), atol=1e-15)
    assert isclose(grad[0, 0], (0.25 - 1.0) / 3.0, rel_tol=0.0, abs_tol=1e-15)


def test_cross_entropy_of_two_class_example() -> None:
    loss, grad = softmax_cross_entropy(np.array([[log(3.0), 0.0]]), [0])
    assert isclose(loss, log(4.0 / 3.0), rel_tol=0.0, abs_tol=1e-12)
    np.testing.assert_allclose(grad, [[-0.25, 0.25]], rtol=0.0, atol=1e-12)


def test_cross_entropy_rejects_out_of_range_labels() -> None:
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.zeros((2, 3)), [0, 3])
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.zeros((2, 3)), [0, -1])


def test_cross_entropy_rejects_empty_batch() -> None:
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.zeros((0, 3)), [])


def test_sgd_step_updates_in_place() -> None:
    weights = np.ones((2, 2))
    params = {"w": weights}
    sgd_step(params, {"w": np.full((2, 2), 2.0)}, 0.5)
    assert params["w"] is weights
    np.testing.assert_array_equal(weights, np.zeros((2, 2)))


def test_sgd_step_substitution_examples() -> None:
    params = {"p": np.array([1.0])}
    sgd_step(params, {"p": np.array([0.5])}, 0.1)
    assert isclose(params["p"][0], 0.95, rel_tol=0.0, abs_tol=1e-15)

    frozen = {"w": np.array([[1.0, -2.0], [3.0, 0.5]])}
    sgd_step(frozen, {"w": np.full((2, 2), 7.0)}, 0.0)
    np.testing.assert_array_equal(frozen["w"], [[1.0, -2.0], [3.0, 0.5]])


def test_two_sgd_steps_equal_one_step_with_double_rate() -> None:
    grad = np.array([0.3, -1.2, 2.0])
    twice = {"w": np.array([1.0, 2.0, -0.5])}
    sgd_step(twice, {"w": grad}, 0.05)
    sgd_step(twice, {"w": grad}, 0.05)
    once = {"w": np.array([1.0, 2.0, -0.5])}
    sgd_step(once, {"w": grad}, 0.1)
    np.testing.assert_allclose(twice["w"], once["w"], rtol=0.0, atol=1e-12)


def test_sgd_step_rejects_unknown_and_misshaped_gradients() -> None:
    params = {"w": np.ones(3)}
    with pytest.raises(KeyError):
        sgd_step(params, {"v": np.ones(3)}, 0.1)
    with pytest.raises(DimensionError):
        sgd_step(params, {"w": np.ones(4)}, 0.1)


def test_sgd_config_validates_ranges() -> None:
    with pytest.raises(ValueError):
        SGDConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        SGDConfig(batch_size=0)
    with pytest.raises(ValueError):
        SGDConfig(epochs=0)
