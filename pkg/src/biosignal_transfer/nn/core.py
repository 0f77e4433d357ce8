"""Dense-network numerical core: matrices, dense layers, ReLU, softmax cross-entropy, SGD.

Matrices are 2-D float64 numpy arrays, vectors 1-D float64 arrays. Nothing here keeps
global state; randomness only enters through an explicit `numpy.random.Generator`.
"""

from __future__ import annotations

from collections.abc import Mapping, MutableMapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

Matrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]
LabelVector = npt.NDArray[np.int64]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class LayerStateError(RuntimeError):
    """A layer was used out of order (backward before forward)."""


def _shape_text(array: np.ndarray) -> str:
    return "x".join(str(dim) for dim in array.shape)


def as_matrix(values: Any) -> Matrix:
    out = np.asarray(values, dtype=np.float64)
    if out.ndim == 1:
        out = out.reshape(1, -1)
    if out.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {out.shape}")
    return out


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"cannot multiply {_shape_text(a)} by {_shape_text(b)}: "
            f"inner dimensions {a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def init_glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Matrix:
    """Glorot-uniform weights in +/- sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be >= 1, got fan_in={fan_in}, fan_out={fan_out}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class DenseLayer:
    weights: Matrix
    bias: Vector
    cached_input: Matrix | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise DimensionError(f"weights must be 2-D, got shape {self.weights.shape}")
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.bias.shape[0] != self.weights.shape[1]:
            raise DimensionError(
                f"bias length {self.bias.shape[0]} does not match "
                f"{self.weights.shape[1]} output units"
            )

    @classmethod
    def create(cls, rng: np.random.Generator, fan_in: int, fan_out: int) -> DenseLayer:
        # A zero-width input (empty latent slice) has no weights to draw.
        if fan_in == 0:
            weights = np.zeros((0, fan_out), dtype=np.float64)
        else:
            weights = init_glorot(rng, fan_in, fan_out)
        return cls(weights=weights, bias=np.zeros(fan_out, dtype=np.float64))

    @property
    def fan_in(self) -> int:
        return int(self.weights.shape[0])

    @property
    def fan_out(self) -> int:
        return int(self.weights.shape[1])

    def forward(self, x: Matrix) -> Matrix:
        return dense_forward(self, x)

    def backward(self, grad_out: Matrix) -> tuple[Matrix, Matrix, Vector]:
        return dense_backward(self, grad_out)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"weights": self.weights, "bias": self.bias}


def dense_forward(layer: DenseLayer, x: Matrix) -> Matrix:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.weights.shape[0]:
        raise DimensionError(
            f"dense layer expects input with {layer.weights.shape[0]} columns, "
            f"got shape {x.shape}"
        )
    layer.cached_input = x
    return x @ layer.weights + layer.bias


def dense_backward(layer: DenseLayer, grad_out: Matrix) -> tuple[Matrix, Matrix, Vector]:
    """Return (grad_in, grad_w, grad_b) for the cached forward input.

    The layer is not modified, so several backward passes may share one forward pass.
    """
    if layer.cached_input is None:
        raise LayerStateError("dense_backward called before dense_forward")
    x = layer.cached_input
    grad_out = np.asarray(grad_out, dtype=np.float64)
    expected = (x.shape[0], layer.weights.shape[1])
    if grad_out.shape != expected:
        raise DimensionError(
            f"grad_out shape {grad_out.shape} does not match forward output shape {expected}"
        )
    grad_in = grad_out @ layer.weights.T
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    return grad_in, grad_w, grad_b


def relu(x: Matrix) -> Matrix:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: Matrix, grad_out: Matrix) -> Matrix:
    """Pass gradient where x > 0; the subgradient at exactly 0 is 0."""
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if x.shape != grad_out.shape:
        raise DimensionError(f"relu_backward shapes differ: {x.shape} vs {grad_out.shape}")
    return np.where(x > 0.0, grad_out, 0.0)


def softmax(logits: Matrix) -> Matrix:
    logits = as_matrix(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def validate_labels(labels: Any, num_rows: int, num_classes: int) -> LabelVector:
    out = np.asarray(labels)
    if out.ndim != 1 or out.shape[0] != num_rows:
        raise ValueError(f"expected {num_rows} labels, got shape {out.shape}")
    if out.size and not np.issubdtype(out.dtype, np.integer):
        if not np.all(np.equal(np.mod(out, 1), 0)):
            raise ValueError("labels must be integer class indices")
    out = out.astype(np.int64)
    if out.size and (out.min() < 0 or out.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range [{out.min()}, {out.max()}]"
        )
    return out


def softmax_cross_entropy(logits: Matrix, labels: Any) -> tuple[float, Matrix]:
    """Mean cross-entropy over rows and its gradient with respect to the logits."""
    logits = as_matrix(logits)
    n_rows, n_classes = logits.shape
    if n_rows == 0:
        raise ValueError("softmax_cross_entropy needs at least one row")
    targets = validate_labels(labels, n_rows, n_classes)

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    norm = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(norm)
    rows = np.arange(n_rows)
    loss = float(-log_probs[rows, targets].mean())

    grad = exp / norm
    grad[rows, targets] -= 1.0
    grad /= n_rows
    return loss, grad


def sgd_step(
    params: MutableMapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    lr: float,
) -> MutableMapping[str, np.ndarray]:
    """In-place update p <- p - lr * g for every parameter that has a gradient."""
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter '{name}'")
        param = params[name]
        grad = np.asarray(grad, dtype=np.float64)
        if param.shape != grad.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match parameter '{name}' {param.shape}"
            )
        if lr:
            param -= lr * grad
    return params


@dataclass(frozen=True)
class SGDConfig:
    # Sized for small (< 80 trial) training sets.
    learning_rate: float = 0.01
    batch_size: int = 16
    epochs: int = 200

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
