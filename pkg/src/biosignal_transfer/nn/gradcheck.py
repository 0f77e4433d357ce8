from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from biosignal_transfer.utils.logging import get_logger

logger = get_logger(__name__)

Objective = Callable[[], tuple[float, Mapping[str, np.ndarray]]]


def numeric_gradient(
    loss_fn: Callable[[], float],
    param: np.ndarray,
    index: tuple[int, ...],
    eps: float,
) -> float:
    """Centered difference of loss_fn with respect to one entry of `param` (mutated in place)."""
    original = param[index]
    param[index] = original + eps
    f_plus = loss_fn()
    param[index] = original - eps
    f_minus = loss_fn()
    param[index] = original
    return (f_plus - f_minus) / (2.0 * eps)


def grad_check(
    objective: Objective,
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    *,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients with central finite differences.

    `objective` closes over a fixed input batch and returns (loss, grads) for the current
    contents of `params`; entries of `params` are perturbed in place and restored.
    Returns max |analytic - numeric| / max(1, |numeric|) over the checked entries.
    """
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")

    _, analytic = objective()
    analytic = {name: np.array(grad, dtype=np.float64, copy=True) for name, grad in analytic.items()}

    def loss_only() -> float:
        return float(objective()[0])

    worst = 0.0
    worst_name = ""
    for name, param in params.items():
        if param.size == 0:
            continue
        grad = analytic.get(name)
        if grad is None:
            grad = np.zeros_like(param)
        indices = list(np.ndindex(param.shape))
        if max_entries_per_param is not None and len(indices) > max_entries_per_param:
            chooser = rng if rng is not None else np.random.default_rng(0)
            picked = chooser.choice(len(indices), size=max_entries_per_param, replace=False)
            indices = [indices[i] for i in sorted(picked)]
        for index in indices:
            numeric = numeric_gradient(loss_only, param, index, eps)
            error = abs(float(grad[index]) - numeric) / max(1.0, abs(numeric))
            if error > worst:
                worst = error
                worst_name = name

    logger.debug("grad_check max relative error %.3e (parameter %s)", worst, worst_name or "-")
    return worst
