"""Training losses. Each returns ``(value, d value / d prediction)``.

Values stay numpy scalars in the input dtype, so extended-precision
evaluation is not truncated to float64.
"""
from __future__ import annotations

import numpy as np
from scipy.special import log_softmax, softmax


def loss_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared Euclidean error summed over components, averaged over the batch."""
    diff = pred - target
    b = pred.shape[0]
    return np.sum(diff * diff) / b, 2.0 * diff / b


def loss_cel(logits: np.ndarray, labels: np.ndarray, base: float = np.e) -> tuple[float, np.ndarray]:
    """Mean negative log softmax probability of the true class (one-hot targets).

    ``base`` sets the log base of the reported value; the gradient is scaled
    consistently.
    """
    b = logits.shape[0]
    logp = log_softmax(logits, axis=1)
    scale = 1.0 / np.log(base)
    value = -np.mean(logp[np.arange(b), labels]) * scale
    grad = softmax(logits, axis=1)
    grad[np.arange(b), labels] -= 1.0
    return value, grad * (scale / b)


def weight_names(params: dict) -> list[str]:
    return [k for k in params if k.endswith(".W")]


def loss_l2(base: float, params: dict, lam: float) -> tuple[float, dict]:
    """Add ``lam * sum(w**2)`` over all weight matrices (biases excluded).

    Returns the total and the regularizer gradient per weight name.
    """
    if lam == 0:
        return base, {}
    total = base + lam * sum(np.sum(params[k] ** 2) for k in weight_names(params))
    return total, {k: 2.0 * lam * params[k] for k in weight_names(params)}


LOSSES = {"mse": loss_mse, "categorical_cel": loss_cel}
