"""Binary cross-entropy with L2 weight penalty, and plain SGD."""

from __future__ import annotations

import numpy as np

from seiznet.errors import TrainingDivergedError

PROB_FLOOR = 1e-7


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient with respect to probs.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs; the
    gradient is zero where the clamp is active.
    """
    p = np.clip(probs, PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = labels.reshape(p.shape)
    n = p.shape[0]
    loss = float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
    inside = (probs > PROB_FLOOR) & (probs < 1.0 - PROB_FLOOR)
    d_probs = np.where(inside, (p - y) / (p * (1.0 - p)) / n, 0.0)
    return loss, d_probs


def l2_penalty(layers, lam: float) -> float:
    """lam times the summed squares of all penalized arrays."""
    if lam == 0.0:
        return 0.0
    total = 0.0
    for layer in layers:
        for arr in layer.penalized():
            total += float(np.sum(arr * arr))
    return lam * total


def add_l2_gradients(layers, lam: float) -> None:
    """Accumulate the penalty gradient 2*lam*w onto the layer grads."""
    if lam == 0.0:
        return
    for layer in layers:
        penalized = {id(arr) for arr in layer.penalized()}
        for (_, param), (_, grad) in zip(layer.params(), layer.grads()):
            if id(param) in penalized:
                grad += 2.0 * lam * param


def sgd_step(layers, lr: float, context: str = "") -> None:
    """In-place vanilla gradient descent over every trainable array.

    A non-finite gradient aborts the run with a diagnostic naming the
    layer and parameter, rather than silently corrupting the weights.
    """
    for i, layer in enumerate(layers):
        for (name, param), (_, grad) in zip(layer.params(), layer.grads()):
            if not np.all(np.isfinite(grad)):
                where = f" at {context}" if context else ""
                raise TrainingDivergedError(
                    f"non-finite gradient in layer {i}"
                    f" ({type(layer).__name__}.{name}){where}"
                )
            param -= lr * grad
