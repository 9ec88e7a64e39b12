"""Central-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

DEFAULT_H = 1e-6
ERROR_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)."""
    num = np.abs(analytic - numeric)
    den = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ERROR_FLOOR)
    return float(np.max(num / den))


def finite_diff_check(
    objective, x: np.ndarray, analytic: np.ndarray, h: float = DEFAULT_H
) -> float:
    """Compare an analytic gradient against central differences.

    objective maps the array x to a scalar; x is perturbed in place
    entry by entry and restored, so callers can pass views into live
    layer parameters.
    """
    numeric = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_n = numeric.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        hi = objective()
        flat_x[i] = orig - h
        lo = objective()
        flat_x[i] = orig
        flat_n[i] = (hi - lo) / (2.0 * h)
    return relative_error(analytic, numeric)


def check_layer_gradients(
    layer,
    x: np.ndarray,
    rng: np.random.Generator,
    train: bool = False,
    h: float = DEFAULT_H,
) -> float:
    """Check a layer's input and parameter gradients in one sweep.

    The scalar objective is the inner product of the layer output with
    a fixed random cotangent, so every output entry influences the
    result.  Returns the worst relative error found.
    """
    x = x.copy()
    u = rng.standard_normal(layer.forward(x, train=train).shape)

    def objective() -> float:
        return float(np.sum(u * layer.forward(x, train=train)))

    layer.forward(x, train=train)
    dx = layer.backward(u)
    worst = finite_diff_check(objective, x, dx, h=h)
    grads = dict(layer.grads())
    for name, param in layer.params():
        worst = max(worst, finite_diff_check(objective, param, grads[name], h=h))
    return worst


def draw_without_ties(
    rng: np.random.Generator,
    shape: tuple[int, ...],
    min_gap: float = 2e-5,
    scale: float = 1.0,
    max_tries: int = 50,
) -> np.ndarray:
    """Uniform(-scale, scale) draw with no two entries closer than min_gap.

    Central differences sit on the wrong side of a max or ReLU kink
    when entries tie within the step size, so inputs for those layers
    are redrawn (deterministically, from the same generator) until all
    entries are separated from each other and from zero.
    """
    for _ in range(max_tries):
        x = rng.uniform(-scale, scale, size=shape)
        flat = np.sort(np.abs(x).reshape(-1))
        gaps = np.diff(np.sort(x.reshape(-1)))
        if flat[0] >= min_gap and np.all(gaps >= min_gap):
            return x
    raise RuntimeError("could not draw a tie-free sample")
