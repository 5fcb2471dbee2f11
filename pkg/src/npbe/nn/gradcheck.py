"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def relative_error(a: float, b: float, floor: float = 1e-6) -> float:
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from dominating."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def _central(loss_fn, flat: np.ndarray, j: int, h: float, order: int) -> float:
    old = flat[j]

    def at(delta):
        flat[j] = old + delta
        v = float(loss_fn().data)
        flat[j] = old
        return v

    if order == 2:
        return (at(h) - at(-h)) / (2 * h)
    if order == 4:
        return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    raise ValueError("order must be 2 or 4")


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    rng: np.random.Generator,
    probes: int = 20,
    h: float = 1e-5,
    order: int = 2,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``probes`` random coordinates are drawn across ``tensors`` (which should
    hold float64 data).  ``loss_fn`` rebuilds the graph on every call.
    ``order`` 2 is the two-point stencil; 4 is the five-point stencil, whose
    smaller truncation error allows a larger ``h`` and so less round-off on
    losses with a large constant part.
    """
    loss = loss_fn()
    backward(loss, tensors)
    analytic = [t.grad.copy() for t in tensors]
    sizes = np.array([t.data.size for t in tensors], dtype=np.float64)
    worst = 0.0
    for _ in range(probes):
        k = int(rng.choice(len(tensors), p=sizes / sizes.sum()))
        t = tensors[k]
        flat = t.data.reshape(-1)
        j = int(rng.integers(flat.size))
        numeric = _central(loss_fn, flat, j, h, order)
        worst = max(worst, relative_error(float(analytic[k].reshape(-1)[j]), numeric))
    return worst
