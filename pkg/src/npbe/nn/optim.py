"""RMSProp, gradient clipping and parameter initialization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class RMSPropConfig:
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8


class RMSProp:
    """acc <- rho * acc + (1 - rho) * g^2;  p <- p - lr * g / sqrt(acc + eps)."""

    def __init__(self, params: dict[str, Tensor], config: RMSPropConfig | None = None):
        self.params = params
        self.config = config or RMSPropConfig()
        self.acc = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None):
        cfg = self.config
        for k, p in self.params.items():
            g = p.grad if grads is None else grads[k]
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"rmsprop: gradient shape {g.shape} does not match parameter {k} {p.shape}")
            acc = self.acc[k]
            acc *= cfg.rho
            acc += (1 - cfg.rho) * g * g
            p.data -= (cfg.lr * g / np.sqrt(acc + cfg.eps)).astype(p.dtype)

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(self.acc)

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, v in state.items():
            if k not in self.acc:
                raise KeyError(f"optimizer state for unknown parameter {k}")
            if v.shape != self.acc[k].shape:
                raise ShapeError(f"optimizer state {k}: shape {v.shape} != {self.acc[k].shape}")
            self.acc[k] = v.astype(self.acc[k].dtype).copy()


def global_norm(params: Sequence[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> tuple[float, bool]:
    """Scale gradients so their global L2 norm is at most ``max_norm``.

    Returns (norm before clipping, whether clipping happened).
    """
    norm = global_norm(params)
    if norm <= max_norm or norm == 0:
        return norm, False
    k = max_norm / norm
    for p in params:
        if p.grad is not None:
            p.grad = (p.grad * k).astype(p.dtype)
    return norm, True


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], dtype=np.float32) -> np.ndarray:
    """uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)); fans taken from the first and last axes."""
    fan_in = shape[0]
    fan_out = shape[-1] if len(shape) > 1 else shape[0]
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape).astype(dtype)
