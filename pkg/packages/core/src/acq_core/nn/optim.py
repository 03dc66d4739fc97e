"""
Optimizers (Adam, momentum SGD) and the step learning-rate schedule.

State is keyed by parameter position, so an optimizer is bound to one
parameter list for its lifetime.
"""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from acq_core.autodiff.tensor import Tensor


def step_lr(base_lr: float, epoch: int, epochs: int, gamma: float = 0.1, fraction: float = 0.25) -> float:
    """
    base · γ^⌊epoch / period⌋ with period = max(1, round(epochs · fraction)).

    400 epochs with fraction 0.25 gives ×0.1 every 100 epochs.
    """
    period = max(1, int(round(epochs * fraction)))
    return base_lr * gamma ** (epoch // period)


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params: List[Tensor] = [p for p in params if p.requires_grad]
        if not self.params:
            raise ValueError(f"{type(self).__name__}: no trainable parameters")
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    """Momentum SGD with optional Nesterov and L2 weight decay."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        momentum: float = 0.9,
        nesterov: bool = True,
        weight_decay: float = 0.0,
    ):
        super().__init__(params, lr)
        self.momentum, self.nesterov, self.weight_decay = momentum, nesterov, weight_decay
        self._velocity: Dict[int, np.ndarray] = {}

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.momentum:
                v = self._velocity.get(i)
                v = g if v is None else self.momentum * v + g
                self._velocity[i] = v
                g = g + self.momentum * v if self.nesterov else v
            p.data = (p.data - self.lr * g).astype(np.float32)


class Adam(Optimizer):
    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        super().__init__(params, lr)
        self.betas, self.eps = betas, eps
        self._m: Dict[int, np.ndarray] = {}
        self._v: Dict[int, np.ndarray] = {}
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self._t
        c2 = 1.0 - b2 ** self._t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            m = b1 * self._m.get(i, 0.0) + (1.0 - b1) * g
            v = b2 * self._v.get(i, 0.0) + (1.0 - b2) * g * g
            self._m[i], self._v[i] = m, v
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(np.float32)
