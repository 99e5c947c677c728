"""Adam with bias correction over named parameter groups."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class TrainingAborted(RuntimeError):
    """Raised when optimization hits non-finite values."""


class Adam:
    """theta -= lr * m_hat / (sqrt(v_hat) + eps), per parameter group.

    Moments live in the parameters' dtype; the step is fully deterministic
    for a fixed gradient sequence.
    """

    def __init__(self, named_params: list[tuple[str, Parameter]], lr: float = 2e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self._v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self):
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1 ** t
        bias2 = 1.0 - self.beta2 ** t
        for name, p in self.named_params:
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise TrainingAborted(f"non-finite gradient in parameter group '{name}'")
            m = self._m[name]
            v = self._v[name]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            update = (self.lr / bias1) * m / (np.sqrt(v / bias2) + self.eps)
            p.data -= update.astype(p.data.dtype)

    def zero_grad(self):
        for _, p in self.named_params:
            p.grad[...] = 0
