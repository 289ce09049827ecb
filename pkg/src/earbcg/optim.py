"""First-order optimizers for the numpy training loops.

Adam is implemented directly from its update equations: exponential
moving averages of the gradient and squared gradient with bias
correction, followed by a scaled step.  The step-size schedule used by
the training loops halves the base rate at fixed epoch intervals.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor

__all__ = ["Adam", "halved_lr"]


class Adam:
    """Adam over a name -> Tensor parameter mapping.

    m_t = b1 m_{t-1} + (1 - b1) g_t
    v_t = b2 v_{t-1} + (1 - b2) g_t^2
    step = lr * (m_t / (1 - b1^t)) / (sqrt(v_t / (1 - b2^t)) + eps)
    """

    def __init__(self, params: dict, lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0.0:
            raise ValueError("lr must be positive")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        """Apply one update using each parameter's accumulated gradient."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def halved_lr(base_lr: float, epoch: int, every: int = 20) -> float:
    """Base rate halved once per completed ``every``-epoch block."""
    if every <= 0:
        raise ValueError("every must be positive")
    return base_lr * 0.5 ** (epoch // every)
