"""AdamW with decoupled weight decay and bias-corrected moments."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class AdamW:
    """Decoupled weight-decay Adam.

    Weight decay scales the parameter directly (`p *= 1 - lr*wd`) instead of
    entering the gradient moments. Moment buffers are kept per parameter and
    the shared step counter drives bias correction.
    """

    def __init__(
        self,
        params: list[Parameter],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.99,
        eps: float = 1e-8,
        weight_decay: float = 5e-4,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        """Apply one update; every parameter must carry a gradient."""
        missing = [p.name for p in self.params if p.grad is None]
        if missing:
            raise ValueError(f"parameters without gradients: {missing}")
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            theta = p.data
            if self.weight_decay:
                theta -= self.lr * self.weight_decay * theta
            theta -= self.lr * update

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def adamw_step(params, lr, beta1=0.9, beta2=0.99, eps=1e-8, weight_decay=5e-4) -> AdamW:
    """One-shot convenience: build an optimizer and take a single step."""
    opt = AdamW(params, lr, beta1, beta2, eps, weight_decay)
    opt.step()
    return opt
