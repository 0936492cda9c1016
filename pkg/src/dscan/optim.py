"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


def adam_step(param, grad, m, v, t, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update on raw arrays; returns (new_param, new_m, new_v).

    ``t`` is the 1-based step count used for bias correction.
    """
    if not (param.shape == grad.shape == m.shape == v.shape):
        raise DimensionError(
            f"adam_step: mismatched shapes param {param.shape}, grad {grad.shape}, "
            f"m {m.shape}, v {v.shape}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class Adam:
    """Tracks first/second moments for a list of parameter Tensors."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        """Apply one update using each parameter's accumulated gradient."""
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            p.data, self._m[i], self._v[i] = adam_step(
                p.data, p.grad, self._m[i], self._v[i], self.t,
                lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
