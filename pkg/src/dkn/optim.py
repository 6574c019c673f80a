"""Adam optimizer with bias-corrected moment estimates."""

import numpy as np

from .errors import DimensionError


class Adam:
    """Adaptive moment estimation over a dict of named parameter arrays.

    Moments are allocated lazily per parameter name and must keep shape with
    their parameter thereafter.  With zero first and second moments, a zero
    gradient leaves the parameters bit-identical.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.99, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict) -> None:
        """Update `params` in place from same-shaped `grads`."""
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise DimensionError(f"adam: gradient {g.shape} does not match "
                                     f"parameter '{name}' {p.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
