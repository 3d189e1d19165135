"""Gradient-descent update rules used by the trainer.

All three optimizers mutate the parameter tensors in place and carry
per-tensor state keyed by parameter name, created lazily on first use.

    SGDM:    v <- mu*v - lr*g;          theta <- theta + v
    RMSprop: s <- rho*s + (1-rho)*g^2;  theta <- theta - lr*g/(sqrt(s)+eps)
    ADAM:    bias-corrected first/second moments, eps outside the sqrt
"""

from __future__ import annotations

from typing import Dict

import numpy as np

from .errors import ValidationError


class Sgdm:
    def __init__(self, learning_rate: float, momentum: float = 0.90):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        for name, theta in params.items():
            v = self.velocity.setdefault(name, np.zeros_like(theta))
            v *= self.momentum
            v -= self.learning_rate * grads[name]
            theta += v


class RmsProp:
    def __init__(
        self, learning_rate: float, squared_grad_decay: float = 0.99, epsilon: float = 1e-8
    ):
        self.learning_rate = learning_rate
        self.squared_grad_decay = squared_grad_decay
        self.epsilon = epsilon
        self.mean_square: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        rho = self.squared_grad_decay
        for name, theta in params.items():
            g = grads[name]
            s = self.mean_square.setdefault(name, np.zeros_like(theta))
            s *= rho
            s += (1.0 - rho) * g * g
            theta -= self.learning_rate * g / (np.sqrt(s) + self.epsilon)


class Adam:
    def __init__(
        self,
        learning_rate: float,
        grad_decay: float = 0.9,
        squared_grad_decay: float = 0.99,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.grad_decay = grad_decay
        self.squared_grad_decay = squared_grad_decay
        self.epsilon = epsilon
        self.first: Dict[str, np.ndarray] = {}
        self.second: Dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.grad_decay, self.squared_grad_decay
        correct1 = 1.0 - b1**self.t
        correct2 = 1.0 - b2**self.t
        for name, theta in params.items():
            g = grads[name]
            m = self.first.setdefault(name, np.zeros_like(theta))
            v = self.second.setdefault(name, np.zeros_like(theta))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / correct1
            v_hat = v / correct2
            theta -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


OPTIMIZERS = {"sgdm": Sgdm, "rmsprop": RmsProp, "adam": Adam}


def make_optimizer(name: str, learning_rate: float, **kwargs):
    """Build an optimizer by name; unknown names are a validation error."""
    key = name.lower()
    if key not in OPTIMIZERS:
        raise ValidationError(
            f"unknown optimizer {name!r}; expected one of {sorted(OPTIMIZERS)}"
        )
    if learning_rate <= 0:
        raise ValidationError(f"learning_rate must be > 0, got {learning_rate}")
    return OPTIMIZERS[key](learning_rate, **kwargs)
