"""Trainable parameters and the momentum SGD update."""
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Parameter", "sgd_momentum_step"]


@dataclass(eq=False)
class Parameter:
    """A value with its gradient and momentum buffers.

    ``learn_rate_scale`` multiplies the base learning rate for this tensor
    (the last classifier layer runs at 10x).  Frozen parameters are skipped
    by the optimizer entirely.
    """

    value: np.ndarray
    name: str = ""
    learn_rate_scale: float = 1.0
    frozen: bool = False
    gradient: np.ndarray = field(default=None, repr=False)
    velocity: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.asarray(self.value)
        if self.learn_rate_scale <= 0:
            raise ValueError("learn_rate_scale must be positive")
        if self.gradient is None:
            self.gradient = np.zeros_like(self.value)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, grad):
        self.gradient += grad

    def zero_grad(self):
        self.gradient[...] = 0

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.gradient = self.gradient.astype(dtype)
        self.velocity = self.velocity.astype(dtype)
        return self


def sgd_momentum_step(params, base_lr, momentum):
    """One heavy-ball step: ``v = m*v + g``; ``w -= lr * scale * v``.

    Gradients of every parameter (frozen or not) are zeroed afterwards.
    """
    for p in params:
        if not p.frozen:
            p.velocity *= momentum
            p.velocity += p.gradient
            p.value -= (base_lr * p.learn_rate_scale) * p.velocity
        p.zero_grad()
