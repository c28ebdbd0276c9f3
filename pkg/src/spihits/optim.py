"""SGD with momentum, weight decay and a stepwise learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import LayerParams


class NonFiniteGradientError(RuntimeError):
    """A parameter gradient contained NaN/Inf; the step was aborted."""


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 0.0
    # Ordered (iteration, learning_rate) change points; the latest change
    # point at or before the current iteration wins.
    lr_schedule: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        its = [it for it, _ in self.lr_schedule]
        if its != sorted(set(its)):
            raise ValueError("lr_schedule iterations must be strictly increasing")

    def lr_at(self, iteration):
        lr = self.learning_rate
        for it, value in self.lr_schedule:
            if iteration >= it:
                lr = value
            else:
                break
        return lr


def sgd_step(params: list[LayerParams], config: OptimizerConfig, iteration: int):
    """Apply one SGD update in place and zero the gradients.

    v <- momentum*v + grad + weight_decay*w ; w <- w - lr(iteration)*v
    """
    for p in params:
        if not (np.isfinite(p.grad_w).all() and np.isfinite(p.grad_b).all()):
            raise NonFiniteGradientError(
                f"non-finite gradient in layer {p.name!r} at iteration {iteration}"
            )
    lr = config.lr_at(iteration)
    for p in params:
        p.vel_w *= config.momentum
        p.vel_w += p.grad_w
        if config.weight_decay:
            p.vel_w += config.weight_decay * p.weights
        p.weights -= lr * p.vel_w

        p.vel_b *= config.momentum
        p.vel_b += p.grad_b
        if config.weight_decay:
            p.vel_b += config.weight_decay * p.bias
        p.bias -= lr * p.vel_b
        p.zero_grad()
