"""Bias-corrected Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError

__all__ = ["AdamState", "adam_step", "Adam"]


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def init(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        return self


def adam_step(params, grads, state):
    """One in-place Adam update on a list of numpy parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(
            f"adam_step: got {len(params)} params, {len(grads)} grads, {len(state.m)} moments"
        )
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(
                f"adam_step: shape mismatch param {p.shape} vs grad {g.shape} vs moment {m.shape}"
            )
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


class Adam:
    """Adam over Tensor parameters; reads .grad, updates .data in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, epsilon).init(
            [p.data for p in self.params]
        )

    @property
    def t(self):
        return self.state.t

    def step(self):
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data)
            for p in self.params
        ]
        adam_step([p.data for p in self.params], grads, self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
