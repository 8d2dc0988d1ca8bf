"""Thin layer classes over the tensor primitives.

Layers hold their parameters as Tensors (requires_grad=True) plus any
non-trained state (batchnorm running statistics). state()/load_state()
expose everything as named numpy arrays for checkpointing.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    add,
    batchnorm1d,
    conv1d,
    conv1d_transpose,
    linear,
    reshape,
)

__all__ = ["Dense", "Conv1d", "ConvTranspose1d", "BatchNorm1d"]


class Dense:
    """Affine layer; He-scaled normal init, zero bias."""

    def __init__(self, n_in, n_out, rng):
        self.w = Tensor(
            rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out)), requires_grad=True
        )
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x):
        return linear(x, self.w, self.b)

    def params(self):
        return [self.w, self.b]

    def state(self, prefix):
        return {f"{prefix}.w": self.w.data, f"{prefix}.b": self.b.data}

    def load_state(self, prefix, tensors):
        self.w.data = np.array(tensors[f"{prefix}.w"])
        self.b.data = np.array(tensors[f"{prefix}.b"])


class Conv1d:
    """1-D convolution layer, kernel [C_out, C_in, K], per-channel bias."""

    def __init__(self, c_in, c_out, k, rng, stride=1, pad=0):
        self.kernel = Tensor(
            rng.normal(0.0, np.sqrt(2.0 / (c_in * k)), (c_out, c_in, k)),
            requires_grad=True,
        )
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def __call__(self, x):
        out = conv1d(x, self.kernel, self.stride, self.pad)
        c_out = self.kernel.shape[0]
        return add(out, reshape(self.b, (1, c_out, 1)))

    def params(self):
        return [self.kernel, self.b]

    def state(self, prefix):
        return {f"{prefix}.kernel": self.kernel.data, f"{prefix}.b": self.b.data}

    def load_state(self, prefix, tensors):
        self.kernel.data = np.array(tensors[f"{prefix}.kernel"])
        self.b.data = np.array(tensors[f"{prefix}.b"])


class ConvTranspose1d:
    """1-D transposed convolution layer, kernel [C_in, C_out, K]."""

    def __init__(self, c_in, c_out, k, rng, stride=1, pad=0):
        self.kernel = Tensor(
            rng.normal(0.0, np.sqrt(2.0 / (c_in * k)), (c_in, c_out, k)),
            requires_grad=True,
        )
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.pad = pad

    def __call__(self, x):
        out = conv1d_transpose(x, self.kernel, self.stride, self.pad)
        c_out = self.kernel.shape[1]
        return add(out, reshape(self.b, (1, c_out, 1)))

    def params(self):
        return [self.kernel, self.b]

    def state(self, prefix):
        return {f"{prefix}.kernel": self.kernel.data, f"{prefix}.b": self.b.data}

    def load_state(self, prefix, tensors):
        self.kernel.data = np.array(tensors[f"{prefix}.kernel"])
        self.b.data = np.array(tensors[f"{prefix}.b"])


class BatchNorm1d:
    """Batchnorm over [N, C, L] with running statistics (momentum 0.1)."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train):
        return batchnorm1d(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            train,
            self.momentum,
            self.eps,
        )

    def params(self):
        return [self.gamma, self.beta]

    def state(self, prefix):
        return {
            f"{prefix}.gamma": self.gamma.data,
            f"{prefix}.beta": self.beta.data,
            f"{prefix}.running_mean": self.running_mean,
            f"{prefix}.running_var": self.running_var,
        }

    def load_state(self, prefix, tensors):
        self.gamma.data = np.array(tensors[f"{prefix}.gamma"])
        self.beta.data = np.array(tensors[f"{prefix}.beta"])
        self.running_mean = np.array(tensors[f"{prefix}.running_mean"])
        self.running_var = np.array(tensors[f"{prefix}.running_var"])
