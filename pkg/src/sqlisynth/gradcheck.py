"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, grad

__all__ = ["grad_check"]


def grad_check(f, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    f maps a Tensor to a scalar Tensor and is re-evaluated with perturbed
    copies of x.data, so it must read x.data fresh on every call (any
    function built from tensor ops does). Relative error per coordinate is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not isinstance(x, Tensor):
        x = Tensor(x, requires_grad=True)
    x.requires_grad = True
    (g,) = grad(f(x), [x])
    analytic = g.data
    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x).data)
        flat[i] = orig - eps
        fm = float(f(x).data)
        flat[i] = orig
        nflat[i] = (fp - fm) / (2.0 * eps)
    rel = np.abs(analytic - numeric) / np.maximum(
        1e-8, np.abs(analytic) + np.abs(numeric)
    )
    return float(rel.max())
