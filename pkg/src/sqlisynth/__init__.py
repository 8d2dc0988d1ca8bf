"""Synthetic SQL-injection training data toolkit.

Lexes and embeds SQL queries, learns a VAE feature space, generates
synthetic queries with a 1D U-Net and a CWGAN-GP, pseudo-labels them,
searches real/synthetic mixes, and trains gradient-boosted classifiers —
all on a small from-scratch autodiff core.
"""

from .tensor import NumericError, ShapeError, Tensor, grad, no_grad
from .gradcheck import grad_check
from .optim import Adam, AdamState, adam_step

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "grad",
    "no_grad",
    "grad_check",
    "Adam",
    "AdamState",
    "adam_step",
    "__version__",
]
