"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

The graph is built eagerly: every operation records its parent tensors and
a backward closure. Backward closures receive the upstream gradient as a
Tensor and emit parent gradients as Tensors, so gradients of gradients can
be taken (the critic gradient penalty needs this) through the dense and
elementwise subset of ops. Convolution, pooling and train-mode batchnorm
backwards are first-order only and raise if a second derivative is
requested through them.

Everything is float64: desk scale makes speed irrelevant and the
finite-difference checks need the precision.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "no_grad",
    "grad",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "permute",
    "reshape",
    "tsum",
    "tmean",
    "exp",
    "log",
    "sqrt",
    "powc",
    "relu",
    "sigmoid",
    "concat",
    "narrow",
    "linear",
    "conv1d",
    "conv1d_transpose",
    "maxpool1d",
    "upsample_nearest2",
    "batchnorm1d",
    "dropout",
]


class ShapeError(ValueError):
    """Operand shapes do not fit a primitive's signature."""


class NumericError(ArithmeticError):
    """A training loop produced a non-finite loss."""


_GRAD_ENABLED = [True]


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev
        return False


class Tensor:
    """A float64 ndarray plus the bookkeeping needed for backward."""

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._second_order = True
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._bad_item()

    def _bad_item(self):
        raise ShapeError(f"item() needs a scalar, got shape {self.shape}")

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        """Populate .grad (numpy) on every reachable requires_grad leaf."""
        grads = _compute_grads(self, create_graph=False)
        for node in _topo(self):
            if node._backward is None and node.requires_grad:
                g = grads.get(id(node))
                if g is None:
                    continue
                node.grad = g.data.copy() if node.grad is None else node.grad + g.data

    # operator sugar
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __pow__(self, p):
        return powc(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op})"


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op, second_order=True):
    out = Tensor(data)
    if _GRAD_ENABLED[0] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
        out._second_order = second_order
    return out


def _topo(root):
    """All requires_grad nodes reachable from root, parents before children."""
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))
    return order


def _compute_grads(output, create_graph):
    if output.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {output.shape}")
    order = _topo(output)
    grads = {id(output): Tensor(np.ones_like(output.data))}
    ctx = no_grad() if not create_graph else _NullCtx()
    with ctx:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            if create_graph and not node._second_order:
                raise NotImplementedError(
                    f"op '{node._op}' does not support second derivatives (create_graph)"
                )
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else add(acc, pg)
    return grads


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def grad(output, inputs, create_graph=False):
    """d(output)/d(input) for each input tensor; zeros for unused leaves.

    With create_graph=True the returned gradients are themselves
    differentiable (dense/elementwise ops only).
    """
    grads = _compute_grads(output, create_graph)
    out = []
    for t in inputs:
        g = grads.get(id(t))
        out.append(g if g is not None else Tensor(np.zeros_like(t.data)))
    return out


# ---------------------------------------------------------------------------
# elementwise / dense ops (second-order capable)
# ---------------------------------------------------------------------------


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    axes = tuple(range(extra)) + tuple(
        i + extra for i, s in enumerate(shape) if s == 1 and g.shape[i + extra] != 1
    )
    out = tsum(g, axis=axes, keepdims=True) if axes else g
    return reshape(out, shape)


def add(a, b):
    a, b = _lift(a), _lift(b)
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out_data, (a, b), backward, "add")


def sub(a, b):
    a, b = _lift(a), _lift(b)
    out_data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(neg(g), b.shape)

    return _make(out_data, (a, b), backward, "sub")


def mul(a, b):
    a, b = _lift(a), _lift(b)
    out_data = a.data * b.data

    def backward(g):
        ga = _unbroadcast(mul(g, b), a.shape) if a.requires_grad else None
        gb = _unbroadcast(mul(g, a), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out_data, (a, b), backward, "mul")


def div(a, b):
    a, b = _lift(a), _lift(b)
    out_data = a.data / b.data

    def backward(g):
        ga = _unbroadcast(div(g, b), a.shape) if a.requires_grad else None
        gb = (
            _unbroadcast(neg(div(mul(g, a), mul(b, b))), b.shape)
            if b.requires_grad
            else None
        )
        return ga, gb

    return _make(out_data, (a, b), backward, "div")


def neg(a):
    a = _lift(a)

    def backward(g):
        return (neg(g),)

    return _make(-a.data, (a,), backward, "neg")


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return ga, gb

    return _make(out_data, (a, b), backward, "matmul")


def transpose(a):
    a = _lift(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: needs a 2-D tensor, got {a.shape}")

    def backward(g):
        return (transpose(g),)

    return _make(a.data.T.copy(), (a,), backward, "transpose")


def permute(a, axes):
    a = _lift(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        return (permute(g, inv),)

    return _make(np.transpose(a.data, axes).copy(), (a,), backward, "permute")


def reshape(a, shape):
    a = _lift(a)
    shape = tuple(shape)
    old = a.shape

    def backward(g):
        return (reshape(g, old),)

    return _make(a.data.reshape(shape).copy(), (a,), backward, "reshape")


def tsum(a, axis=None, keepdims=False):
    a = _lift(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gd = g
        if axis is not None and not keepdims:
            kshape = list(a.shape)
            axes = (axis,) if isinstance(axis, int) else axis
            for ax in axes:
                kshape[ax] = 1
            gd = reshape(gd, tuple(kshape))
        elif axis is None and not keepdims:
            gd = reshape(gd, (1,) * a.ndim)
        return (mul(gd, Tensor(np.ones(a.shape))),)

    return _make(out_data, (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False):
    a = _lift(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    return mul(tsum(a, axis, keepdims), Tensor(1.0 / n))


def exp(a):
    a = _lift(a)
    out = _make(np.exp(a.data), (a,), None, "exp")

    def backward(g):
        return (mul(g, out),)

    out._backward = backward if out.requires_grad else None
    return out


def log(a):
    a = _lift(a)

    def backward(g):
        return (div(g, a),)

    return _make(np.log(a.data), (a,), backward, "log")


def sqrt(a):
    a = _lift(a)
    out = _make(np.sqrt(a.data), (a,), None, "sqrt")

    def backward(g):
        return (div(g, mul(out, Tensor(2.0))),)

    out._backward = backward if out.requires_grad else None
    return out


def powc(a, p):
    a = _lift(a)
    p = float(p)

    def backward(g):
        return (mul(g, mul(Tensor(p), powc(a, p - 1.0))),)

    return _make(a.data**p, (a,), backward, "pow")


def relu(a):
    a = _lift(a)
    mask = (a.data > 0).astype(np.float64)

    def backward(g):
        return (mul(g, Tensor(mask)),)

    return _make(a.data * mask, (a,), backward, "relu")


def _sigmoid_data(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = _lift(a)
    out = _make(_sigmoid_data(a.data), (a,), None, "sigmoid")

    def backward(g):
        return (mul(g, mul(out, sub(Tensor(1.0), out))),)

    out._backward = backward if out.requires_grad else None
    return out


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        grads, start = [], 0
        for t, n in zip(tensors, sizes):
            grads.append(narrow(g, axis, start, n) if t.requires_grad else None)
            start += n
        return tuple(grads)

    return _make(out_data, tuple(tensors), backward, "concat")


def narrow(a, axis, start, length):
    a = _lift(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    after = a.shape[axis] - start - length

    def backward(g):
        pieces = []
        if start:
            lo_shape = list(a.shape)
            lo_shape[axis] = start
            pieces.append(Tensor(np.zeros(lo_shape)))
        pieces.append(g)
        if after:
            hi_shape = list(a.shape)
            hi_shape[axis] = after
            pieces.append(Tensor(np.zeros(hi_shape)))
        return (concat(pieces, axis) if len(pieces) > 1 else g,)

    return _make(a.data[tuple(idx)].copy(), (a,), backward, "narrow")


def linear(x, w, b=None):
    """Affine map x @ w (+ b)."""
    out = matmul(x, w)
    return add(out, b) if b is not None else out


def dropout(x, rate, seed, train=True):
    """Inverted dropout: eval mode is the identity."""
    x = _lift(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(mask))


# ---------------------------------------------------------------------------
# convolutional primitives (first-order backwards)
# ---------------------------------------------------------------------------


def _as_batched(x, name):
    if x.ndim == 2:
        return x.data[None, :, :], True
    if x.ndim == 3:
        return x.data, False
    raise ShapeError(f"{name}: input must be [C, L] or [N, C, L], got {x.shape}")


def _conv_cols(xp, K, stride, Lout):
    n, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(n, c, K, Lout), strides=(s0, s1, s2, s2 * stride), writeable=False
    )
    return view


def conv1d(x, kernel, stride=1, pad=0):
    """1-D cross-correlation; x [N,C,L] or [C,L], kernel [C_out, C_in, K]."""
    x, kernel = _lift(x), _lift(kernel)
    if stride <= 0:
        raise ShapeError(f"conv1d: stride must be positive, got {stride}")
    if pad < 0:
        raise ShapeError(f"conv1d: pad must be >= 0, got {pad}")
    xd, squeeze = _as_batched(x, "conv1d")
    if kernel.ndim != 3:
        raise ShapeError(f"conv1d: kernel must be [C_out, C_in, K], got {kernel.shape}")
    n, c, length = xd.shape
    co, ci, K = kernel.shape
    if c != ci:
        raise ShapeError(
            f"conv1d: input channels {c} != kernel in-channels {ci} (x {x.shape}, kernel {kernel.shape})"
        )
    lp = length + 2 * pad
    lout = (lp - K) // stride + 1
    if lout < 1:
        raise ShapeError(
            f"conv1d: kernel {K} with pad {pad} does not fit length {length}"
        )
    xp = np.ascontiguousarray(xd)
    if pad:
        xp = np.pad(xp, ((0, 0), (0, 0), (pad, pad)))
    cols = _conv_cols(xp, K, stride, lout)
    cols_flat = np.ascontiguousarray(cols).reshape(n, ci * K, lout)
    out_data = np.matmul(kernel.data.reshape(co, ci * K), cols_flat)
    if squeeze:
        out_data = out_data[0]

    def backward(g):
        gd = g.data if not squeeze else g.data[None]
        gk = gx = None
        if kernel.requires_grad:
            gk_flat = np.matmul(gd, cols_flat.transpose(0, 2, 1)).sum(axis=0)
            gk = Tensor(gk_flat.reshape(co, ci, K))
        if x.requires_grad:
            dcols = np.matmul(kernel.data.reshape(co, ci * K).T, gd)
            dcols = dcols.reshape(n, ci, K, lout)
            dxp = np.zeros((n, ci, lp))
            for t in range(K):
                dxp[:, :, t : t + stride * lout : stride] += dcols[:, :, t, :]
            dx = dxp[:, :, pad : lp - pad] if pad else dxp
            gx = Tensor(dx[0] if squeeze else dx)
        return gx, gk

    return _make(out_data, (x, kernel), backward, "conv1d", second_order=False)


def conv1d_transpose(x, kernel, stride=1, pad=0, output_length=None):
    """Adjoint of conv1d; x [N,C,L] or [C,L], kernel [C_in, C_out, K].

    Satisfies <conv1d(a, k, s, p), b> == <a, conv1d_transpose(b, k, s, p,
    output_length=len(a))> for any a, b with matching shapes. With the
    default output_length the minimal consistent length (L-1)*s + K - 2p
    is produced; positions conv1d never read get zero.
    """
    x, kernel = _lift(x), _lift(kernel)
    if stride <= 0:
        raise ShapeError(f"conv1d_transpose: stride must be positive, got {stride}")
    if pad < 0:
        raise ShapeError(f"conv1d_transpose: pad must be >= 0, got {pad}")
    xd, squeeze = _as_batched(x, "conv1d_transpose")
    if kernel.ndim != 3:
        raise ShapeError(
            f"conv1d_transpose: kernel must be [C_in, C_out, K], got {kernel.shape}"
        )
    n, c, length = xd.shape
    ci, co, K = kernel.shape
    if c != ci:
        raise ShapeError(
            f"conv1d_transpose: input channels {c} != kernel in-channels {ci} "
            f"(x {x.shape}, kernel {kernel.shape})"
        )
    lout = (length - 1) * stride + K - 2 * pad if output_length is None else output_length
    if lout < 1:
        raise ShapeError(
            f"conv1d_transpose: output length {lout} < 1 (length {length}, pad {pad})"
        )
    lp = lout + 2 * pad
    if (lp - K) // stride + 1 != length or lp < K:
        raise ShapeError(
            f"conv1d_transpose: output_length {lout} inconsistent with input "
            f"length {length} (kernel {K}, stride {stride}, pad {pad})"
        )
    prod = np.tensordot(kernel.data, xd, axes=([0], [1]))  # [CO, K, N, L]
    prod = prod.transpose(2, 0, 1, 3)  # [N, CO, K, L]
    yfull = np.zeros((n, co, lp))
    for t in range(K):
        yfull[:, :, t : t + stride * length : stride] += prod[:, :, t, :]
    out_data = yfull[:, :, pad : lp - pad] if pad else yfull
    if squeeze:
        out_data = out_data[0]

    def backward(g):
        gd = g.data if not squeeze else g.data[None]
        gp = np.pad(gd, ((0, 0), (0, 0), (pad, pad))) if pad else gd
        gx = gk = None
        cols = _conv_cols(np.ascontiguousarray(gp), K, stride, length)
        if x.requires_grad:
            cols_flat = np.ascontiguousarray(cols).reshape(n, co * K, length)
            dx = np.matmul(kernel.data.reshape(ci, co * K), cols_flat)
            gx = Tensor(dx[0] if squeeze else dx)
        if kernel.requires_grad:
            gk = Tensor(np.einsum("nil,notl->iot", xd, cols))
        return gx, gk

    return _make(out_data, (x, kernel), backward, "conv1d_transpose", second_order=False)


def maxpool1d(x):
    """Max pooling with window 2, stride 2; an odd trailing element is dropped."""
    x = _lift(x)
    xd, squeeze = _as_batched(x, "maxpool1d")
    n, c, length = xd.shape
    lout = length // 2
    if lout < 1:
        raise ShapeError(f"maxpool1d: length {length} too short to pool")
    pairs = xd[:, :, : 2 * lout].reshape(n, c, lout, 2)
    idx = pairs.argmax(axis=3)
    out_data = np.take_along_axis(pairs, idx[..., None], axis=3)[..., 0]
    if squeeze:
        out_data = out_data[0]

    def backward(g):
        gd = g.data if not squeeze else g.data[None]
        dpairs = np.zeros((n, c, lout, 2))
        np.put_along_axis(dpairs, idx[..., None], gd[..., None], axis=3)
        dx = np.zeros((n, c, length))
        dx[:, :, : 2 * lout] = dpairs.reshape(n, c, 2 * lout)
        return (Tensor(dx[0] if squeeze else dx),)

    return _make(out_data, (x,), backward, "maxpool1d", second_order=False)


def upsample_nearest2(x):
    """Nearest-neighbor upsampling by 2 along the length axis."""
    x = _lift(x)
    xd, squeeze = _as_batched(x, "upsample_nearest2")
    out_data = np.repeat(xd, 2, axis=2)
    if squeeze:
        out_data = out_data[0]

    def backward(g):
        gd = g.data if not squeeze else g.data[None]
        dx = gd[:, :, ::2] + gd[:, :, 1::2]
        return (Tensor(dx[0] if squeeze else dx),)

    return _make(out_data, (x,), backward, "upsample_nearest2", second_order=False)


def batchnorm1d(x, gamma, beta, running_mean, running_var, train, momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over [N, C, L].

    Train mode normalizes with batch statistics and updates running_mean /
    running_var (plain numpy arrays, mutated in place) with the given
    momentum. Eval mode applies the running statistics as a fixed affine
    map, so it is built from elementwise ops and stays differentiable.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if x.ndim != 3:
        raise ShapeError(f"batchnorm1d: input must be [N, C, L], got {x.shape}")
    n, c, length = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batchnorm1d: gamma/beta must have shape ({c},), got {gamma.shape}/{beta.shape}"
        )
    if not train:
        inv = Tensor((1.0 / np.sqrt(running_var + eps)).reshape(1, c, 1))
        xhat = mul(sub(x, Tensor(running_mean.reshape(1, c, 1))), inv)
        return add(mul(xhat, reshape(gamma, (1, c, 1))), reshape(beta, (1, c, 1)))

    m = n * length
    mu = x.data.mean(axis=(0, 2))
    var = x.data.var(axis=(0, 2))
    running_mean *= 1.0 - momentum
    running_mean += momentum * mu
    running_var *= 1.0 - momentum
    running_var += momentum * var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, c, 1)) * inv_std.reshape(1, c, 1)
    out_data = gamma.data.reshape(1, c, 1) * xhat + beta.data.reshape(1, c, 1)

    def backward(g):
        gd = g.data
        dgamma = (gd * xhat).sum(axis=(0, 2))
        dbeta = gd.sum(axis=(0, 2))
        dxhat = gd * gamma.data.reshape(1, c, 1)
        s1 = dxhat.sum(axis=(0, 2)).reshape(1, c, 1)
        s2 = (dxhat * xhat).sum(axis=(0, 2)).reshape(1, c, 1)
        dx = (dxhat - s1 / m - xhat * s2 / m) * inv_std.reshape(1, c, 1)
        gx = Tensor(dx) if x.requires_grad else None
        gg = Tensor(dgamma) if gamma.requires_grad else None
        gb = Tensor(dbeta) if beta.requires_grad else None
        return gx, gg, gb

    return _make(out_data, (x, gamma, beta), backward, "batchnorm1d", second_order=False)
