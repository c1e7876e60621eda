"""Differentiable primitives.

Every function takes and returns :class:`Tensor`. Shape contracts are
checked up front and violations raise :class:`ShapeError` naming the
primitive.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make

EPS = 1e-8


def _pair(a, b):
    """Coerce python scalars / arrays to tensors in the dtype of the other operand."""
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(b, Tensor) and isinstance(a, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return as_tensor(a), as_tensor(b)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise arithmetic -------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    """Elementwise product; a row vector or a column broadcasts against a matrix."""
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = _pair(a, b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return make(out, (a, b), bw, "div")


def square(x):
    x = as_tensor(x)
    return make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def sqrt(x):
    """Square root. At 0 the gradient is taken as 0 (the norm of a zero vector stays differentiable)."""
    x = as_tensor(x)
    out = np.sqrt(x.data)

    def bw(g):
        return (np.divide(g, 2.0 * out, out=np.zeros_like(out), where=out > 0),)

    return make(out, (x,), bw, "sqrt")


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return make(out, (x,), lambda g: (g * out,), "exp")


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def sigmoid(x):
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x):
    """Clamp at zero. The subgradient at exactly 0 is taken as 0."""
    x = as_tensor(x)
    pos = x.data > 0
    return make(np.where(pos, x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,), "relu")


clamp = relu


# -- linear algebra -----------------------------------------------------------

def matmul(a, b):
    """2-d matrix product ``a @ b``: (n, k) x (k, m) -> (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x, weight):
    """``x @ weight.T`` with weight stored as (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("linear", x.shape, weight.shape, detail="expects x (n, in), weight (out, in)")

    def bw(g):
        return g @ weight.data, g.T @ x.data

    return make(x.data @ weight.data.T, (x, weight), bw, "linear")


def transpose(x):
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("transpose", x.shape, detail="2-d only")
    return make(x.data.T, (x,), lambda g: (g.T,), "transpose")


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    return make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def getitem(x, idx):
    x = as_tensor(x)
    out = x.data[idx]

    basic = isinstance(idx, (slice, int)) or (
        isinstance(idx, tuple) and all(isinstance(i, (slice, int)) for i in idx))

    def bw(g):
        full = np.zeros_like(x.data)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make(out, (x,), bw, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", detail="no inputs")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make(out, tensors, bw, "concat")


def take(table, ids):
    """Row lookup ``table[ids]`` (embedding lookup); ids is an integer array."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("take", table.shape, ids.shape, detail="index out of range")

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return make(table.data[ids], (table,), bw, "take")


embedding = take


# -- reductions ---------------------------------------------------------------

def _check_axis(op, x, axis):
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeError(op, x.shape, detail=f"axis {axis} out of range")


def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    _check_axis("sum", x, axis)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(np.asarray(out, dtype=x.dtype), (x,), bw, "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    _check_axis("mean", x, axis)
    n = x.data.size if axis is None else x.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return make(np.asarray(out, dtype=x.dtype), (x,), bw, "mean")


def max(x, axis, keepdims=False):
    """Max over one axis. Ties send the whole gradient to the lowest index."""
    x = as_tensor(x)
    _check_axis("max", x, axis)
    if x.shape[axis] == 0:
        raise ShapeError("max", x.shape, detail="empty reduction axis")
    idx = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), g, axis=axis)
        return (full,)

    return make(out, (x,), bw, "max")


def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis``.

    ``mask`` (boolean, broadcastable to x) excludes entries; a slice with no
    admitted entry yields all zeros rather than NaN.
    """
    x = as_tensor(x)
    _check_axis("softmax", x, axis)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0)
    e = np.exp(z - zmax)
    denom = e.sum(axis=axis, keepdims=True)
    out = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0).astype(x.dtype)

    def bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return make(out, (x,), bw, "softmax")


def l2norm(x, axis=-1, keepdims=False, eps=0.0):
    """sqrt(sum(x**2) + eps) along ``axis``."""
    return sqrt(sum(square(x), axis=axis, keepdims=keepdims) + eps)


def normalize(x, axis=-1, eps=EPS):
    """x / (||x|| + eps) along ``axis``."""
    x = as_tensor(x)
    return x / (l2norm(x, axis=axis, keepdims=True) + eps)


def cosine(a, b, eps=EPS):
    """Cosine similarity of two vectors, or row-wise for two matrices of equal shape."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("cosine", a.shape, b.shape)
    return sum(normalize(a, eps=eps) * normalize(b, eps=eps), axis=-1)


def cosine_matrix(a, b, eps=EPS):
    """All-pairs cosine: (n, d) x (m, d) -> (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("cosine_matrix", a.shape, b.shape)
    return matmul(normalize(a, eps=eps), transpose(normalize(b, eps=eps)))


def segment_max(x, starts, ends):
    """Row-wise max over spans: out[k] = max(x[starts[k]:ends[k]], axis=0).

    Ties go to the lowest row, as in :func:`max`.
    """
    x = as_tensor(x)
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    if x.ndim != 2 or starts.shape != ends.shape:
        raise ShapeError("segment_max", x.shape, starts.shape, ends.shape)
    if np.any(ends <= starts) or (starts.size and (starts.min() < 0 or ends.max() > x.shape[0])):
        raise ShapeError("segment_max", x.shape, detail="empty or out-of-range span")
    rows = np.empty((starts.size, x.shape[1]), dtype=np.int64)
    for k, (s, e) in enumerate(zip(starts, ends)):
        rows[k] = s + np.argmax(x.data[s:e], axis=0)
    cols = np.arange(x.shape[1])
    out = x.data[rows, cols[None, :]]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, np.broadcast_to(cols, rows.shape)), g)
        return (full,)

    return make(out, (x,), bw, "segment_max")


def lstm_cell(x, h, c, w_ih, w_hh, bias):
    """One LSTM step. Gate order along the 4H axis: input, forget, candidate, output.

    Shapes: x (B, I), h and c (B, H), w_ih (4H, I), w_hh (4H, H), bias (4H,).
    Returns (h_next, c_next).
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    hid = h.shape[-1]
    if w_ih.shape[0] != 4 * hid or w_hh.shape != (4 * hid, hid) or bias.shape != (4 * hid,):
        raise ShapeError("lstm_cell", x.shape, h.shape, w_ih.shape, w_hh.shape, bias.shape)
    z = linear(x, w_ih) + linear(h, w_hh) + bias
    i = sigmoid(z[:, :hid])
    f = sigmoid(z[:, hid:2 * hid])
    cand = tanh(z[:, 2 * hid:3 * hid])
    o = sigmoid(z[:, 3 * hid:])
    c_next = f * c + i * cand
    h_next = o * tanh(c_next)
    return h_next, c_next


def stop_gradient(x):
    return Tensor(as_tensor(x).data)
