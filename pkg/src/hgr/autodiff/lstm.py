"""Fused LSTM-over-a-sequence primitive with a selectable kernel backend.

The recurrence is the one inner loop that cannot be vectorised across time,
so it runs in a compiled kernel when ``_lstm_ext`` is importable and falls
back to numpy otherwise. Set ``HGR_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _lstm_py
from .tensor import ShapeError, as_tensor, make

try:
    if os.environ.get("HGR_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from . import _lstm_ext
except ImportError:
    _lstm_ext = None

KERNELS = {"python": _lstm_py}
if _lstm_ext is not None:
    KERNELS["compiled"] = _lstm_ext

BACKEND = "compiled" if _lstm_ext is not None else "python"


def set_backend(name):
    global BACKEND
    if name not in KERNELS:
        raise ValueError(f"unknown or unavailable LSTM backend {name!r}; have {sorted(KERNELS)}")
    BACKEND = name


def lstm_sequence(x, lengths, w_ih, w_hh, bias, reverse=False, backend=None):
    """Run an LSTM over padded sequences.

    x is (B, T, I); sequence b is ``x[b, :lengths[b]]``. Returns hidden
    states (B, T, H) with zeros at padded positions. With ``reverse`` each
    sequence is read from its last real token back to the first.
    """
    x, w_ih, w_hh, bias = (as_tensor(t) for t in (x, w_ih, w_hh, bias))
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    if x.ndim != 3 or lengths.shape != (x.shape[0],):
        raise ShapeError("lstm_sequence", x.shape, lengths.shape)
    H = w_hh.shape[1]
    if w_ih.shape != (4 * H, x.shape[2]) or w_hh.shape != (4 * H, H) or bias.shape != (4 * H,):
        raise ShapeError("lstm_sequence", x.shape, w_ih.shape, w_hh.shape, bias.shape)
    if lengths.size and (lengths.min() < 1 or lengths.max() > x.shape[1]):
        raise ShapeError("lstm_sequence", x.shape, detail="lengths must lie in [1, T]")
    dt = x.dtype
    kern = KERNELS[backend or BACKEND]
    if dt not in (np.float32, np.float64):
        kern = _lstm_py
    xs, wi, wh, bb = (np.ascontiguousarray(a.data, dtype=dt) for a in (x, w_ih, w_hh, bias))
    B, T, I = xs.shape
    G = 4 * H
    perm = _reversal(lengths, T) if reverse else None
    xr = xs[np.arange(B)[:, None], perm] if reverse else xs
    zx = np.ascontiguousarray((xr.reshape(B * T, I) @ wi.T + bb).reshape(B, T, G))
    h_out = np.zeros((B, T, H), dtype=dt)
    c_out = np.zeros((B, T, H), dtype=dt)
    gates = np.zeros((B, T, G), dtype=dt)
    kern.lstm_forward(zx, lengths, wh, h_out, c_out, gates)
    out = h_out[np.arange(B)[:, None], perm] if reverse else h_out

    def bw(g):
        g = np.ascontiguousarray(g, dtype=dt)
        if reverse:
            g = np.ascontiguousarray(g[np.arange(B)[:, None], perm])
        dz = np.zeros((B, T, G), dtype=dt)
        kern.lstm_backward(g, lengths, wh, c_out, gates, dz)
        dz2 = dz.reshape(B * T, G)
        dx = (dz2 @ wi).reshape(B, T, I)
        if reverse:
            dx = dx[np.arange(B)[:, None], perm]
        dwi = dz2.T @ xr.reshape(B * T, I)
        dwh = dz[:, 1:].reshape(-1, G).T @ h_out[:, :-1].reshape(-1, H)
        return dx, dwi, dwh, dz2.sum(axis=0)

    return make(np.ascontiguousarray(out), (x, w_ih, w_hh, bias), bw, "lstm_sequence")


def _reversal(lengths, T):
    """Per-row index map that reverses each sequence inside its length; an involution."""
    s = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(s < L, L - 1 - s, s)
