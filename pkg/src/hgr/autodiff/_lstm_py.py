"""Pure numpy LSTM recurrence kernels (fallback for the compiled ``_lstm_ext``).

Both backends share one contract. Arrays are C-contiguous and of one float
dtype; outputs are written into caller-provided buffers. Sequences are read
left to right; the caller flips reversed sequences beforehand.

``lstm_forward(zx, lengths, w_hh, h_out, c_out, gates)``
    zx (B, T, 4H) is the input projection plus bias; lengths (B,) int64;
    w_hh (4H, H). Sequence b occupies positions ``[0, lengths[b])``. Fills
    hidden and cell states (B, T, H) and activated gates (B, T, 4H), gate
    order i, f, g, o. Padded positions are zero.

``lstm_backward(dh, lengths, w_hh, c_out, gates, dz)``
    Writes the pre-activation gradients (B, T, 4H) into ``dz``; zero at
    padded positions.
"""

import numpy as np


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def lstm_forward(zx, lengths, w_hh, h_out, c_out, gates):
    B, T, _ = zx.shape
    H = w_hh.shape[1]
    h = np.zeros((B, H), dtype=zx.dtype)
    c = np.zeros((B, H), dtype=zx.dtype)
    for t in range(T):
        active = (t < lengths)[:, None]
        z = zx[:, t] + h @ w_hh.T if t else zx[:, t]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = np.where(active, f * c + i * g, 0)
        h = np.where(active, o * np.tanh(c), 0)
        c_out[:, t] = c
        h_out[:, t] = h
        gates[:, t] = np.where(active, np.concatenate([i, f, g, o], axis=1), 0)


def lstm_backward(dh, lengths, w_hh, c_out, gates, dz):
    B, T, _ = dh.shape
    H = w_hh.shape[1]
    dh_next = np.zeros((B, H), dtype=dh.dtype)
    dc_next = np.zeros((B, H), dtype=dh.dtype)
    for t in range(T - 1, -1, -1):
        active = (t < lengths)[:, None]
        c_prev = c_out[:, t - 1] if t else np.zeros((B, H), dtype=dh.dtype)
        i, f, g, o = (gates[:, t, k * H:(k + 1) * H] for k in range(4))
        tc = np.tanh(c_out[:, t])
        d = np.where(active, dh[:, t] + dh_next, 0)
        dc = np.where(active, dc_next + d * o * (1 - tc * tc), 0)
        dz[:, t] = np.concatenate([
            dc * g * i * (1 - i),
            dc * c_prev * f * (1 - f),
            dc * i * (1 - g * g),
            d * tc * o * (1 - o),
        ], axis=1)
        dh_next = dz[:, t] @ w_hh
        dc_next = dc * f
