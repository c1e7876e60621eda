# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence kernels. Same contract as ``_lstm_py``.

Each time step is one BLAS gemm over the whole batch followed by fused gate
activations. The activation loops are branch-free over contiguous rows so
the compiler can map ``tanh`` to its vector math library.
"""

import numpy as np
from cython cimport floating
from libc.math cimport tanh, tanhf
from scipy.linalg.cython_blas cimport dgemm, sgemm


cdef inline void _gemm(char *ta, int m, int n, int k, floating *a, int lda, floating *b, int ldb,
                       floating beta, floating *c, int ldc) noexcept nogil:
    # column-major C(m, n) = op(A) B + beta C
    cdef char *tn = b"N"
    cdef floating one = 1
    if floating is float:
        sgemm(ta, tn, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(ta, tn, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


cdef inline void _activate(floating *z, const floating *scale, const floating *shift, Py_ssize_t n) noexcept nogil:
    # sigmoid(z) = 0.5 tanh(z/2) + 0.5 on i, f, o; tanh(z) on g
    cdef Py_ssize_t k
    if floating is float:
        for k in range(n):
            z[k] = scale[k] * tanhf(scale[k] * z[k]) + shift[k]
    else:
        for k in range(n):
            z[k] = scale[k] * tanh(scale[k] * z[k]) + shift[k]


cdef inline void _cell(const floating *g, const floating *cp, floating *c, floating *h, Py_ssize_t H) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(H):
        c[k] = g[H + k] * cp[k] + g[k] * g[2 * H + k]
    if floating is float:
        for k in range(H):
            h[k] = g[3 * H + k] * tanhf(c[k])
    else:
        for k in range(H):
            h[k] = g[3 * H + k] * tanh(c[k])


cdef inline void _tanh_into(const floating *c, floating *out, Py_ssize_t H) noexcept nogil:
    cdef Py_ssize_t k
    if floating is float:
        for k in range(H):
            out[k] = tanhf(c[k])
    else:
        for k in range(H):
            out[k] = tanh(c[k])


def _scales(Py_ssize_t H, dtype):
    scale = np.full(4 * H, 0.5, dtype=dtype)
    shift = np.full(4 * H, 0.5, dtype=dtype)
    scale[2 * H:3 * H] = 1
    shift[2 * H:3 * H] = 0
    return scale, shift


def lstm_forward(floating[:, :, ::1] zx, const long long[::1] lengths, floating[:, ::1] w_hh,
                 floating[:, :, ::1] h_out, floating[:, :, ::1] c_out, floating[:, :, ::1] gates):
    cdef Py_ssize_t B = zx.shape[0], T = zx.shape[1], H = w_hh.shape[1], G = 4 * H
    cdef Py_ssize_t b, t, k
    if B == 0 or T == 0:
        return
    dtype = np.float32 if floating is float else np.float64
    scale_arr, shift_arr = _scales(H, dtype)
    zeros_arr = np.zeros(H, dtype=dtype)
    cdef floating[::1] scale = scale_arr
    cdef floating[::1] shift = shift_arr
    cdef floating[::1] zeros = zeros_arr
    cdef floating *row
    with nogil:
        for t in range(T):
            for b in range(B):
                for k in range(G):
                    gates[b, t, k] = zx[b, t, k]
            if t > 0:
                # gates[:, t] += h_out[:, t-1] @ w_hh.T  as column-major (G, B) += w_hh (G, H) h (H, B)
                _gemm(b"T", <int>G, <int>B, <int>H, &w_hh[0, 0], <int>H, &h_out[0, t - 1, 0], <int>(T * H),
                      <floating>1, &gates[0, t, 0], <int>(T * G))
            for b in range(B):
                row = &gates[b, t, 0]
                if t >= lengths[b]:
                    for k in range(G):
                        row[k] = 0
                    continue
                _activate(row, &scale[0], &shift[0], G)
                _cell(row, &c_out[b, t - 1, 0] if t > 0 else &zeros[0], &c_out[b, t, 0], &h_out[b, t, 0], H)


def lstm_backward(floating[:, :, ::1] dh, const long long[::1] lengths, floating[:, ::1] w_hh,
                  floating[:, :, ::1] c_out, floating[:, :, ::1] gates, floating[:, :, ::1] dz):
    cdef Py_ssize_t B = dh.shape[0], T = dh.shape[1], H = w_hh.shape[1], G = 4 * H
    cdef Py_ssize_t b, t, k
    cdef floating d, dc, tc, gi, gf, gg, go
    if B == 0 or T == 0:
        return
    dtype = np.float32 if floating is float else np.float64
    dh_next_arr = np.zeros((B, H), dtype=dtype)
    dc_next_arr = np.zeros((B, H), dtype=dtype)
    tanh_arr = np.zeros(H, dtype=dtype)
    zeros_arr = np.zeros(H, dtype=dtype)
    cdef floating[:, ::1] dh_next = dh_next_arr
    cdef floating[:, ::1] dc_next = dc_next_arr
    cdef floating[::1] tcs = tanh_arr
    cdef floating[::1] zeros = zeros_arr
    cdef floating *g
    cdef floating *cp
    cdef floating *out
    cdef const floating *dht
    cdef floating *dhn
    cdef floating *dcn
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                out = &dz[b, t, 0]
                if t >= lengths[b]:
                    for k in range(G):
                        out[k] = 0
                    continue
                g = &gates[b, t, 0]
                cp = &c_out[b, t - 1, 0] if t > 0 else &zeros[0]
                dht = &dh[b, t, 0]
                dhn = &dh_next[b, 0]
                dcn = &dc_next[b, 0]
                _tanh_into(&c_out[b, t, 0], &tcs[0], H)
                for k in range(H):
                    gi = g[k]
                    gf = g[H + k]
                    gg = g[2 * H + k]
                    go = g[3 * H + k]
                    tc = tcs[k]
                    d = dht[k] + dhn[k]
                    dc = dcn[k] + d * go * (1 - tc * tc)
                    out[k] = dc * gg * gi * (1 - gi)
                    out[H + k] = dc * cp[k] * gf * (1 - gf)
                    out[2 * H + k] = dc * gi * (1 - gg * gg)
                    out[3 * H + k] = d * tc * go * (1 - go)
                    dcn[k] = dc * gf
            if t > 0:
                # dh_next = dz[:, t] @ w_hh  as column-major (H, B) = w_hh (H, G) dz (G, B)
                _gemm(b"N", <int>H, <int>B, <int>G, &w_hh[0, 0], <int>H, &dz[0, t, 0], <int>(T * G),
                      <floating>0, &dh_next[0, 0], <int>H)
