"""Compiled inner loops for the forward passes.

These kernels define the package's arithmetic contract: every output element
is accumulated bias-first, then in ascending (in_channel, kernel_tap) order
for convolutions and ascending input-index order for dense layers. Tests
compare them bit-for-bit against plain nested-loop oracles, which is only
possible because the accumulation order is fixed (fastmath stays off so LLVM
cannot reassociate the sums).

Arrays are channels-last (time dimension before channels) so the innermost
loop runs over a contiguous channel vector and vectorizes.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=False, cache=True)
def conv1d_fwd(x_pad, w_t, bias, stride, out):
    # x_pad: [B, L_padded, C_in], w_t: [C_in, K, C_out], out: [B, L_out, C_out]
    n_batch = x_pad.shape[0]
    c_in = x_pad.shape[2]
    k_size = w_t.shape[1]
    c_out = w_t.shape[2]
    l_out = out.shape[1]
    for n in prange(n_batch):
        for j in range(l_out):
            for o in range(c_out):
                out[n, j, o] = bias[o]
        for c in range(c_in):
            for k in range(k_size):
                for j in range(l_out):
                    xv = x_pad[n, j * stride + k, c]
                    for o in range(c_out):
                        out[n, j, o] += xv * w_t[c, k, o]


@njit(parallel=True, fastmath=False, cache=True)
def dense_fwd(x, w_t, bias, out):
    # x: [B, D_in], w_t: [D_in, D_out], out: [B, D_out]
    n_batch = x.shape[0]
    d_in = x.shape[1]
    d_out = w_t.shape[1]
    for n in prange(n_batch):
        for u in range(d_out):
            out[n, u] = bias[u]
        for i in range(d_in):
            xv = x[n, i]
            for u in range(d_out):
                out[n, u] += xv * w_t[i, u]
