"""Pure-numpy implementations of the hot kernels.

Import-time fallback for the compiled extension (`_ckernels`).  Both
backends implement the same eight functions with identical semantics; the
convolutions here go through an im2col + matmul path so the fallback stays
usable for real training runs, just slower on small shapes.

All functions take and return C-contiguous float64 arrays and perform no
shape validation; the ops layer validates.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv1d_fwd(x, w, b, stride, pad):
    """y[b,o,t'] = b[o] + sum_{c,j} x[b,c,t'*stride+j-pad] * w[o,c,j]."""
    B, Cin, T = x.shape
    Cout, _, k = w.shape
    if pad:
        xp = np.zeros((B, Cin, T + 2 * pad))
        xp[:, :, pad:pad + T] = x
    else:
        xp = x
    Tout = (T + 2 * pad - k) // stride + 1
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]  # B,Cin,Tout,k
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B, Tout, Cin * k)
    y = cols @ w.reshape(Cout, Cin * k).T  # B,Tout,Cout
    y += b
    return np.ascontiguousarray(y.transpose(0, 2, 1))


def conv1d_bwd_x(gy, w, stride, pad, T):
    B, Cout, Tout = gy.shape
    _, Cin, k = w.shape
    gxp = np.zeros((B, Cin, T + 2 * pad))
    gyt = np.ascontiguousarray(gy.transpose(0, 2, 1))  # B,Tout,Cout
    for j in range(k):
        contrib = gyt @ w[:, :, j]  # B,Tout,Cin
        gxp[:, :, j:j + stride * Tout:stride] += contrib.transpose(0, 2, 1)
    return np.ascontiguousarray(gxp[:, :, pad:pad + T]) if pad else gxp


def conv1d_bwd_w(gy, x, k, stride, pad):
    B, Cin, T = x.shape
    Cout = gy.shape[1]
    Tout = gy.shape[2]
    if pad:
        xp = np.zeros((B, Cin, T + 2 * pad))
        xp[:, :, pad:pad + T] = x
    else:
        xp = x
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(B * Tout, Cin * k)
    gym = np.ascontiguousarray(gy.transpose(1, 0, 2)).reshape(Cout, B * Tout)
    return (gym @ cols).reshape(Cout, Cin, k)


def convt1d_fwd(x, w, b):
    """Adjoint of stride=k conv: y[b,o,t*k+j] = b[o] + sum_c x[b,c,t] * w[c,o,j]."""
    B, Cin, T = x.shape
    _, Cout, k = w.shape
    xt = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(B * T, Cin)
    y = (xt @ w.reshape(Cin, Cout * k)).reshape(B, T, Cout, k)
    y = np.ascontiguousarray(y.transpose(0, 2, 1, 3)).reshape(B, Cout, T * k)
    y += b[:, None]
    return y


def convt1d_bwd_x(gy, w):
    Cin, Cout, k = w.shape
    B = gy.shape[0]
    T = gy.shape[2] // k
    gyr = np.ascontiguousarray(
        gy.reshape(B, Cout, T, k).transpose(0, 2, 1, 3)
    ).reshape(B * T, Cout * k)
    gx = gyr @ w.reshape(Cin, Cout * k).T
    return np.ascontiguousarray(gx.reshape(B, T, Cin).transpose(0, 2, 1))


def convt1d_bwd_w(gy, x):
    B, Cin, T = x.shape
    Cout = gy.shape[1]
    k = gy.shape[2] // T
    gyr = np.ascontiguousarray(
        gy.reshape(B, Cout, T, k).transpose(0, 2, 1, 3)
    ).reshape(B * T, Cout * k)
    xt = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(B * T, Cin)
    return (xt.T @ gyr).reshape(Cin, Cout, k)


def maxpool1d_fwd(x, window):
    """Disjoint-window max; returns (values, in-window argmax indices).

    np.argmax takes the first maximum, which realizes the lowest-index
    tie-break rule.
    """
    B, C, T = x.shape
    xr = x.reshape(B, C, T // window, window)
    idx = xr.argmax(axis=3)
    y = np.take_along_axis(xr, idx[..., None], axis=3)[..., 0]
    return np.ascontiguousarray(y), idx.astype(np.int64)


def maxpool1d_bwd(gy, idx, window, T):
    B, C, Tout = gy.shape
    gxr = np.zeros((B, C, Tout, window))
    np.put_along_axis(gxr, idx[..., None], gy[..., None], axis=3)
    return gxr.reshape(B, C, T)
