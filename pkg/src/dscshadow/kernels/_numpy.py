"""Pure NumPy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (or forced
via DSC_KERNELS=python). Same contracts as ``_native``: float64 arrays in
B,C,H,W layout, single-threaded, deterministic.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"


def conv2d_forward(x, k, padding):
    """Cross-correlate x[B,Ci,H,W] with k[Co,Ci,kh,kw], zero padding on H/W."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    kh, kw = k.shape[2], k.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # B,Ci,Ho,Wo,kh,kw
    return np.einsum("bihwuv,oiuv->bohw", win, k, optimize=True)


def conv2d_backward(x, k, gy, padding):
    """Gradients of conv2d_forward w.r.t. input and kernel."""
    kh, kw = k.shape[2], k.shape[3]
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    gk = np.einsum("bihwuv,bohw->oiuv", win, gy, optimize=True)

    # gx: full correlation of gy with the spatially flipped kernel.
    pad = kh - 1 - padding, kw - 1 - padding
    gyp = np.pad(gy, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    gwin = sliding_window_view(gyp, (kh, kw), axis=(2, 3))
    kflip = k[:, :, ::-1, ::-1]
    gx = np.einsum("bohwuv,oiuv->bihw", gwin, kflip, optimize=True)
    return gx, gk


def scan_forward(x, alpha):
    """Recurrent scan along the last axis: h_j = max(alpha @ h_{j-1} + x_j, 0).

    The channel-mixing matrix alpha[C,C] is applied per pixel; the hidden
    state before the first column is zero. Returns the full state history
    h[B,C,H,W] (needed by the backward pass).
    """
    b, c, h, w = x.shape
    xt = np.ascontiguousarray(x.transpose(0, 2, 3, 1))  # B,H,W,C
    ht = np.empty_like(xt)
    at = np.ascontiguousarray(alpha.T)
    state = np.zeros((b, h, c))
    for j in range(w):
        state = np.maximum(state @ at + xt[:, :, j], 0.0)
        ht[:, :, j] = state
    return np.ascontiguousarray(ht.transpose(0, 3, 1, 2))


def scan_backward(x, hout, alpha, gh):
    """Gradients of scan_forward w.r.t. x and alpha, given state history hout."""
    b, c, h, w = x.shape
    ht = hout.transpose(0, 2, 3, 1)  # B,H,W,C
    gt = gh.transpose(0, 2, 3, 1)
    gx = np.empty((b, h, w, c))
    galpha = np.zeros_like(alpha)
    carry = np.zeros((b, h, c))
    for j in range(w - 1, -1, -1):
        gz = (gt[:, :, j] + carry) * (ht[:, :, j] > 0.0)
        gx[:, :, j] = gz
        if j > 0:
            prev = ht[:, :, j - 1]
            galpha += gz.reshape(-1, c).T @ prev.reshape(-1, c)
        carry = gz @ alpha
    return np.ascontiguousarray(gx.transpose(0, 3, 1, 2)), galpha
