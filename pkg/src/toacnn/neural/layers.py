"""Forward/backward pairs for every layer type, float32 throughout.

Each forward returns (output, cache); the matching backward takes (cache,
upstream gradient) and returns the input gradient plus parameter gradients
where the layer has any. Data layout is channels-last: (H, W, C) activations,
(kh, kw, Cin, Cout) kernels, (in, out) dense weights.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, kernels, bias):
    """Same-size convolution, stride 1, zero padding, odd kernel."""
    kh, kw, _, _ = kernels.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (H, W, Cin, kh, kw)
    y = np.einsum("hwcij,ijco->hwo", win, kernels, optimize=True) + bias
    return y.astype(np.float32, copy=False), (xp, kernels)


def conv2d_backward(cache, d_out):
    xp, kernels = cache
    kh, kw, _, _ = kernels.shape
    ph, pw = kh // 2, kw // 2
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))
    d_bias = d_out.sum(axis=(0, 1))
    d_kernels = np.einsum("hwcij,hwo->ijco", win, d_out, optimize=True)
    # d(x padded) is the correlation of zero-extended d_out with the
    # spatially flipped kernels; cropping the pad margin gives dx
    dp = np.pad(d_out, ((kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    dwin = sliding_window_view(dp, (kh, kw), axis=(0, 1))
    kf = kernels[::-1, ::-1]
    dxp = np.einsum("hwoij,ijco->hwc", dwin, kf, optimize=True)
    h, w = xp.shape[0] - 2 * ph, xp.shape[1] - 2 * pw
    dx = dxp[ph : ph + h, pw : pw + w]
    return (
        dx.astype(np.float32, copy=False),
        d_kernels.astype(np.float32, copy=False),
        d_bias.astype(np.float32, copy=False),
    )


def maxpool_forward(x, size):
    """Non-overlapping max pooling, stride equal to window size.

    Ties resolve to the first maximum in row-major window order (argmax of
    the flattened window), and backward routes the gradient only there.
    """
    h, w, c = x.shape
    if h % size or w % size:
        raise ValueError(f"pool size {size} does not divide input {h}x{w}")
    hs, ws = h // size, w // size
    xw = x.reshape(hs, size, ws, size, c).transpose(0, 2, 1, 3, 4).reshape(hs, ws, size * size, c)
    idx = np.argmax(xw, axis=2)
    y = np.take_along_axis(xw, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return y, (idx, x.shape, size)


def maxpool_backward(cache, d_out):
    idx, (h, w, c), size = cache
    hs, ws = h // size, w // size
    dxw = np.zeros((hs, ws, size * size, c), dtype=np.float32)
    np.put_along_axis(dxw, idx[:, :, None, :], d_out[:, :, None, :], axis=2)
    dx = dxw.reshape(hs, ws, size, size, c).transpose(0, 2, 1, 3, 4).reshape(h, w, c)
    return dx


def dense_forward(x, weight, bias):
    """Affine map on a flat vector; weight is (in, out)."""
    return x @ weight + bias, (x, weight)


def dense_backward(cache, d_out):
    x, weight = cache
    d_weight = np.outer(x, d_out).astype(np.float32, copy=False)
    dx = weight @ d_out
    return dx.astype(np.float32, copy=False), d_weight, d_out.astype(np.float32, copy=False)


def tconv_forward(x, kernels, bias):
    """Transposed convolution with stride equal to the kernel size.

    Every input pixel expands into one disjoint f-by-f output block, so the
    output is an exact f-fold upsampling with no overlap between blocks.
    """
    f = kernels.shape[0]
    h, w, _ = x.shape
    cout = kernels.shape[3]
    y = np.einsum("hwc,abco->hawbo", x, kernels, optimize=True)
    y = y.reshape(h * f, w * f, cout) + bias
    return y.astype(np.float32, copy=False), (x, kernels)


def tconv_backward(cache, d_out):
    x, kernels = cache
    f = kernels.shape[0]
    h, w, _ = x.shape
    cout = kernels.shape[3]
    dyb = d_out.reshape(h, f, w, f, cout)
    d_bias = d_out.sum(axis=(0, 1))
    d_kernels = np.einsum("hwc,hawbo->abco", x, dyb, optimize=True)
    dx = np.einsum("hawbo,abco->hwc", dyb, kernels, optimize=True)
    return (
        dx.astype(np.float32, copy=False),
        d_kernels.astype(np.float32, copy=False),
        d_bias.astype(np.float32, copy=False),
    )


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(cache, d_out):
    return np.where(cache > 0.0, d_out, np.float32(0.0))


def mse_loss(pred, target):
    """Mean squared error over all entries and its gradient w.r.t. pred."""
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(np.float32, copy=False)
