"""Layer primitives as forward/backward function pairs.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache and returns the input
gradient (plus parameter gradients where the layer has any). Tensors are
NCHW: batch, channels, frequency bins, frames.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Ho, Wo, kh, kw) strided view of a padded input."""
    v = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return v[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


# --- convolution -------------------------------------------------------------


def conv2d_forward(x, w, b, stride=1, padding=0):
    """Cross-correlation of x (N,C,H,W) with w (O,C,kh,kw); b is (O,) or None."""
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ValueError(f"conv2d: input has {c} channels, weight expects {cw}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(wd, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: kernel {kh}x{kw} does not fit padded input {h}x{wd}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols = _windows(xp, kh, kw, stride, ho, wo).transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    out = cols @ w.reshape(o, -1).T
    if b is not None:
        out += b
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    cache = (x.shape, xp.shape, cols, w, b is not None, stride, padding, ho, wo)
    return np.ascontiguousarray(out), cache


def conv2d_backward(dout, cache):
    """Returns (dx, dw, db); db is None for a bias-free convolution."""
    x_shape, xp_shape, cols, w, has_bias, stride, padding, ho, wo = cache
    n, c, h, wd = x_shape
    o, _, kh, kw = w.shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0) if has_bias else None
    dcols = (dmat @ w.reshape(o, -1)).reshape(n, ho, wo, c, kh, kw)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, padding : padding + h, padding : padding + wd] if padding else dxp
    return np.ascontiguousarray(dx), dw, db


# --- batch normalization -----------------------------------------------------


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel batch norm. In train mode running stats are updated in place."""
    if train:
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.mean(axis=(0, 2, 3), dtype=np.float64)
        var = ((x - mean.reshape(1, -1, 1, 1).astype(x.dtype)) ** 2).mean(axis=(0, 2, 3), dtype=np.float64)
        unbiased = var * m / max(m - 1, 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased.astype(running_var.dtype)
    else:
        mean, var = running_mean, running_var
    mean = mean.astype(x.dtype).reshape(1, -1, 1, 1)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(1, -1, 1, 1)
    xhat = (x - mean) * inv_std
    out = xhat * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(gamma.dtype)
    dbeta = dout.sum(axis=(0, 2, 3), dtype=np.float64).astype(gamma.dtype)
    dxhat = dout * gamma.reshape(1, -1, 1, 1)
    if not train:
        return dxhat * inv_std, dgamma, dbeta
    mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
    mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
    dx = inv_std * (dxhat - mean_d - xhat * mean_dx)
    return dx, dgamma, dbeta


# --- elementwise -------------------------------------------------------------


def relu_forward(x):
    out = np.maximum(x, 0)
    return out, out > 0


def relu_backward(dout, mask):
    return dout * mask


def sigmoid(z):
    # numerically safe for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# --- pooling -----------------------------------------------------------------


def maxpool_forward(x, kernel=3, stride=2, padding=1):
    n, c, h, w = x.shape
    ho = conv_output_size(h, kernel, stride, padding)
    wo = conv_output_size(w, kernel, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"maxpool: window {kernel} does not fit input {h}x{w}")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf)
    win = _windows(xp, kernel, kernel, stride, ho, wo).reshape(n, c, ho, wo, kernel * kernel)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, xp.shape, idx, kernel, stride, padding)


def maxpool_backward(dout, cache):
    x_shape, xp_shape, idx, kernel, stride, padding = cache
    _, _, h, w = x_shape
    ho, wo = idx.shape[2:]
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for k in range(kernel * kernel):
        i, j = divmod(k, kernel)
        dxp[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += dout * (idx == k)
    return dxp[:, :, padding : padding + h, padding : padding + w]


def global_avg_pool_forward(x):
    out = x.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)
    return out, x.shape


def global_avg_pool_backward(dout, x_shape):
    n, c, h, w = x_shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], x_shape).copy()


# --- dense -------------------------------------------------------------------


def linear_forward(x, w, b):
    """x (N, D) times w (M, D) transposed plus b (M,)."""
    return x @ w.T + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dout @ w, dout.T @ x, dout.sum(axis=0)
