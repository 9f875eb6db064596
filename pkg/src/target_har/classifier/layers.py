"""Forward/backward primitives on NHWC arrays.

Each `*_forward` returns (output, cache); the matching `*_backward` takes the
upstream gradient and the cache.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def conv_output_size(size: int, stride: int) -> int:
    # 3x3 kernel, padding 1: ceil(size / stride)
    return (size + stride - 1) // stride


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """x (N, H, W, Cin), w (3, 3, Cin, Cout), b (Cout,), zero padding 1."""
    n, h, wd, cin = x.shape
    cout = w.shape[-1]
    ho, wo = conv_output_size(h, stride), conv_output_size(wd, stride)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, ho, wo, 3, 3, cin), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, :, :, di, dj, :] = xp[:, di : di + stride * ho : stride, dj : dj + stride * wo : stride, :]
    cols2d = cols.reshape(n * ho * wo, 9 * cin)
    out = cols2d @ w.reshape(9 * cin, cout) + b
    return out.reshape(n, ho, wo, cout), (x.shape, cols2d, w, stride)


def conv3x3_backward(dout: np.ndarray, cache, need_dx: bool = True):
    x_shape, cols2d, w, stride = cache
    n, h, wd, cin = x_shape
    _, ho, wo, cout = dout.shape
    d2 = dout.reshape(-1, cout)
    dw = (cols2d.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(9 * cin, cout).T).reshape(n, ho, wo, 3, 3, cin)
    dxp = np.zeros((n, h + 2, wd + 2, cin), dtype=dout.dtype)
    for di in range(3):
        for dj in range(3):
            dxp[:, di : di + stride * ho : stride, dj : dj + stride * wo : stride, :] += dcols[:, :, :, di, dj, :]
    return dxp[:, 1 : h + 1, 1 : wd + 1, :], dw, db


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool, momentum: float = 0.9):
    """Normalize over all axes but the last. Returns (out, cache, new_mean, new_var)."""
    axes = tuple(range(x.ndim - 1))
    if train:
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * running_mean + (1.0 - momentum) * mu
        new_var = momentum * running_var + (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv_std
    out = gamma * xhat + beta
    return out, (xhat, inv_std, gamma, train), new_mean, new_var


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if not train:
        return dxhat * inv_std, dgamma, dbeta
    m = dout.size // dout.shape[-1]
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, dgamma, dbeta


def dropout_forward(x, p: float, rng, train: bool):
    """Inverted dropout; identity in eval mode or when p == 0."""
    if not train or p == 0.0:
        return x, None
    mask = (rng.random(x.shape, dtype=x.dtype) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def global_avg_pool_forward(x):
    return x.mean(axis=(1, 2)), x.shape


def global_avg_pool_backward(dout, shape):
    n, h, w, c = shape
    return np.broadcast_to(dout[:, None, None, :] / (h * w), shape).copy()


def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n
