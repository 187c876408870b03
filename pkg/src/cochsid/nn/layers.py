"""Forward/backward kernels for the CNN, on NCHW numpy arrays.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward`` consumes
the upstream gradient and that cache.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
POOL = 3
POOL_STRIDE = 2


def glorot_init(fan_in, fan_out, shape, seed, dtype=np.float64):
    """Uniform samples in [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fans must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    g = np.random.default_rng(seed)
    return g.uniform(-limit, limit, size=shape).astype(dtype)


def _same_pads(k):
    total = k - 1
    # odd totals put the extra row/column at bottom/right
    return total // 2, total - total // 2


def conv2d_forward(x, w, b):
    """'Same'-padded, stride-1 cross-correlation.

    x: (N, C, H, W); w: (F, C, kh, kw); b: (F,). Returns (N, F, H, W).
    """
    N, C, H, W = x.shape
    F, Cw, kh, kw = w.shape
    if Cw != C:
        raise ValueError(f"conv2d: input has {C} channels, weights expect {Cw}")
    if b.shape != (F,):
        raise ValueError(f"conv2d: bias shape {b.shape} != ({F},)")
    (pt, pb), (pl, pr) = _same_pads(kh), _same_pads(kw)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N, C, H, W, kh, kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * H * W, C * kh * kw)
    out = cols @ w.reshape(F, -1).T + b
    out = out.reshape(N, H, W, F).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, cols, w)


def conv2d_backward(dout, cache):
    x_shape, cols, w = cache
    N, C, H, W = x_shape
    F, _, kh, kw = w.shape
    d = dout.transpose(0, 2, 3, 1).reshape(N * H * W, F)
    dw = (d.T @ cols).reshape(w.shape)
    db = d.sum(axis=0)
    dcols = (d @ w.reshape(F, -1)).reshape(N, H, W, C, kh, kw)
    (pt, pb), (pl, pr) = _same_pads(kh), _same_pads(kw)
    dxp = np.zeros((N, C, H + pt + pb, W + pl + pr), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + H, j:j + W] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pt:pt + H, pl:pl + W]
    return np.ascontiguousarray(dx), dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, update_running=True):
    """Per-channel batch norm. In train mode the running stats are updated in place."""
    if train:
        N, C, H, W = x.shape
        if N * H * W < 2:
            raise ValueError("batchnorm: train mode needs batch*H*W >= 2")
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        if update_running:
            running_mean *= BN_MOMENTUM
            running_mean += (1 - BN_MOMENTUM) * mu
            running_var *= BN_MOMENTUM
            running_var += (1 - BN_MOMENTUM) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv_std, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    s = inv_std[None, :, None, None]
    if not train:
        return dxhat * s, dgamma, dbeta
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dx = (s / m) * (m * dxhat
                    - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def pool_out_dim(d, window=POOL, stride=POOL_STRIDE):
    return (d - window) // stride + 1


def _pool_slices(H, W, Ho, Wo, window, stride):
    for k in range(window * window):
        i, j = divmod(k, window)
        yield k, (slice(None), slice(None), slice(i, i + stride * (Ho - 1) + 1, stride),
                  slice(j, j + stride * (Wo - 1) + 1, stride))


def maxpool_forward(x, window=POOL, stride=POOL_STRIDE):
    N, C, H, W = x.shape
    if H < window or W < window:
        raise ValueError(f"maxpool: spatial dims {H}x{W} smaller than window {window}")
    Ho, Wo = pool_out_dim(H, window, stride), pool_out_dim(W, window, stride)
    out = None
    for _, sl in _pool_slices(H, W, Ho, Wo, window, stride):
        out = x[sl].copy() if out is None else np.maximum(out, x[sl])
    # first maximum in row-major window order wins ties
    arg = np.full(out.shape, -1, dtype=np.int8)
    for k, sl in _pool_slices(H, W, Ho, Wo, window, stride):
        arg[(arg < 0) & (x[sl] == out)] = k
    return out, (x.shape, arg, window, stride)


def maxpool_backward(dout, cache):
    x_shape, arg, window, stride = cache
    N, C, H, W = x_shape
    Ho, Wo = arg.shape[2:]
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for k, sl in _pool_slices(H, W, Ho, Wo, window, stride):
        dx[sl] += dout * (arg == k)
    return dx


def dense_forward(x, w, b):
    """x: (N, D) -> (N, K) with w: (D, K)."""
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy over the batch. Returns (loss, probs, dlogits)."""
    labels = np.asarray(labels)
    K = logits.shape[-1]
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"label out of range [0, {K})")
    z = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_p = z - log_norm
    n = logits.shape[0]
    loss = -log_p[np.arange(n), labels].mean()
    probs = np.exp(log_p)
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    return float(loss), probs, d / n


def dense_softmax_xent(features, w, b, labels):
    """Dense output layer plus softmax cross-entropy in one step.

    Returns ``(loss, probs, (dfeatures, dw, db))``.
    """
    x = features.reshape(features.shape[0], -1)
    logits, cache = dense_forward(x, w, b)
    loss, probs, dlogits = softmax_xent(logits, labels)
    dx, dw, db = dense_backward(dlogits, cache)
    return loss, probs, (dx.reshape(features.shape), dw, db)
