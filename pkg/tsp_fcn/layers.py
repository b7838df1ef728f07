"""
forward/backward primitives on single h x w x c arrays

each *_forward returns (out, cache); the matching *_backward takes (dout, cache)
and returns the input gradient plus parameter gradients where there are any
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def xavier_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float32):
    """U(-l, l) with l = sqrt(6 / (fan_in + fan_out)), variance 2 / (fan_in + fan_out)"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


##########################################################################################
# CONVOLUTION (stride 1, same padding)
##########################################################################################
def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """
    x: (H, W, Cin), w: (k, k, Cin, Cout) with k odd, b: (Cout,)
    """
    k = w.shape[0]
    if k == 1:
        return x @ w[0, 0] + b, (x, w, None)
    p = k // 2
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    windows = sliding_window_view(xp, (k, k), axis=(0, 1))
    out = np.tensordot(windows, w.transpose(2, 0, 1, 3), axes=3) + b
    return out, (x, w, windows)


def conv_backward(dout: np.ndarray, cache):
    x, w, windows = cache
    db = dout.sum(axis=(0, 1))
    k = w.shape[0]
    if k == 1:
        dw = (x.reshape(-1, x.shape[-1]).T @ dout.reshape(-1, dout.shape[-1]))[None, None]
        return dout @ w[0, 0].T, dw, db
    H, W = x.shape[:2]
    p = k // 2
    dw = np.tensordot(windows, dout, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)
    dxp = np.zeros((H + 2 * p, W + 2 * p, x.shape[2]), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[i : i + H, j : j + W] += dout @ w[i, j].T
    return dxp[p : p + H, p : p + W], dw, db


##########################################################################################
# 2 x 2 MAX POOLING
##########################################################################################
def maxpool_forward(x: np.ndarray):
    H, W, C = x.shape
    windows = x.reshape(H // 2, 2, W // 2, 2, C).transpose(0, 2, 1, 3, 4).reshape(H // 2, W // 2, 4, C)
    idx = np.argmax(windows, axis=2)
    out = np.take_along_axis(windows, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, (x.shape, idx)


def maxpool_backward(dout: np.ndarray, cache):
    (H, W, C), idx = cache
    grad = np.zeros((H // 2, W // 2, 4, C), dtype=dout.dtype)
    np.put_along_axis(grad, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    return grad.reshape(H // 2, W // 2, 2, 2, C).transpose(0, 2, 1, 3, 4).reshape(H, W, C)


##########################################################################################
# TRANSPOSED CONVOLUTION: kernel 2f, stride f, crop f // 2 -> exact x f upsampling
##########################################################################################
def upsample_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, factor: int):
    """
    x: (H, W, Cin), w: (2f, 2f, Cin, Cout), b: (Cout,) -> (H f, W f, Cout)

    kernel tap u = s f + r lands input pixel a on output block a + s, offset r
    """
    H, W, _ = x.shape
    f = factor
    cout = w.shape[-1]
    wr = w.reshape(2, f, 2, f, w.shape[2], cout)
    full = np.zeros((H + 1, f, W + 1, f, cout), dtype=np.result_type(x, w))
    for s in (0, 1):
        for t in (0, 1):
            full[s : s + H, :, t : t + W] += np.einsum("abc,rqco->arbqo", x, wr[s, :, t], optimize=True)
    c = f // 2
    out = full.reshape((H + 1) * f, (W + 1) * f, cout)[c : c + H * f, c : c + W * f] + b
    return out, (x, w, factor)


def upsample_backward(dout: np.ndarray, cache):
    x, w, f = cache
    H, W, cin = x.shape
    cout = w.shape[-1]
    c = f // 2
    grad = np.zeros(((H + 1) * f, (W + 1) * f, cout), dtype=dout.dtype)
    grad[c : c + H * f, c : c + W * f] = dout
    gr = grad.reshape(H + 1, f, W + 1, f, cout)
    wr = w.reshape(2, f, 2, f, cin, cout)
    dx = np.zeros_like(x, dtype=dout.dtype)
    dwr = np.zeros(wr.shape, dtype=dout.dtype)
    for s in (0, 1):
        for t in (0, 1):
            g = gr[s : s + H, :, t : t + W]
            dx += np.einsum("arbqo,rqco->abc", g, wr[s, :, t], optimize=True)
            dwr[s, :, t] = np.einsum("abc,arbqo->rqco", x, g, optimize=True)
    return dx, dwr.reshape(w.shape), dout.sum(axis=(0, 1))


##########################################################################################
# POINTWISE
##########################################################################################
def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dropout_forward(x: np.ndarray, rate: float, rng: np.random.Generator):
    """inverted dropout; rate 0 is the identity"""
    if rate <= 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout: np.ndarray, cache):
    return dout if cache is None else dout * cache
