"""Differentiable array operations with hand-written backward passes.

Every forward function accepts either a single sample (``[C, H, W]``,
``[n]``, ...) or a batch with a leading sample axis; backward functions
mirror whatever layout the forward received.  Arrays keep their input
dtype: training runs in float32, gradient checks in float64.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, StateError

__all__ = [
    "conv2d",
    "conv2d_backward",
    "relu",
    "relu_backward",
    "maxpool2d",
    "maxpool2d_backward",
    "dense",
    "dense_backward",
    "softmax",
    "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
    "averaged_softmax_nll",
    "dropout",
    "dropout_backward",
    "conv3d_depthwise",
    "conv3d_depthwise_backward",
]


def _batched(x, ndim):
    x = np.asarray(x)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise DimensionError(f"expected {ndim - 1}-D or {ndim}-D input, got shape {x.shape}")
    return x, False


def _require_cache(value, name):
    if value is None:
        raise StateError(f"{name}: no forward cache; run the forward pass first")


# ---------------------------------------------------------------------------
# 2-D convolution
# ---------------------------------------------------------------------------

def _im2col(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)
    return cols, ho, wo


def _check_conv(x, kernels, stride, pad):
    if stride < 1 or pad < 0:
        raise DimensionError(f"invalid stride={stride} / pad={pad}")
    if kernels.ndim != 4:
        raise DimensionError(f"kernels must be [C_out, C_in, kH, kW], got {kernels.shape}")
    if x.shape[1] != kernels.shape[1]:
        raise DimensionError(
            f"input has {x.shape[1]} channels but kernels expect {kernels.shape[1]}")
    kh, kw = kernels.shape[2:]
    if kh > x.shape[2] + 2 * pad or kw > x.shape[3] + 2 * pad:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {x.shape[2:]}")


def conv2d(x, kernels, bias, stride=1, pad=0, return_cols=False):
    """Cross-correlate ``x`` ([C_in,H,W] or [B,C_in,H,W]) with zero padding.

    Output spatial size is ``(H + 2*pad - kH) // stride + 1`` (same for W).
    With ``return_cols`` the unfolded input is returned as well so the
    backward pass can reuse it.
    """
    xb, single = _batched(x, 4)
    kernels = np.asarray(kernels)
    _check_conv(xb, kernels, stride, pad)
    c_out, _, kh, kw = kernels.shape
    cols, ho, wo = _im2col(xb, kh, kw, stride, pad)
    out = cols @ kernels.reshape(c_out, -1).T
    out += np.asarray(bias, dtype=out.dtype)
    out = out.reshape(xb.shape[0], ho, wo, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    out = out[0] if single else out
    return (out, cols) if return_cols else out


def conv2d_backward(grad_out, x, kernels, stride=1, pad=0, cols=None, input_grad=True):
    """Gradients of ``sum(grad_out * conv2d(x, kernels, bias))``.

    Returns ``(grad_input, grad_kernels, grad_bias)``; ``grad_input`` is
    ``None`` when ``input_grad`` is false.  ``cols`` is the unfolded input
    from the forward pass, recomputed when omitted.
    """
    _require_cache(x, "conv2d_backward")
    xb, single = _batched(x, 4)
    gb, _ = _batched(grad_out, 4)
    kernels = np.asarray(kernels)
    c_out, c_in, kh, kw = kernels.shape
    b, _, h, w = xb.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if gb.shape != (b, c_out, ho, wo):
        raise DimensionError(f"grad_out shape {gb.shape} != forward output {(b, c_out, ho, wo)}")
    if cols is None:
        cols, _, _ = _im2col(xb, kh, kw, stride, pad)
    g = gb.transpose(0, 2, 3, 1).reshape(-1, c_out)
    grad_k = (g.T @ cols).reshape(kernels.shape)
    grad_b = g.sum(axis=0, dtype=np.float64).astype(g.dtype)
    if not input_grad:
        return None, grad_k, grad_b
    if stride == 1 and kh == kw and pad <= kh - 1:
        # stride-1 input gradient is a full correlation with the flipped kernels
        flipped = np.ascontiguousarray(kernels[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dx = conv2d(gb, flipped, np.zeros(c_in, dtype=gb.dtype), 1, kh - 1 - pad)
    else:
        dcols = (g @ kernels.reshape(c_out, -1)).reshape(b, ho, wo, c_in, kh, kw)
        dcols = dcols.transpose(0, 3, 1, 2, 4, 5)
        dx = np.zeros((b, c_in, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[..., i, j]
        if pad:
            dx = dx[:, :, pad:-pad, pad:-pad]
        dx = np.ascontiguousarray(dx)
    return (dx[0] if single else dx), grad_k, grad_b


# ---------------------------------------------------------------------------
# Pointwise
# ---------------------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    """Pass gradient where ``x > 0``; an input of exactly 0 gets gradient 0."""
    _require_cache(x, "relu_backward")
    return grad_out * (x > 0)


# ---------------------------------------------------------------------------
# Max pooling
# ---------------------------------------------------------------------------

def maxpool2d(x, window, stride=None):
    """Windowed maximum over H and W.

    Returns ``(out, argmax)``; ``argmax`` holds the flat in-window index of
    the winner, first occurrence in row-major order on ties.
    """
    stride = window if stride is None else stride
    xb, single = _batched(x, 4)
    if window > xb.shape[2] or window > xb.shape[3]:
        raise DimensionError(f"pool window {window} larger than input {xb.shape[2:]}")
    win = sliding_window_view(xb, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(win.shape[:4] + (window * window,))
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool2d_backward(grad_out, argmax, input_shape, window, stride=None):
    """Scatter ``grad_out`` onto the argmax position of each window."""
    _require_cache(argmax, "maxpool2d_backward")
    stride = window if stride is None else stride
    gb, single = _batched(grad_out, 4)
    ib, _ = _batched(argmax, 4)
    shape = tuple(input_shape)
    if single:
        shape = (1,) + shape
    dx = np.zeros(shape, dtype=gb.dtype)
    ho, wo = gb.shape[2:]
    for di in range(window):
        for dj in range(window):
            hit = ib == di * window + dj
            if hit.any():
                dx[:, :, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += gb * hit
    return dx[0] if single else dx


# ---------------------------------------------------------------------------
# Fully connected
# ---------------------------------------------------------------------------

def dense(x, weights, bias):
    """``weights @ x + bias`` for ``x`` of shape [n] or [B, n]."""
    x = np.asarray(x)
    weights = np.asarray(weights)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1]:
        raise DimensionError(f"weights {weights.shape} incompatible with input {x.shape}")
    return x @ weights.T + bias


def dense_backward(grad_out, x, weights):
    _require_cache(x, "dense_backward")
    xb = np.atleast_2d(x)
    gb = np.atleast_2d(grad_out)
    grad_w = gb.T @ xb
    grad_b = gb.sum(axis=0, dtype=np.float64).astype(gb.dtype)
    dx = gb @ weights
    return (dx[0] if np.ndim(x) == 1 else dx), grad_w, grad_b


# ---------------------------------------------------------------------------
# Classification heads
# ---------------------------------------------------------------------------

def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f"labels must be integers in [0, {k}), got {labels!r}")
    return labels


def softmax_cross_entropy(logits, label):
    """Max-stabilised softmax + negative log-likelihood.

    For a batch ``[B, K]`` the loss is the batch mean.  Returns
    ``(loss, probs)`` with probs in the logits' dtype.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    lb = np.atleast_2d(logits)
    labels = _check_labels(np.atleast_1d(label), lb.shape[-1])
    logp = _log_softmax(lb)
    loss = float(-logp[np.arange(len(labels)), labels].mean())
    probs = np.exp(logp).astype(logits.dtype)
    return loss, (probs[0] if single else probs)


def softmax_cross_entropy_backward(probs, label):
    """``(probs - onehot(label)) / B``."""
    single = np.ndim(probs) == 1
    pb = np.array(np.atleast_2d(probs), copy=True)
    labels = np.atleast_1d(label)
    pb[np.arange(len(labels)), labels] -= 1
    pb /= len(labels)
    return pb[0] if single else pb


def averaged_softmax_nll(logits_list, labels):
    """NLL of the average of several softmax heads.

    Returns ``(loss, mean_probs, grads)`` where ``grads`` is one gradient
    array per head with respect to that head's logits.  With a single head
    this is ordinary softmax cross-entropy.
    """
    heads = [np.atleast_2d(np.asarray(z)) for z in logits_list]
    k = heads[0].shape[-1]
    labels = _check_labels(np.atleast_1d(labels), k)
    b = len(labels)
    rows = np.arange(b)
    logps = [_log_softmax(z) for z in heads]
    stack = np.stack([lp[rows, labels] for lp in logps])
    top = stack.max(axis=0)
    log_mean = top + np.log(np.exp(stack - top).mean(axis=0))
    loss = float(-log_mean.mean())
    probs = [np.exp(lp) for lp in logps]
    mean_probs = sum(probs) / len(probs)
    grads = []
    for lp, p in zip(logps, probs):
        # responsibility of this head for the true class
        r = np.exp(lp[rows, labels] - log_mean) / len(heads)
        g = r[:, None] * p
        g[rows, labels] -= r
        grads.append((g / b).astype(heads[0].dtype))
    return loss, mean_probs.astype(heads[0].dtype), grads


# ---------------------------------------------------------------------------
# Dropout
# ---------------------------------------------------------------------------

def dropout(x, rate, rng, training):
    """Inverted dropout; returns ``(out, mask)`` where mask is None at inference."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(np.shape(x)) >= rate
    mask = keep.astype(np.asarray(x).dtype) / (1 - rate)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    if mask is None:
        return grad_out
    return grad_out * mask


# ---------------------------------------------------------------------------
# Depthwise 3x3x3 convolution over (view, height, width)
# ---------------------------------------------------------------------------

def _check_conv3d(stack, kernels):
    if kernels.shape != (stack.shape[1], 3, 3, 3):
        raise DimensionError(
            f"kernels must be [{stack.shape[1]}, 3, 3, 3], got {kernels.shape}")


def conv3d_depthwise(stack, kernels):
    """Per-channel 3x3x3 correlation of ``[D, N, H, W]`` (or ``[B, D, N, H, W]``).

    Zero padding of one on all three axes keeps the shape.
    """
    sb, single = _batched(stack, 5)
    kernels = np.asarray(kernels)
    _check_conv3d(sb, kernels)
    _, d, n, h, w = sb.shape
    xp = np.pad(sb, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
    out = np.zeros_like(sb)
    for a in range(3):
        for i in range(3):
            for j in range(3):
                k = kernels[:, a, i, j].reshape(1, d, 1, 1, 1)
                out += k * xp[:, :, a:a + n, i:i + h, j:j + w]
    return out[0] if single else out


def conv3d_depthwise_backward(grad_out, stack, kernels):
    """Returns ``(grad_stack, grad_kernels)``."""
    _require_cache(stack, "conv3d_depthwise_backward")
    sb, single = _batched(stack, 5)
    gb, _ = _batched(grad_out, 5)
    kernels = np.asarray(kernels)
    _check_conv3d(sb, kernels)
    if gb.shape != sb.shape:
        raise DimensionError(f"grad_out shape {gb.shape} != input shape {sb.shape}")
    _, d, n, h, w = sb.shape
    xp = np.pad(sb, ((0, 0), (0, 0), (1, 1), (1, 1), (1, 1)))
    dxp = np.zeros_like(xp)
    grad_k = np.zeros_like(kernels)
    for a in range(3):
        for i in range(3):
            for j in range(3):
                grad_k[:, a, i, j] = np.einsum(
                    "bdnhw,bdnhw->d", gb, xp[:, :, a:a + n, i:i + h, j:j + w])
                k = kernels[:, a, i, j].reshape(1, d, 1, 1, 1)
                dxp[:, :, a:a + n, i:i + h, j:j + w] += k * gb
    dx = np.ascontiguousarray(dxp[:, :, 1:-1, 1:-1, 1:-1])
    return (dx[0] if single else dx), grad_k
