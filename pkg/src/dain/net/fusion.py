"""Combining two streams and combining views.

View stacks carry the view index on ``axis`` (0 for a bare stack of
per-view arrays, 2 for the batched ``[B, D, N, H, W]`` layout used inside
networks).
"""
import numpy as np

from ..core import ops
from ..errors import DimensionError

__all__ = [
    "fuse_maps",
    "fuse_maps_backward",
    "multiview_pool",
    "multiview_pool_backward",
    "multiview_filter3d",
    "multiview_filter3d_backward",
    "multiview_vote",
    "average_predictions",
    "center_one_kernels",
]


def fuse_maps(x_a, x_b, op="sum"):
    """Pointwise ``sum`` or ``max`` of two equally shaped feature maps."""
    if np.shape(x_a) != np.shape(x_b):
        raise DimensionError(f"cannot fuse maps of shapes {np.shape(x_a)} and {np.shape(x_b)}")
    if op == "sum":
        return x_a + x_b
    if op == "max":
        return np.maximum(x_a, x_b)
    raise ValueError(f"unknown fusion op {op!r}")


def fuse_maps_backward(grad, x_a, x_b, op="sum"):
    """Sum sends the gradient to both inputs; max to the larger (ties go to ``x_a``)."""
    if op == "sum":
        return grad, grad
    take_a = x_a >= x_b
    return grad * take_a, grad * ~take_a


def _as_stack(maps, axis):
    if isinstance(maps, (list, tuple)):
        if not maps:
            raise DimensionError("empty view stack")
        shapes = {np.shape(m) for m in maps}
        if len(shapes) != 1:
            raise DimensionError(f"views have differing shapes {sorted(shapes)}")
        return np.stack(maps, axis=axis)
    arr = np.asarray(maps)
    if arr.shape[axis] < 1:
        raise DimensionError("empty view stack")
    return arr


def multiview_pool(maps, axis=0):
    """Elementwise maximum across views; returns ``(pooled, argmax)``.

    The argmax is the lowest view index on ties.
    """
    stack = _as_stack(maps, axis)
    idx = stack.argmax(axis=axis)
    pooled = np.take_along_axis(stack, np.expand_dims(idx, axis), axis=axis)
    return np.squeeze(pooled, axis=axis), idx


def multiview_pool_backward(grad, argmax, n_views, axis=0):
    views = np.arange(n_views).reshape([-1 if a == axis else 1 for a in range(grad.ndim + 1)])
    hit = np.expand_dims(argmax, axis) == views
    return np.expand_dims(grad, axis) * hit


def center_one_kernels(depth, dtype=np.float64):
    k = np.zeros((depth, 3, 3, 3), dtype=dtype)
    k[:, 1, 1, 1] = 1
    return k


def multiview_filter3d(maps, kernels):
    """3x3x3 depthwise filtering over (view, H, W), then max over views.

    ``maps`` is a list/stack of ``[D, H, W]`` arrays (view axis first) or a
    batched ``[B, D, N, H, W]`` array.  Returns ``(out, cache)``.
    """
    if isinstance(maps, (list, tuple)) or np.ndim(maps) == 4:
        stack = _as_stack(maps, 0)            # [N, D, H, W]
        stack = stack.transpose(1, 0, 2, 3)   # [D, N, H, W]
        view_axis = 1
    else:
        stack = np.asarray(maps)
        view_axis = 2
    filtered = ops.conv3d_depthwise(stack, kernels)
    out, idx = multiview_pool(filtered, axis=view_axis)
    return out, (stack, idx, view_axis)


def multiview_filter3d_backward(grad, cache, kernels):
    """Returns ``(grad_maps, grad_kernels)`` in the layout the forward received."""
    stack, idx, view_axis = cache
    g_filtered = multiview_pool_backward(grad, idx, stack.shape[view_axis], axis=view_axis)
    g_stack, g_k = ops.conv3d_depthwise_backward(g_filtered, stack, kernels)
    if view_axis == 1:
        g_stack = g_stack.transpose(1, 0, 2, 3)
    return g_stack, g_k


def multiview_vote(probs):
    """Class chosen by per-view argmax votes.

    Ties go to the class with the larger summed probability, then to the
    lowest class index.  ``probs`` is ``[N, K]``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise DimensionError(f"expected [N, K] per-view probabilities, got {probs.shape}")
    k = probs.shape[1]
    counts = np.bincount(probs.argmax(axis=1), minlength=k)
    top = counts == counts.max()
    totals = np.where(top, probs.sum(axis=0), -np.inf)
    return int(np.argmax(totals))


def average_predictions(prob_list):
    return sum(np.asarray(p) for p in prob_list) / len(prob_list)
