"""Single- and two-stream networks with optional multiview combination.

Every architecture is a set of *heads*.  A head reads one feature map at
the fusion layer (stream A, stream B, or their fusion), optionally merges
that map across views, runs its own upper trunk and classifier, and emits
logits.  The prediction is the average of the heads' softmax outputs:

==============  ==========================================
single          A
final           A, B            (prediction averaging)
intermediate    fused           (one trunk above the fusion)
dain            A, fused        (both of the above)
==============  ==========================================
"""
import numpy as np

from ..core import ops
from ..core.params import Parameter
from ..core.rng import make_rng
from ..errors import DimensionError
from . import fusion
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU, Sequential
from .spec import COMBINERS, NetworkSpec

__all__ = ["Network", "Head", "build_network", "HEAD_TAPS"]

HEAD_TAPS = {
    "single": (("a", "a"),),
    "final": (("a", "a"), ("b", "b")),
    "intermediate": (("f", "fused"),),
    "dain": (("a", "a"), ("f", "fused")),
}


def _build_layers(specs, in_shape, rng, dtype, prefix, offset):
    layers = []
    shape = in_shape
    for i, l in enumerate(specs, start=offset):
        name = f"{prefix}.{i}"
        if l.kind == "conv":
            layers.append(Conv2D(shape[0], l.size, l.kernel, l.stride, l.padding, rng, dtype, name))
            h = (shape[1] + 2 * l.padding - l.kernel) // l.stride + 1
            w = (shape[2] + 2 * l.padding - l.kernel) // l.stride + 1
            shape = (l.size, h, w)
        elif l.kind == "relu":
            layers.append(ReLU())
        elif l.kind == "pool":
            layers.append(MaxPool2D(l.window, l.window))
            shape = (shape[0], (shape[1] - l.window) // l.window + 1,
                     (shape[2] - l.window) // l.window + 1)
        elif l.kind == "dense":
            if len(shape) == 3:
                layers.append(Flatten())
                shape = (int(np.prod(shape)),)
            layers.append(Dense(shape[0], l.size, rng, dtype, name))
            shape = (l.size,)
        elif l.kind == "dropout":
            layers.append(Dropout(l.rate))
    return layers, shape


class Head:
    """Upper trunk + classifier reading one fusion-layer feature map."""

    def __init__(self, name, tap, spec, map_shape, rng, dtype):
        self.name = name
        self.tap = tap
        m = spec.fusion_layer
        layers, shape = _build_layers(spec.backbone[m + 1:], map_shape, rng, dtype,
                                      f"{name}.upper", m + 1)
        if len(shape) == 3:
            layers.append(Flatten())
            shape = (int(np.prod(shape)),)
        self.classifier = Dense(shape[0], spec.num_classes, rng, dtype,
                                f"{name}.classifier", learn_rate_scale=10.0)
        self.trunk = Sequential(layers + [self.classifier])
        self.filter3d = Parameter(fusion.center_one_kernels(map_shape[0], dtype),
                                  name=f"{name}.filter3d")
        self._combine = None

    def parameters(self):
        return self.trunk.parameters() + [self.filter3d]

    def combine(self, maps, n_views, combiner):
        if n_views == 1:
            self._combine = None
            return maps
        bn, d, h, w = maps.shape
        stack = maps.reshape(bn // n_views, n_views, d, h, w).transpose(0, 2, 1, 3, 4)
        if combiner == "pooling":
            out, idx = fusion.multiview_pool(stack, axis=2)
            self._combine = ("pooling", idx, stack.shape)
        elif combiner == "filter3d":
            out, cache = fusion.multiview_filter3d(stack, self.filter3d.value)
            self._combine = ("filter3d", cache, stack.shape)
        else:
            raise ValueError(f"combiner {combiner!r} does not merge feature maps")
        return out

    def combine_backward(self, grad):
        if self._combine is None:
            return grad
        kind, cache, shape = self._combine
        self._combine = None
        if kind == "pooling":
            g = fusion.multiview_pool_backward(grad, cache, shape[2], axis=2)
        else:
            g, gk = fusion.multiview_filter3d_backward(grad, cache, self.filter3d.value)
            self.filter3d.accumulate(gk)
        b, d, n, h, w = shape
        return g.transpose(0, 2, 1, 3, 4).reshape(b * n, d, h, w)


class Network:
    """A trainable network for a :class:`NetworkSpec`.

    Inputs are channel-first batches ``[B, C, H, W]``.  For multiview
    pooling/filtering the batch holds ``B * N`` images with the ``N`` views
    of each sample contiguous and in arc order.
    """

    def __init__(self, spec, seed=0, dtype=np.float32):
        self.spec = spec
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = make_rng(seed, "init")
        m = spec.fusion_layer
        lower = spec.backbone[:m + 1]
        layers, map_shape = _build_layers(lower, spec.input_shape, rng, dtype, "a.lower", 0)
        self.lower_a = Sequential(layers)
        self.lower_b = None
        if spec.two_stream:
            layers, _ = _build_layers(lower, spec.input_shape, rng, dtype, "b.lower", 0)
            self.lower_b = Sequential(layers)
        self.map_shape = map_shape
        self.heads = [Head(name, tap, spec, map_shape, rng, dtype)
                      for name, tap in HEAD_TAPS[spec.fusion_arch]]
        self._cache = None

    # -- parameters -------------------------------------------------------

    def parameters(self):
        params = self.lower_a.parameters()
        if self.lower_b is not None:
            params += self.lower_b.parameters()
        for h in self.heads:
            params += h.parameters()
        return params

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def astype(self, dtype):
        for p in self.parameters():
            p.astype(dtype)
        self.dtype = np.dtype(dtype)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    # -- forward / backward ----------------------------------------------

    def _check_inputs(self, xv, xd):
        xv = np.asarray(xv, dtype=self.dtype)
        if xv.ndim != 4 or tuple(xv.shape[1:]) != self.spec.input_shape:
            raise DimensionError(
                f"expected input [B, {', '.join(map(str, self.spec.input_shape))}], got {xv.shape}")
        if self.spec.two_stream:
            if xd is None:
                raise ValueError(f"{self.spec.fusion_arch} architecture needs the differential image")
            xd = np.asarray(xd, dtype=self.dtype)
            if xd.shape != xv.shape:
                raise DimensionError(f"stream shapes differ: {xv.shape} vs {xd.shape}")
        return xv, xd

    def forward(self, xv, xd=None, training=False, rng=None, n_views=1, combiner="pooling"):
        """Per-head logits for a batch.

        With ``n_views > 1`` the fusion-layer maps of each group of
        ``n_views`` consecutive images are merged by ``combiner``
        (``pooling`` or ``filter3d``) before the upper trunks run once per
        group.
        """
        xv, xd = self._check_inputs(xv, xd)
        if xv.shape[0] % n_views:
            raise DimensionError(f"batch of {xv.shape[0]} is not a multiple of {n_views} views")
        taps = {"a": self.lower_a.forward(xv, training, rng)}
        if self.spec.two_stream:
            taps["b"] = self.lower_b.forward(xd, training, rng)
            if any(h.tap == "fused" for h in self.heads):
                taps["fused"] = fusion.fuse_maps(taps["a"], taps["b"], self.spec.fusion_op)
        logits = []
        for h in self.heads:
            merged = h.combine(taps[h.tap], n_views, combiner)
            logits.append(h.trunk.forward(merged, training, rng))
        self._cache = (taps["a"], taps.get("b"))
        return logits

    def backward(self, head_grads, input_grad=True):
        """Backpropagate per-head logit gradients; returns ``(grad_xv, grad_xd)``.

        With ``input_grad=False`` only parameter gradients are needed and the
        input gradients may be ``None``.
        """
        a_map, b_map = self._cache
        self._cache = None
        g_tap = {}
        for h, g in zip(self.heads, head_grads):
            g = h.combine_backward(h.trunk.backward(g))
            g_tap[h.tap] = g_tap[h.tap] + g if h.tap in g_tap else g
        if "fused" in g_tap:
            ga, gb = fusion.fuse_maps_backward(g_tap.pop("fused"), a_map, b_map,
                                               self.spec.fusion_op)
            g_tap["a"] = g_tap["a"] + ga if "a" in g_tap else ga
            g_tap["b"] = g_tap["b"] + gb if "b" in g_tap else gb
        gxv = self.lower_a.backward(g_tap["a"], input_grad)
        gxd = self.lower_b.backward(g_tap["b"], input_grad) if self.lower_b is not None else None
        return gxv, gxd

    def loss_and_grad(self, xv, xd, y, training=True, rng=None, n_views=1, combiner="pooling",
                      input_grad=True):
        """Forward, NLL of the averaged prediction, backward.

        Parameter gradients are accumulated; returns ``(loss, probs, grad_xv, grad_xd)``.
        """
        logits = self.forward(xv, xd, training, rng, n_views, combiner)
        loss, probs, grads = ops.averaged_softmax_nll(logits, y)
        gxv, gxd = self.backward(grads, input_grad)
        return loss, probs, gxv, gxd

    def predict_proba(self, xv, xd=None, n_views=1, combiner="pooling"):
        """Averaged class probabilities (inference mode)."""
        if combiner == "voting" and n_views > 1:
            raise ValueError("voting yields classes, use predict_multiview")
        logits = self.forward(xv, xd, False, None, n_views, combiner)
        self._cache = None
        for h in self.heads:
            h._combine = None
        return fusion.average_predictions([ops.softmax(z) for z in logits]).astype(self.dtype)

    def predict_multiview(self, xv, xd, n_views, combiner):
        """Class per sample for ``B * n_views`` images (views contiguous)."""
        if combiner not in COMBINERS:
            raise ValueError(f"combiner must be one of {COMBINERS}")
        if combiner == "voting":
            probs = self.predict_proba(xv, xd)
            probs = probs.reshape(-1, n_views, probs.shape[-1])
            return np.array([fusion.multiview_vote(p) for p in probs], dtype=np.intp)
        return self.predict_proba(xv, xd, n_views, combiner).argmax(axis=1)


def build_network(spec, rng_seed=0, dtype=np.float32):
    """Construct and initialise a network; same seed gives identical weights."""
    if isinstance(spec, dict):
        spec = NetworkSpec.from_dict(spec)
    spec.validate()
    return Network(spec, seed=rng_seed, dtype=dtype)
