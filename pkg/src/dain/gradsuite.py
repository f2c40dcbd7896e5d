"""Finite-difference verification of every backward pass and architecture."""
import itertools
import time

import numpy as np

from .core import ops
from .core.gradcheck import grad_check
from .core.rng import make_rng
from .net import fusion
from .net.network import Network
from .net.spec import ARCHITECTURES, FUSION_OPS, LayerSpec, NetworkSpec

__all__ = ["toy_spec", "network_grad_error", "op_cases", "run_suite"]


def toy_spec(arch="dain", op="sum", num_classes=3):
    """A tiny backbone (3x8x8 input) for fast exhaustive checks."""
    backbone = [
        LayerSpec("conv", 3), LayerSpec("relu"), LayerSpec("pool", window=2),
        LayerSpec("conv", 4), LayerSpec("relu"), LayerSpec("pool", window=2),
        LayerSpec("dense", 6), LayerSpec("relu"), LayerSpec("dropout", rate=0.5),
    ]
    return NetworkSpec(backbone=backbone, fusion_arch=arch, fusion_op=op,
                       num_classes=num_classes, input_shape=(3, 8, 8))


def network_grad_error(spec, seed, n_views=1, combiner="pooling", n_coords=4, batch=2):
    """Max relative gradient error of a float64 network over params and inputs."""
    net = Network(spec, seed=seed, dtype=np.float64)
    rng = make_rng(seed, "gradcheck-data")
    for h in net.heads:
        # perturb the centre-one filters so the 3-D filter path is exercised
        h.filter3d.value += rng.normal(0, 0.3, h.filter3d.shape)
    n_img = batch * n_views
    xv = rng.normal(size=(n_img,) + spec.input_shape)
    xd = rng.normal(size=xv.shape) if spec.two_stream else None
    y = rng.integers(0, spec.num_classes, batch)
    merge = combiner if combiner != "voting" else "pooling"
    if combiner == "voting":
        # votes are not differentiable; check the per-view predictions they count
        y = np.repeat(y, n_views)
        views = 1
    else:
        views = n_views
    params = net.parameters()

    def fn(*arrays):
        net.zero_grad()
        loss, _, gxv, gxd = net.loss_and_grad(xv, xd, y, training=True,
                                              rng=make_rng(seed, "dropout"),
                                              n_views=views, combiner=merge)
        grads = [p.gradient.copy() for p in params] + [gxv]
        if xd is not None:
            grads.append(gxd)
        return loss, grads

    def loss_only(*arrays):
        logits = net.forward(xv, xd, True, make_rng(seed, "dropout"), views, merge)
        return ops.averaged_softmax_nll(logits, y)[0]

    inputs = [p.value for p in params] + [xv] + ([xd] if xd is not None else [])
    return grad_check(fn, inputs, eps=1e-4, n_coords=n_coords, random_state=seed,
                      loss_fn=loss_only)


def op_cases():
    """``name -> fn(seed) -> error`` for each differentiable op."""

    def conv(seed):
        r = np.random.default_rng(seed)
        x, k, b = r.normal(size=(2, 3, 6, 6)), r.normal(size=(4, 3, 3, 3)), r.normal(size=4)
        w = r.normal(size=(2, 4, 3, 3))
        fn = lambda x, k, b: ((w * ops.conv2d(x, k, b, 2, 1)).sum(),
                              ops.conv2d_backward(w, x, k, 2, 1))
        return grad_check(fn, [x, k, b], eps=1e-2, random_state=seed)

    def relu(seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=40)
        x[np.abs(x) < 1e-3] = 0.5
        w = r.normal(size=40)
        return grad_check(lambda x: ((w * ops.relu(x)).sum(), [ops.relu_backward(w, x)]),
                          [x], n_coords=None, random_state=seed)

    def maxpool(seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=(2, 2, 6, 6))
        w = r.normal(size=(2, 2, 3, 3))

        def fn(x):
            out, idx = ops.maxpool2d(x, 2)
            return (w * out).sum(), [ops.maxpool2d_backward(w, idx, x.shape, 2)]

        return grad_check(fn, [x], n_coords=None, random_state=seed)

    def dense(seed):
        r = np.random.default_rng(seed)
        x, wt, b = r.normal(size=(3, 5)), r.normal(size=(4, 5)), r.normal(size=4)
        g = r.normal(size=(3, 4))
        fn = lambda x, wt, b: ((g * ops.dense(x, wt, b)).sum(), ops.dense_backward(g, x, wt))
        return grad_check(fn, [x, wt, b], n_coords=None, random_state=seed)

    def softmax_xent(seed):
        r = np.random.default_rng(seed)
        z = r.normal(size=(4, 8))
        y = r.integers(0, 8, 4)

        def fn(z):
            loss, p = ops.softmax_cross_entropy(z, y)
            return loss, [ops.softmax_cross_entropy_backward(p, y)]

        return grad_check(fn, [z], n_coords=None, random_state=seed)

    def averaged_nll(seed):
        r = np.random.default_rng(seed)
        z1, z2 = r.normal(size=(3, 5)), r.normal(size=(3, 5))
        y = r.integers(0, 5, 3)

        def fn(z1, z2):
            loss, _, grads = ops.averaged_softmax_nll([z1, z2], y)
            return loss, grads

        return grad_check(fn, [z1, z2], n_coords=None, random_state=seed)

    def dropout(seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=30)
        w = r.normal(size=30)

        def fn(x):
            out, mask = ops.dropout(x, 0.5, make_rng(seed), True)
            return (w * out).sum(), [ops.dropout_backward(w, mask)]

        return grad_check(fn, [x], n_coords=None, random_state=seed)

    def conv3d(seed):
        r = np.random.default_rng(seed)
        s, k = r.normal(size=(2, 2, 4, 3, 3)), r.normal(size=(2, 3, 3, 3))
        w = r.normal(size=s.shape)
        fn = lambda s, k: ((w * ops.conv3d_depthwise(s, k)).sum(),
                           ops.conv3d_depthwise_backward(w, s, k))
        return grad_check(fn, [s, k], n_coords=30, random_state=seed)

    def fuse(op):
        def case(seed):
            r = np.random.default_rng(seed)
            a, b = r.normal(size=(2, 3, 4, 4)), r.normal(size=(2, 3, 4, 4))
            w = r.normal(size=a.shape)
            fn = lambda a, b: ((w * fusion.fuse_maps(a, b, op)).sum(),
                               fusion.fuse_maps_backward(w, a, b, op))
            return grad_check(fn, [a, b], n_coords=None, random_state=seed)
        return case

    def pool_views(seed):
        r = np.random.default_rng(seed)
        s = r.normal(size=(4, 3, 5, 5))
        w = r.normal(size=(3, 5, 5))

        def fn(s):
            out, idx = fusion.multiview_pool(s)
            return (w * out).sum(), [fusion.multiview_pool_backward(w, idx, 4)]

        return grad_check(fn, [s], n_coords=None, random_state=seed)

    def filter_views(seed):
        r = np.random.default_rng(seed)
        s, k = r.normal(size=(4, 3, 5, 5)), r.normal(size=(3, 3, 3, 3))
        w = r.normal(size=(3, 5, 5))

        def fn(s, k):
            out, cache = fusion.multiview_filter3d(s, k)
            return (w * out).sum(), fusion.multiview_filter3d_backward(w, cache, k)

        return grad_check(fn, [s, k], n_coords=40, random_state=seed)

    return {
        "conv2d": conv, "relu": relu, "maxpool2d": maxpool, "dense": dense,
        "softmax_cross_entropy": softmax_xent, "averaged_softmax_nll": averaged_nll,
        "dropout": dropout, "conv3d_depthwise": conv3d, "fuse_sum": fuse("sum"),
        "fuse_max": fuse("max"), "multiview_pool": pool_views,
        "multiview_filter3d": filter_views,
    }


def network_cases(n_views=3):
    cases = {}
    for arch, op in itertools.product(ARCHITECTURES, FUSION_OPS):
        if arch in ("single", "final") and op == "max":
            continue  # no feature-map fusion in these architectures
        spec = toy_spec(arch, op)
        tag = f"{arch}/{op}" if arch in ("intermediate", "dain") else arch
        cases[f"net:{tag}"] = (spec, 1, "pooling")
        for comb in ("voting", "pooling", "filter3d"):
            cases[f"net:{tag}/{comb}"] = (spec, n_views, comb)
    return cases


def run_suite(seed=0, n_instances=10, log=None):
    """Run every check over ``n_instances`` seeded instances.

    Returns ``(results, seconds)`` where ``results`` maps a case name to its
    max relative error.
    """
    t0 = time.perf_counter()
    results = {}
    for name, case in op_cases().items():
        results[name] = max(case(seed * 1000 + i) for i in range(n_instances))
        if log:
            log(name, results[name])
    for name, (spec, n_views, comb) in network_cases().items():
        results[name] = max(network_grad_error(spec, seed * 1000 + i, n_views, comb)
                            for i in range(n_instances))
        if log:
            log(name, results[name])
    return results, time.perf_counter() - t0
