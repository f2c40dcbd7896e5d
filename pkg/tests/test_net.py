import numpy as np
import pytest

from dain.core import ops
from dain.errors import DimensionError, SpecError
from dain.gradsuite import network_grad_error, toy_spec
from dain.net import (
    LayerSpec,
    NetworkSpec,
    build_network,
    center_one_kernels,
    fuse_maps,
    fuse_maps_backward,
    load_checkpoint,
    multiview_filter3d,
    multiview_pool,
    multiview_pool_backward,
    multiview_vote,
    save_checkpoint,
)
from dain.net.fusion import average_predictions
from oracles import vote_reference


class TestFuseMaps:
    def test_sum(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(fuse_maps(a, b, "sum"), [[6, 8], [10, 12]])

    def test_max_idempotent_tie_to_a(self, rng):
        x = rng.standard_normal((3, 4, 4))
        np.testing.assert_array_equal(fuse_maps(x, x, "max"), x)
        ga, gb = fuse_maps_backward(np.ones_like(x), x, x, "max")
        assert ga.all() and not gb.any()

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            fuse_maps(np.zeros((2, 2)), np.zeros((2, 3)))

    @pytest.mark.parametrize("op", ["sum", "max"])
    def test_commutative(self, rng, op):
        a, b = rng.standard_normal((2, 3, 5, 5))
        np.testing.assert_array_equal(fuse_maps(a, b, op), fuse_maps(b, a, op))

    def test_elementwise_oracle(self, rng):
        a, b = rng.standard_normal((2, 2, 3, 3))
        s, m = fuse_maps(a, b, "sum"), fuse_maps(a, b, "max")
        for idx in np.ndindex(a.shape):
            assert s[idx] == a[idx] + b[idx]
            assert m[idx] == (a[idx] if a[idx] >= b[idx] else b[idx])


class TestMultiviewPool:
    def test_single_view_identity(self, rng):
        x = rng.standard_normal((2, 3, 3))
        np.testing.assert_array_equal(multiview_pool([x])[0], x)

    def test_two_views(self):
        out, _ = multiview_pool([np.array([[1.0, 5.0]]), np.array([[4.0, 2.0]])])
        np.testing.assert_array_equal(out, [[4.0, 5.0]])

    def test_identical_views(self, rng):
        x = rng.standard_normal((2, 4, 4))
        np.testing.assert_array_equal(multiview_pool([x, x, x])[0], x)

    def test_tie_routes_to_lowest_view(self):
        x = np.ones((1, 2, 2))
        out, idx = multiview_pool([x, x])
        g = multiview_pool_backward(np.ones_like(out), idx, 2)
        assert g[0].all() and not g[1].any()

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            multiview_pool([np.zeros((2, 2)), np.zeros((3, 2))])

    def test_permutation_invariant(self, rng):
        views = list(rng.standard_normal((4, 3, 5, 5)))
        perm = [views[i] for i in rng.permutation(4)]
        np.testing.assert_array_equal(multiview_pool(views)[0], multiview_pool(perm)[0])


class TestFilter3d:
    def test_center_one_equals_pool(self, rng):
        views = list(rng.standard_normal((4, 3, 5, 5)))
        out, _ = multiview_filter3d(views, center_one_kernels(3))
        np.testing.assert_array_equal(out, multiview_pool(views)[0])

    def test_single_view_center_one_identity(self, rng):
        x = rng.standard_normal((3, 4, 4))
        np.testing.assert_array_equal(multiview_filter3d([x], center_one_kernels(3))[0], x)

    def test_not_permutation_invariant(self):
        # one channel, 1x1 maps; kernel takes previous view minus current view
        k = np.zeros((1, 3, 3, 3))
        k[0, 0, 1, 1], k[0, 1, 1, 1] = 1.0, -1.0
        views = [np.full((1, 1, 1), v) for v in (3.0, 1.0, 2.0)]
        swapped = [views[1], views[0], views[2]]
        a = multiview_filter3d(views, k)[0]
        b = multiview_filter3d(swapped, k)[0]
        assert a.item() == 2.0 and b.item() == 1.0


class TestVote:
    def test_unanimous(self):
        p = np.tile(np.eye(5)[3], (4, 1))
        assert multiview_vote(p) == 3

    def test_single_view(self):
        assert multiview_vote(np.array([[0.1, 0.7, 0.2]])) == 1

    def test_spec_tie_case(self):
        # 2-2 vote, class 1 summed prob 1.7 > class 0's 1.5 (remaining mass elsewhere)
        p = np.array([[0.6, 0.4, 0.0], [0.6, 0.3, 0.1], [0.15, 0.5, 0.35], [0.15, 0.5, 0.35]])
        assert p[:, 0].sum() == pytest.approx(1.5) and p[:, 1].sum() == pytest.approx(1.7)
        assert multiview_vote(p) == 1

    def test_full_tie_lowest_index(self):
        p = np.array([[0.6, 0.4], [0.4, 0.6]])
        assert multiview_vote(p) == 0

    def test_permutation_invariant_and_oracle(self, rng):
        for _ in range(50):
            p = rng.dirichlet(np.ones(4), size=5)
            assert multiview_vote(p) == vote_reference(p)
            assert multiview_vote(p[rng.permutation(5)]) == multiview_vote(p)


def test_average_predictions():
    np.testing.assert_allclose(average_predictions([[0.6, 0.4], [0.2, 0.8]]), [0.4, 0.6])


class TestSpec:
    def test_default_fusion_layer_is_last_conv_relu(self):
        spec = NetworkSpec()
        assert spec.fusion_layer == 7 and spec.backbone[7].kind == "relu"

    def test_fusion_at_dense_rejected(self):
        with pytest.raises(SpecError):
            NetworkSpec(fusion_arch="dain", fusion_layer=9)

    def test_fusion_after_dense_relu_rejected(self):
        with pytest.raises(SpecError):
            NetworkSpec(fusion_arch="dain", fusion_layer=10)

    def test_unknown_arch(self):
        with pytest.raises(SpecError):
            NetworkSpec(fusion_arch="triple")

    def test_roundtrip(self):
        spec = NetworkSpec(fusion_arch="intermediate", fusion_op="max", num_classes=5)
        assert NetworkSpec.from_dict(spec.to_dict()) == spec


class TestBuild:
    def test_same_seed_identical(self):
        a = build_network(NetworkSpec(), 11)
        b = build_network(NetworkSpec(), 11)
        for p, q in zip(a.parameters(), b.parameters()):
            assert p.name == q.name and p.value.tobytes() == q.value.tobytes()

    def test_different_seed_differs(self):
        a = build_network(NetworkSpec(), 1).parameters()[0].value
        b = build_network(NetworkSpec(), 2).parameters()[0].value
        assert a.tobytes() != b.tobytes()

    def test_init_ranges(self):
        net = build_network(NetworkSpec(), 0)
        w = net.named_parameters()["a.lower.0.w"].value
        s = np.sqrt(6 / (3 * 9 + 16 * 9))
        assert np.abs(w).max() <= s
        assert not net.named_parameters()["a.lower.0.b"].value.any()
        assert net.named_parameters()["a.classifier.w"].learn_rate_scale == 10.0

    @pytest.mark.parametrize("arch", ["single", "final", "intermediate", "dain"])
    def test_default_toy_forward(self, arch, rng):
        net = build_network(NetworkSpec(fusion_arch=arch, num_classes=8), 0)
        x = rng.random((2, 3, 32, 32)).astype(np.float32)
        probs = net.predict_proba(x, x)
        assert probs.shape == (2, 8)
        np.testing.assert_allclose(probs.sum(axis=1), 1, atol=1e-6)
        assert net.map_shape == (32, 8, 8)

    def test_missing_differential(self, rng):
        net = build_network(NetworkSpec(fusion_arch="dain"), 0)
        with pytest.raises(ValueError):
            net.predict_proba(rng.random((1, 3, 32, 32)))


class TestForwardSemantics:
    def test_final_identical_streams(self, rng):
        net = build_network(toy_spec("final"), 3, dtype=np.float64)
        params = net.named_parameters()
        for name, p in params.items():
            if name.startswith("b."):
                p.value = params["a." + name[2:]].value.copy()
        x = rng.standard_normal((3, 3, 8, 8))
        za, zb = net.forward(x, x)
        np.testing.assert_allclose(za, zb, rtol=1e-12)
        np.testing.assert_allclose(net.predict_proba(x, x), ops.softmax(za), rtol=1e-12)

    def test_dain_straight_line(self, rng):
        net = build_network(toy_spec("dain", "max"), 5, dtype=np.float64)
        xv, xd = rng.standard_normal((2, 2, 3, 8, 8))
        a = net.lower_a.forward(xv)
        b = net.lower_b.forward(xd)
        head_a, head_f = net.heads
        pa = ops.softmax(head_a.trunk.forward(a))
        pf = ops.softmax(head_f.trunk.forward(np.maximum(a, b)))
        np.testing.assert_allclose(net.predict_proba(xv, xd), (pa + pf) / 2, rtol=1e-12)

    @pytest.mark.parametrize("arch", ["single", "final", "intermediate", "dain"])
    @pytest.mark.parametrize("combiner", ["pooling", "filter3d"])
    def test_multiview_matches_materialised_reference(self, rng, arch, combiner):
        net = build_network(toy_spec(arch), 8, dtype=np.float64)
        for h in net.heads:
            h.filter3d.value += rng.normal(0, 0.2, h.filter3d.shape)
        n = 4
        xv = rng.standard_normal((n, 3, 8, 8))
        xd = rng.standard_normal((n, 3, 8, 8))
        got = net.predict_proba(xv, xd, n_views=n, combiner=combiner)

        per_view = {"a": [], "b": [], "fused": []}
        for i in range(n):
            a = net.lower_a.forward(xv[i:i + 1])[0]
            per_view["a"].append(a)
            if net.lower_b is not None:
                b = net.lower_b.forward(xd[i:i + 1])[0]
                per_view["b"].append(b)
                per_view["fused"].append(a + b)
        probs = []
        for h in net.heads:
            if combiner == "pooling":
                merged = np.max(np.stack(per_view[h.tap]), axis=0)
            else:
                merged = multiview_filter3d(per_view[h.tap], h.filter3d.value)[0]
            probs.append(ops.softmax(h.trunk.forward(merged[None])))
        np.testing.assert_allclose(got, sum(probs) / len(probs), rtol=1e-10)

    def test_single_view_multiview_equivalences(self, rng):
        net = build_network(toy_spec("dain"), 2, dtype=np.float64)
        xv, xd = rng.standard_normal((2, 1, 3, 8, 8))
        single = net.predict_proba(xv, xd)
        # N=1 pooling pass is the single-view pass; voting returns its argmax
        np.testing.assert_array_equal(net.predict_proba(xv, xd, n_views=1), single)
        assert net.predict_multiview(xv, xd, 1, "voting")[0] == single.argmax()
        assert net.predict_multiview(xv, xd, 1, "pooling")[0] == single.argmax()


@pytest.mark.parametrize("arch,op", [("single", "sum"), ("final", "sum"),
                                     ("intermediate", "max"), ("dain", "sum"), ("dain", "max")])
@pytest.mark.parametrize("combiner,n_views", [("pooling", 1), ("voting", 3),
                                              ("pooling", 3), ("filter3d", 3)])
def test_network_gradients(arch, op, combiner, n_views):
    for seed in range(3):
        assert network_grad_error(toy_spec(arch, op), seed, n_views, combiner) < 1e-3


def test_checkpoint_roundtrip(tmp_path, rng):
    net = build_network(NetworkSpec(fusion_arch="dain", num_classes=4), 9)
    for p in net.parameters():
        p.value = p.value + rng.normal(size=p.shape).astype(np.float32)
    save_checkpoint(net, tmp_path / "ck", stage="s1")
    back, manifest = load_checkpoint(tmp_path / "ck")
    assert manifest["stage"] == "s1" and manifest["seed"] == 9
    for p, q in zip(net.parameters(), back.parameters()):
        assert p.value.tobytes() == q.value.tobytes()
    x = rng.random((1, 3, 32, 32)).astype(np.float32)
    np.testing.assert_array_equal(net.predict_proba(x, x), back.predict_proba(x, x))


def test_layer_shapes_rejects_oversized_kernel():
    with pytest.raises(SpecError):
        NetworkSpec(backbone=[LayerSpec("conv", 2, kernel=9, pad=0), LayerSpec("relu")],
                    input_shape=(3, 4, 4))
